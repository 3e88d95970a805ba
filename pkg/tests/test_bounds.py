import math

import numpy as np
import pytest
import sympy as sp

from irmbench import bounds
from irmbench.bounds import BoundInputs

# fixed tuple; reference values below were computed independently in 30-digit arithmetic
FIXED = BoundInputs(L=2.0, L_prime=1.5, nu=0.3, eps=0.2, kappa=0.25, delta=0.01, H=500.0, n=4, E=8,
                    pi_min=0.5, omega=0.8, Omega=6.0, lambda_min=0.4, sigma=0.7, C_prime=1.2)

HAND = {
    "prop2": 15819.0701486071051534413174558,
    "prop3": 4093.48460976719232714309591944,
    "prop4_eirm": 10729.0926672597742718427604374,
    "prop4_proof": 12132.7157078936635234126554834,
    "prop5": 23313.6740665647125506821634787,
    "eps_th": 0.00292817707099835566756902488031,
    "tau": 7.65465544619743155686651273346,
    "lambda_th": 278.899344836487612092349116184,
    "irmv1": 2635413602.43350356575448853907,
    "irmv1_lo": 0.86604110156499585246044108343,
    "irmv1_hi": 1.18298341069113221157157492457,
    "covering": 940.604061228740389707757084687,
    "infinite": 121142.862062116855126224522522,
    "hoeffding": 1659.99575435127133628360506392,
    "alpha_lo": 0.995874950889140779173367805651,
    "alpha_hi": 1.00415936427466511470537982865,
}

REL = 1e-12


def close(a, b):
    return a == pytest.approx(b, rel=REL)


def test_prop_bounds_hand_values():
    assert close(bounds.prop2_bound(FIXED).sample_count, HAND["prop2"])
    assert close(bounds.prop3_bound(FIXED).sample_count, HAND["prop3"])
    assert close(bounds.prop4_eirm_bound(FIXED).sample_count, HAND["prop4_eirm"])
    assert close(bounds.prop4_eirm_bound(FIXED, proof_variant=True).sample_count, HAND["prop4_proof"])
    p5 = bounds.prop5_bound(FIXED)
    assert close(p5.sample_count, HAND["prop5"])
    assert p5.interval is None  # eps above threshold


def test_threshold_hand_values():
    assert close(bounds.epsilon_threshold(FIXED), HAND["eps_th"])
    assert close(bounds.tau(FIXED), HAND["tau"])
    assert close(bounds.lambda_threshold(FIXED), HAND["lambda_th"])
    lo, hi = bounds.alpha_interval(1e-4 * HAND["eps_th"], HAND["tau"])
    assert close(lo, HAND["alpha_lo"]) and close(hi, HAND["alpha_hi"])


def test_irmv1_hand_values():
    r = bounds.irmv1_bounds(FIXED.with_(lam=2000.0))
    assert close(r.sample_count, HAND["irmv1"])
    assert close(r.interval[0], HAND["irmv1_lo"]) and close(r.interval[1], HAND["irmv1_hi"])


def test_other_hand_values():
    assert close(bounds.covering_bound(2.0, 3, 0.5), HAND["covering"])
    assert close(bounds.infinite_class_bound(FIXED), HAND["infinite"])
    assert close(bounds.hoeffding_samples(3.0, 0.1, 0.05), HAND["hoeffding"])
    L, Lp = bounds.loss_bounds(1.0, 6.0, 2.0)
    assert close(L, 34.7979589711327123927891362988)
    assert close(Lp, 28.8989794855663561963945681494)
    assert close(bounds.loss_bounds(1.0, 6.0, 2.0, derivative_factor=2.0)[1], 2 * 28.8989794855663561963945681494)


def test_unit_plug_ins():
    e = math.e
    # delta = 4/e is outside (0, 1); H = 1/2 with delta = 2/e makes the log equal 1 the same way
    assert close(bounds.prop2_bound(BoundInputs(nu=1, kappa=1, H=0.5, delta=2 / e)).sample_count, 16.0)
    with pytest.raises(ValueError):
        BoundInputs(nu=1, kappa=1, H=1, delta=4 / e)
    assert close(bounds.prop3_bound(BoundInputs(nu=0.5, H=1, delta=2 / e)).sample_count, 32.0)
    # second arm dominates when nu is large
    r = bounds.prop4_eirm_bound(BoundInputs(nu=100.0, eps=0.5, H=1, delta=2 / e))
    assert close(r.sample_count, 64.0)
    assert close(bounds.covering_bound(1.0, 1, 2.0), 1.0)
    assert close(bounds.hoeffding_samples(1.0, 1 / math.sqrt(2), 2 / e), 1.0)


def test_doubling_hypotheses_adds_log2():
    a = bounds.prop2_bound(FIXED).sample_count
    b = bounds.prop2_bound(FIXED.with_(H=2 * FIXED.H)).sample_count
    arm = max(16 * 1.5**4 / 0.25**2, 8 * 4 / 0.09)
    assert close(b - a, arm * math.log(2))


def test_scaling_laws():
    base = FIXED.with_(lam=1000.0)
    assert close(bounds.irmv1_bounds(base.with_(lam=2000.0)).sample_count,
                 4 * bounds.irmv1_bounds(base).sample_count)
    assert close(bounds.hoeffding_samples(1, 0.05, 0.1), 4 * bounds.hoeffding_samples(1, 0.1, 0.1))
    lo, hi = bounds.irmv1_bounds(FIXED.with_(lam=1e16)).interval
    assert abs(lo - 1) < 1e-5 and abs(hi - 1) < 1e-5
    assert bounds.covering_bound(1, 3, 0.1) > bounds.covering_bound(1, 3, 0.2)


def test_preconditions():
    with pytest.raises(ValueError):
        BoundInputs(kappa=0.0)
    with pytest.raises(ValueError):
        BoundInputs(delta=1.5)
    with pytest.raises(ValueError, match="exceed"):
        bounds.irmv1_bounds(FIXED.with_(lam=10.0))
    with pytest.raises(ValueError):
        bounds.irmv1_bounds(FIXED)
    with pytest.raises(ValueError, match="unbounded"):
        bounds.alpha_interval(1.0, 2.0)
    with pytest.raises(ValueError):
        bounds.covering_bound(1.0, 2, 0.0)


@pytest.mark.parametrize("mu", [0.0, 0.1, 0.25, 0.5, 0.9, 0.999])
@pytest.mark.parametrize("n", [1, 3, 10])
def test_eps_threshold_identity(mu, n):
    inp = BoundInputs(E=2 * n, n=n, pi_min=1 / (2 * n), omega=0.7, lambda_min=0.3)
    eth = bounds.epsilon_threshold(inp)
    t = bounds.tau(inp)
    assert t * math.sqrt(mu * eth) == pytest.approx(math.sqrt(mu) * (math.sqrt(2) - 1), rel=1e-12, abs=1e-15)
    lo, hi = bounds.alpha_interval(mu * eth, t)
    c = math.sqrt(mu) * (math.sqrt(2) - 1)
    assert lo == pytest.approx(1 / (1 + c), rel=1e-12) and hi == pytest.approx(1 / (1 - c), rel=1e-12)


def test_quarter_threshold_by_substitution():
    # mu = 1/4: sqrt(mu)(sqrt2 - 1) = (sqrt2 - 1)/2
    lo, hi = bounds.alpha_interval(0.25 * 0.5, 1 / math.sqrt(0.5) * (math.sqrt(2) - 1))
    assert close(lo, 2 / (1 + math.sqrt(2)))
    assert close(hi, 2 / (3 - math.sqrt(2)))


def test_interval_contains_one_and_degenerates():
    for eps in (0.0, 1e-20, 1e-6, 1e-2):
        lo, hi = bounds.alpha_interval(eps, 3.0)
        assert lo <= 1 <= hi
    assert bounds.alpha_interval(0.0, 3.0) == (1.0, 1.0)


# symbolic form of each summary-table cell, written out independently
L, Lp, nu, eps, kappa, delta, H = sp.symbols("L Lp nu eps kappa delta H", positive=True)
lam, sigma, n, Omega, C_prime, A_sup, k, eta = sp.symbols("lam sigma n Omega C_prime A_sup k eta", positive=True)
SYMS = dict(L=L, Lp=Lp, nu=nu, eps=eps, kappa=kappa, delta=delta, H=H, lam=lam, sigma=sigma, n=n,
            Omega=Omega, C_prime=C_prime, A_sup=A_sup, k=k, eta=eta)
TABLE = {
    "prop2": sp.Max(16 * Lp**4 / kappa**2, 8 * L**2 / nu**2) * sp.log(4 * H / delta),
    "prop3": 8 * L**2 / nu**2 * sp.log(2 * H / delta),
    "prop4_eirm": sp.Max(8 * L**2 / nu**2 * sp.log(4 * H / delta), 16 * Lp**4 / eps**2 * sp.log(2 / delta)),
    "prop5": 16 * Lp**4 / eps**2 * sp.log(2 * H / delta),
    "irmv1": sp.Max(64 * Lp**4 * lam**2 / (25 * sigma**4) * sp.log(4 * H / delta),
                    32 * L**2 * lam**2 / (25 * sigma**4) * sp.log(4 / delta)),
    "covering": (2 * sp.sqrt(A_sup * k) / eta) ** k,
    "infinite_class": 32 * Lp**4 / eps**2 * (n * sp.log(16 * C_prime * sp.sqrt(Omega * n) / eps) + sp.log(2 / delta)),
}


def _subs(inp, lam_value):
    return {L: inp.L, Lp: inp.L_prime, nu: inp.nu, eps: inp.eps, kappa: inp.kappa, delta: inp.delta, H: inp.H,
            lam: lam_value, sigma: inp.sigma, n: inp.n, Omega: inp.Omega, C_prime: inp.C_prime,
            A_sup: inp.A_sup, k: inp.k, eta: inp.eta}


def test_table_expressions_match_symbolically():
    rows = bounds.bounds_table(FIXED)
    assert [r.name for r in rows] == list(TABLE)
    lam_value = 2 * bounds.lambda_threshold(FIXED)
    for r in rows:
        expr = sp.sympify(r.expression, locals=SYMS)
        assert sp.simplify(expr - TABLE[r.name]) == 0, r.name
        val = float(TABLE[r.name].subs(_subs(FIXED, lam_value)).evalf(30))
        assert r.sample_count == pytest.approx(val, rel=REL), r.name


def test_summary_cells_map_to_rows():
    names = {r.name for r in bounds.bounds_table(FIXED)}
    assert set(bounds.SUMMARY_CELLS.values()) <= names
    assert bounds.SUMMARY_CELLS[("covariate_shift", "erm")] == bounds.SUMMARY_CELLS[("confounder_anticausal", "erm")]


def _random_inputs(rng):
    return BoundInputs(L=rng.uniform(0.5, 3), L_prime=rng.uniform(0.5, 3), nu=rng.uniform(0.01, 1),
                       eps=rng.uniform(0.01, 1), kappa=rng.uniform(0.01, 1), delta=rng.uniform(0.01, 0.5),
                       H=rng.uniform(1, 1e4), n=int(rng.integers(1, 20)), Omega=rng.uniform(1, 10),
                       C_prime=rng.uniform(0.5, 2))


FORMULAS = {
    "prop2": lambda i: bounds.prop2_bound(i).sample_count,
    "prop3": lambda i: bounds.prop3_bound(i).sample_count,
    "prop4_eirm": lambda i: bounds.prop4_eirm_bound(i).sample_count,
    "prop5": lambda i: bounds.prop5_bound(i).sample_count,
    "infinite_class": bounds.infinite_class_bound,
}
# parameters that enter every arm of a formula, where the dependence is strict
STRICT = {"prop2": {"delta"}, "prop3": {"delta", "nu"}, "prop4_eirm": {"delta"}, "prop5": {"delta", "eps"},
          "infinite_class": {"delta", "eps"}}


def test_monotonicity_sweep():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        inp = _random_inputs(rng)
        for name, f in FORMULAS.items():
            base = f(inp)
            for param in ("delta", "nu", "eps", "kappa"):
                smaller = f(inp.with_(**{param: getattr(inp, param) * 0.7}))
                if param in STRICT[name]:
                    assert smaller > base, (name, param)
                else:
                    assert smaller >= base, (name, param)
