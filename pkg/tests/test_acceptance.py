"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or
``python3 tests/test_acceptance.py`` to print all eight without stopping.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irmbench import bounds, sem, solve
from irmbench.bench import oracles
from irmbench.bench.config import ExperimentConfig
from irmbench.bench.experiment import run_experiment, summary_table

from test_bounds import FIXED, HAND


def verdict(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)
    return ok


def _summary(**kw):
    return summary_table(run_experiment(ExperimentConfig(**kw)))


def test_criterion_1_ac_reproduction():
    t0 = time.process_time()
    s = _summary(variant="ac", sample_grid=(2000,), trials=25)
    elapsed = time.process_time() - t0
    erm, irm = s[("erm", 2000)].mean, s[("irm", 2000)].mean
    ok = 0.5 <= erm <= 1.1 and 0.35 <= irm <= 0.75 and irm < erm and elapsed < 600
    assert verdict(1, ok, f"erm={erm:.4f} in [0.5,1.1], irm={irm:.4f} in [0.35,0.75], irm<erm, "
                          f"cpu={elapsed:.0f}s<600s")


def test_criterion_2_cs_reproduction():
    s = _summary(variant="cs", trials=25)
    grid = ExperimentConfig().sample_grid
    parts, ok = [], True
    for m in ("erm", "irm"):
        means = [s[(m, n)].mean for n in grid]
        inversions = sum(b > a for a, b in zip(means, means[1:]))
        ok &= means[-1] < 0.1 and means[0] > 0.3 and inversions <= 1
        parts.append(f"{m}: N=50 {means[0]:.4f}>0.3, N=2000 {means[-1]:.4f}<0.1, inversions={inversions}")
    assert verdict(2, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_3_hb_cf_ordering():
    hb_ok = cf_ok = 0
    seeds = range(10)
    for seed in seeds:
        hb = _summary(variant="hb", sample_grid=(1000, 1500, 2000), trials=25, seed=seed)
        hb_ok += all(hb[("irm", n)].mean < hb[("erm", n)].mean for n in (1000, 1500, 2000))
        cf = _summary(variant="cf", sample_grid=(50,), trials=25, seed=seed)
        cf_ok += cf[("irm", 50)].mean < cf[("erm", 50)].mean
    ok = hb_ok >= 8 and cf_ok >= 8
    assert verdict(3, ok, f"HB irm<erm at every N>=1000 in {hb_ok}/10 seeds, CF irm<erm at N=50 in "
                          f"{cf_ok}/10 seeds (need >=8 each)")


def test_criterion_4_unbiasedness():
    t0 = time.process_time()
    worst = {v.value: float(np.max(np.abs(oracles.unbiasedness(v)[0]))) for v in sem.Variant}
    elapsed = time.process_time() - t0
    ok = max(worst.values()) < 3 and elapsed < 120
    detail = ", ".join(f"{k} max|z|={v:.2f}" for k, v in worst.items())
    assert verdict(4, ok, f"{detail} (<3); cpu={elapsed:.0f}s<120s")


def test_criterion_5_alpha_interval():
    parts, ok = [], True
    for seed in (0, 1, 2):
        r = oracles.interval_instance("ac", seed=seed)
        good = r.colinearity_residual < 1e-3 and r.in_interval
        ok &= good
        parts.append(f"seed {seed}: residual={r.colinearity_residual:.3g}<1e-3, alpha={r.alpha:.4f} in "
                     f"[{r.interval[0]:.4f},{r.interval[1]:.4f}]")
    assert verdict(5, ok, "; ".join(parts))


def test_criterion_6_erm_bias():
    ok, parts = True, []
    for seed in (0, 1, 2):
        b = oracles.bias_norms(seed)
        ok &= b["cs"] < 1e-8 and b["ac"] > 0.01 and b["hb"] > 0.01
        parts.append(f"seed {seed}: cs={b['cs']:.1e} ac={b['ac']:.3f} hb={b['hb']:.3f}")
    assert verdict(6, ok, "; ".join(parts))


def test_criterion_7_numerical_hygiene():
    checks = oracles.gradient_suite() + oracles.normal_eq_suite() + oracles.tensor_suite()
    failed = [f"{c.name}={c.value:.2e}" for c in checks if not c.passed]
    worst = max(checks, key=lambda c: c.value / c.tolerance)
    assert verdict(7, not failed, f"{len(checks)} checks, failures: {failed or 'none'}; tightest "
                                  f"{worst.name}={worst.value:.2e} vs {worst.tolerance:g}")


def test_criterion_8_bounds():
    got = {
        "prop2": bounds.prop2_bound(FIXED).sample_count,
        "prop3": bounds.prop3_bound(FIXED).sample_count,
        "prop4_eirm": bounds.prop4_eirm_bound(FIXED).sample_count,
        "prop4_proof": bounds.prop4_eirm_bound(FIXED, proof_variant=True).sample_count,
        "prop5": bounds.prop5_bound(FIXED).sample_count,
        "eps_th": bounds.epsilon_threshold(FIXED),
        "tau": bounds.tau(FIXED),
        "lambda_th": bounds.lambda_threshold(FIXED),
        "irmv1": bounds.irmv1_bounds(FIXED.with_(lam=2000.0)).sample_count,
        "irmv1_lo": bounds.irmv1_bounds(FIXED.with_(lam=2000.0)).interval[0],
        "irmv1_hi": bounds.irmv1_bounds(FIXED.with_(lam=2000.0)).interval[1],
        "covering": bounds.covering_bound(2.0, 3, 0.5),
        "infinite": bounds.infinite_class_bound(FIXED),
        "hoeffding": bounds.hoeffding_samples(3.0, 0.1, 0.05),
        "alpha_lo": bounds.alpha_interval(1e-4 * HAND["eps_th"], HAND["tau"])[0],
        "alpha_hi": bounds.alpha_interval(1e-4 * HAND["eps_th"], HAND["tau"])[1],
    }
    worst_formula = max(abs(got[k] - HAND[k]) / abs(HAND[k]) for k in HAND)
    worst_identity = 0.0
    for n in (1, 2, 5, 10):
        for mu in (0.01, 0.25, 0.5, 0.99):
            inp = bounds.BoundInputs(n=n, E=2 * n, pi_min=1.0, omega=0.6, lambda_min=0.2)
            lhs = bounds.tau(inp) * math.sqrt(mu * bounds.epsilon_threshold(inp))
            rhs = math.sqrt(mu) * (math.sqrt(2) - 1)
            worst_identity = max(worst_identity, abs(lhs - rhs) / rhs)
    ok = worst_formula < 1e-12 and worst_identity < 1e-12
    assert verdict(8, ok, f"{len(HAND)} formulas worst rel err={worst_formula:.1e}, identity worst rel "
                          f"err={worst_identity:.1e} (<1e-12)")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failures = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
