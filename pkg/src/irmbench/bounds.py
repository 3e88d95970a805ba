"""Sample-complexity formulas and the slack threshold for the linear model.

All functions return real numbers; rounding a sample count up to an integer
is left to the caller.  Each :class:`BoundReport` carries the formula it
evaluated as a plain expression string over the symbols ``L, Lp, nu, eps,
kappa, delta, H, lam, sigma, n, Omega, C_prime, A_sup, k, eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

SQRT2 = math.sqrt(2.0)
EPS_TH_CONST = (24.0 - 16.0 * SQRT2) / 3.0


@dataclass(frozen=True)
class BoundInputs:
    L: float = 1.0
    L_prime: float = 1.0
    nu: float = 0.1
    eps: float = 0.1
    kappa: float = 0.1
    delta: float = 0.05
    H: float = 1000.0
    n: int = 10
    p: int = 1
    E: int = 20
    pi_min: float = 1.0
    omega: float = 0.5
    Omega: float = 5.0
    lambda_min: float = 0.1
    sigma: float = 1.0
    C_prime: float = 1.0
    lam: float | None = None
    A_sup: float = 1.0
    k: int = 10
    eta: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name not in ("delta", "lam") and not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")

    def with_(self, **kw) -> "BoundInputs":
        return replace(self, **kw)


@dataclass(frozen=True)
class BoundReport:
    name: str
    sample_count: float
    interval: tuple[float, float] | None = None
    expression: str = ""

    def __post_init__(self):
        if not self.sample_count > 0:
            raise ValueError(f"{self.name}: sample count must be positive, got {self.sample_count}")
        if self.interval is not None:
            lo, hi = self.interval
            if not lo <= 1.0 <= hi:
                raise ValueError(f"{self.name}: interval {self.interval} does not contain 1")


def _pos(name, v):
    if not v > 0:
        raise ValueError(f"{name} must be positive, got {v}")


def prop2_bound(inp: BoundInputs) -> BoundReport:
    """IRM approximation for an arbitrary finite class (no distributional assumptions)."""
    _pos("kappa", inp.kappa)
    arm = max(16 * inp.L_prime**4 / inp.kappa**2, 8 * inp.L**2 / inp.nu**2)
    return BoundReport("prop2", arm * math.log(4 * inp.H / inp.delta),
                       expression="Max(16*Lp**4/kappa**2, 8*L**2/nu**2)*log(4*H/delta)")


def prop3_bound(inp: BoundInputs) -> BoundReport:
    """ERM approximation of the expected-risk minimizer."""
    return BoundReport("prop3", 8 * inp.L**2 / inp.nu**2 * math.log(2 * inp.H / inp.delta),
                       expression="8*L**2/nu**2*log(2*H/delta)")


def prop4_eirm_bound(inp: BoundInputs, proof_variant: bool = False) -> BoundReport:
    """EIRM under covariate shift.

    The penalty arm uses ``log(2/delta)``; ``proof_variant=True`` uses the
    ``log(4/delta)`` that appears in the derivation instead.
    """
    c = 4 if proof_variant else 2
    risk_arm = 8 * inp.L**2 / inp.nu**2 * math.log(4 * inp.H / inp.delta)
    pen_arm = 16 * inp.L_prime**4 / inp.eps**2 * math.log(c / inp.delta)
    return BoundReport("prop4_eirm", max(risk_arm, pen_arm),
                       expression=f"Max(8*L**2/nu**2*log(4*H/delta), 16*Lp**4/eps**2*log({c}/delta))")


def epsilon_threshold(inp: BoundInputs) -> float:
    return EPS_TH_CONST * inp.pi_min / inp.E * (inp.omega * inp.lambda_min) ** 2


def tau(inp: BoundInputs) -> float:
    return math.sqrt(3 * inp.E / (2 * inp.pi_min)) / (2 * inp.omega * inp.lambda_min)


def alpha_interval(eps: float, tau_value: float) -> tuple[float, float]:
    """``[1/(1 + tau sqrt(eps)), 1/(1 - tau sqrt(eps))]``."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    r = tau_value * math.sqrt(eps)
    if r >= 1:
        raise ValueError(f"tau*sqrt(eps) = {r} >= 1; the interval is unbounded")
    return 1 / (1 + r), 1 / (1 - r)


def prop5_bound(inp: BoundInputs) -> BoundReport:
    """EIRM on the linear model; the interval is attached when ``eps < eps_th``."""
    interval = None
    if inp.eps < epsilon_threshold(inp):
        interval = alpha_interval(inp.eps, tau(inp))
    return BoundReport("prop5", 16 * inp.L_prime**4 / inp.eps**2 * math.log(2 * inp.H / inp.delta),
                       interval, expression="16*Lp**4/eps**2*log(2*H/delta)")


def lambda_threshold(inp: BoundInputs) -> float:
    return max(5 * inp.sigma**2 / (3 * epsilon_threshold(inp)), 1.0)


def irmv1_bounds(inp: BoundInputs) -> BoundReport:
    """Penalized IRMv1 on the linear model; requires ``lam > lambda_threshold``."""
    lam = inp.lam
    if lam is None:
        raise ValueError("irmv1_bounds needs inp.lam")
    lam_th = lambda_threshold(inp)
    if lam <= lam_th:
        raise ValueError(f"lam = {lam} must exceed the threshold {lam_th}")
    s4 = inp.sigma**4
    count = max(64 * inp.L_prime**4 * lam**2 / (25 * s4) * math.log(4 * inp.H / inp.delta),
                32 * inp.L**2 * lam**2 / (25 * s4) * math.log(4 / inp.delta))
    r = tau(inp) * inp.sigma * math.sqrt(5 / (3 * lam))
    return BoundReport("irmv1", count, (1 / (1 + r), 1 / (1 - r)),
                       expression="Max(64*Lp**4*lam**2/(25*sigma**4)*log(4*H/delta), "
                                  "32*L**2*lam**2/(25*sigma**4)*log(4/delta))")


def covering_bound(A_sup: float, k: int, eta: float) -> float:
    """Size of an ``eta``-cover of a ``k``-dimensional ball of squared radius ``A_sup``."""
    _pos("eta", eta)
    _pos("A_sup", A_sup)
    _pos("k", k)
    return (2 * math.sqrt(A_sup * k) / eta) ** k


def infinite_class_bound(inp: BoundInputs) -> float:
    n = inp.n
    return 32 * inp.L_prime**4 / inp.eps**2 * (
        n * math.log(16 * inp.C_prime * math.sqrt(inp.Omega * n) / inp.eps) + math.log(2 / inp.delta))


def hoeffding_samples(range_width: float, tol: float, delta: float) -> float:
    """Samples for a bounded mean to be within ``tol`` with probability ``1 - delta``."""
    for name, v in (("range_width", range_width), ("tol", tol), ("delta", delta)):
        _pos(name, v)
    return range_width**2 / (2 * tol**2) * math.log(2 / delta)


def loss_bounds(K: float, Omega: float, X_sup: float, derivative_factor: float = 1.0) -> tuple[float, float]:
    """``(L, L')`` for the square loss with ``|Y| <= K``, ``|phi|^2 <= Omega``, ``|X| <= X_sup``.

    ``L' = derivative_factor * sqrt(Omega) X_sup (sqrt(Omega) X_sup + K)``.  The
    derivative of the square loss in the scalar classifier is twice the product,
    so ``derivative_factor=2`` gives a valid supremum; the default 1 keeps the conventional
    expression.
    """
    r = math.sqrt(Omega) * X_sup
    return (K + r) ** 2, derivative_factor * r * (r + K)


# which formula fills each (setting, method) cell of the summary table
SUMMARY_CELLS = {
    ("covariate_shift", "erm"): "prop3",
    ("covariate_shift", "irm"): "prop4_eirm",
    ("confounder_anticausal", "erm"): "prop3",
    ("confounder_anticausal", "irm"): "prop5",
}


def bounds_table(inp: BoundInputs) -> list[BoundReport]:
    """One report per formula, in a fixed order ending with the covering and infinite-class counts."""
    lam = inp.lam if inp.lam is not None else 2 * lambda_threshold(inp)
    rows = [prop2_bound(inp), prop3_bound(inp), prop4_eirm_bound(inp), prop5_bound(inp),
            irmv1_bounds(inp.with_(lam=lam))]
    rows.append(BoundReport("covering", covering_bound(inp.A_sup, inp.k, inp.eta),
                            expression="(2*sqrt(A_sup*k)/eta)**k"))
    rows.append(BoundReport("infinite_class", infinite_class_bound(inp),
                            expression="32*Lp**4/eps**2*(n*log(16*C_prime*sqrt(Omega*n)/eps) + log(2/delta))"))
    return rows
