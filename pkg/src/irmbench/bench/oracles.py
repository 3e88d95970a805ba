"""Verification suites: each check compares a library result with an independent oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import poly, risk, sem, solve

SUITES = ("tensor", "gradient", "estimator", "interval", "bias", "normal_eq")


@dataclass(frozen=True)
class OracleCheck:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<"

    def row(self) -> list[str]:
        return [self.suite, self.name, repr(float(self.value)), self.relation, repr(float(self.tolerance)),
                "pass" if self.passed else "fail"]


def _below(suite, name, value, tol) -> OracleCheck:
    return OracleCheck(suite, name, float(value), tol, bool(value < tol), "<")


def _above(suite, name, value, tol) -> OracleCheck:
    return OracleCheck(suite, name, float(value), tol, bool(value > tol), ">")


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def central_diff(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ------------------------------------------------------------------ tensor

def tensor_suite(seed: int = 0) -> list[OracleCheck]:
    rng = np.random.default_rng(seed)
    worst_mp = 0.0
    for _ in range(50):
        A, B = (rng.standard_normal((int(rng.integers(1, 4)), int(rng.integers(1, 4)))) for _ in range(2))
        C = rng.standard_normal((A.shape[1], int(rng.integers(1, 4))))
        D = rng.standard_normal((B.shape[1], int(rng.integers(1, 4))))
        lhs, rhs = np.kron(A, B) @ np.kron(C, D), np.kron(A @ C, B @ D)
        worst_mp = max(worst_mp, np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
    worst_lift = 0.0
    for _ in range(200):
        m, p = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        S, z = rng.standard_normal((m, m)), rng.standard_normal(m)
        fm = poly.PolyFeatureMap(m, p)
        lhs, rhs = poly.lift_scrambler(S, p) @ poly.zeta(fm, z), poly.zeta(fm, S @ z)
        worst_lift = max(worst_lift, np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
    worst_unscr = 0.0
    for _ in range(50):
        c, d = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        S = rng.standard_normal((c + d, c + d))
        S_t = np.linalg.inv(S)[:c]
        z = rng.standard_normal(c + d)
        fz, fx = poly.PolyFeatureMap(c, 2), poly.PolyFeatureMap(c + d, 2)
        lhs = poly.lift_unscrambler(S_t, 2) @ poly.zeta(fx, S @ z)
        worst_unscr = max(worst_unscr, np.abs(lhs - poly.zeta(fz, z[:c])).max())
    worst_norm = 0.0
    for _ in range(20):
        S = rng.standard_normal((3, 3))
        base = poly.operator_norm(S)
        for i in (1, 2, 3):
            worst_norm = max(worst_norm, abs(poly.operator_norm(poly.kron_power(S, i)) - base**i) / base**i)
    return [
        _below("tensor", "kron_mixed_product", worst_mp, 1e-10),
        _below("tensor", "lift_scrambler_commutes_with_zeta", worst_lift, 1e-10),
        _below("tensor", "lift_unscrambler_recovers_z1", worst_unscr, 1e-9),
        _below("tensor", "operator_norm_of_kron_power", worst_norm, 1e-8),
    ]


# ---------------------------------------------------------------- gradient

def gradient_suite(seed: int = 0) -> list[OracleCheck]:
    rng = np.random.default_rng(seed)
    out = []
    worst = {k: 0.0 for k in ("env_gradient", "penalty_paired_grad", "penalty_paired_hessian",
                              "population_risk_grad", "population_penalty_grad",
                              "population_penalty_hessian", "irmv1_objective_grad")}
    for i, v in enumerate(sem.Variant):
        spec = sem.draw_regression_sem(v, 3, seed + i)
        data = sem.sample_mixture(spec, 200, seed + i)
        M, pi = risk.spec_moments(spec)
        for _ in range(5):
            phi = rng.standard_normal(spec.n) * 0.5
            x, y = data.env_rows(0)
            fd = (np.mean((y - (1 + 1e-5) * x @ phi) ** 2) - np.mean((y - (1 - 1e-5) * x @ phi) ** 2)) / 2e-5
            worst["env_gradient"] = max(worst["env_gradient"], abs(risk.env_gradient(phi, x, y) - fd) / abs(fd))
            pr = risk.paired_rows(data)
            checks = {
                "penalty_paired_grad": (risk.penalty_paired_grad(phi, pr),
                                        central_diff(lambda p: risk.penalty_paired(p, pr).value, phi)),
                "penalty_paired_hessian": (risk.penalty_paired_hessian(phi, pr),
                                           np.array([central_diff(lambda p: risk.penalty_paired_grad(p, pr)[j], phi)
                                                     for j in range(spec.n)])),
                "population_risk_grad": (risk.population_risk_grad(phi, M, pi),
                                         central_diff(lambda p: risk.population_risk(p, M, pi), phi)),
                "population_penalty_grad": (risk.population_penalty_grad(phi, M, pi),
                                            central_diff(lambda p: risk.population_penalty(p, M, pi), phi)),
                "population_penalty_hessian": (risk.population_penalty_hessian(phi, M, pi),
                                               np.array([central_diff(
                                                   lambda p: risk.population_penalty_grad(p, M, pi)[j], phi)
                                                   for j in range(spec.n)])),
                "irmv1_objective_grad": (solve.irmv1_objective_grad(phi, data, 0.1), central_diff(
                    lambda p: risk.empirical_risk(p, data) + 0.1 * risk.penalty_paired(p, pr).value, phi)),
            }
            for k, (a, b) in checks.items():
                worst[k] = max(worst[k], rel_err(a, b))
    for k, v in worst.items():
        out.append(_below("gradient", k, v, 1e-6))
    return out


# --------------------------------------------------------------- estimator

def unbiasedness(variant, n_phi: int = 5, n_datasets: int = 200, N: int = 1000, seed: int = 0):
    """``(z_scores, phis)``: standardized gaps between MC mean of the paired penalty and the population value."""
    spec = sem.draw_regression_sem(variant, 5, seed)
    M, pi = risk.spec_moments(spec)
    rng = np.random.default_rng(seed)
    w_star = sem.true_invariant_predictor(spec).phi
    phis = [w_star + 0.5 * rng.standard_normal(spec.n) / math.sqrt(spec.n) for _ in range(n_phi)]
    counts = {e: int(round(N * p)) for e, p in zip(spec.env_ids, pi)}
    vals = np.empty((n_datasets, n_phi))
    for j in range(n_datasets):
        pr = risk.paired_rows(sem.sample_envs(spec, counts, seed * 100_000 + j + 1))
        for k, phi in enumerate(phis):
            vals[j, k] = risk.penalty_paired(phi, pr).value
    pi_hat = np.array([counts[e] for e in spec.env_ids]) / sum(counts.values())
    target = np.array([risk.population_penalty(phi, M, pi_hat) for phi in phis])
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_datasets)
    return (vals.mean(axis=0) - target) / se, phis


def estimator_suite(seed: int = 0) -> list[OracleCheck]:
    out = []
    for v in sem.Variant:
        z, _ = unbiasedness(v, seed=seed)
        out.append(_below("estimator", f"paired_unbiased_{v.value}_max_abs_z", float(np.max(np.abs(z))), 3.0))
    z = estimator_gap_z(sem.draw_regression_sem("cf", 5, seed), 100_000, seed)
    out.append(_below("estimator", "plugin_vs_paired_combined_se", abs(z), 5.0))
    return out


def estimator_gap_z(spec, N: int, seed: int) -> float:
    """Plugin minus paired penalty on one sample, in units of their combined standard error."""
    data = sem.sample_mixture(spec, N, seed)
    phi = sem.true_invariant_predictor(spec).phi + 0.1
    pr = risk.paired_rows(data)
    ua, ub = pr.xa @ phi, pr.xb @ phi
    prod = 2 * ua * (ua - pr.ya) * 2 * ub * (ub - pr.yb)
    var_paired, var_plugin = 0.0, 0.0
    start = 0
    for e, c in data.per_env_counts.items():
        k = c // 2
        block = prod[start:start + k]
        start += k
        var_paired += (2 * k / N) ** 2 * block.var(ddof=1) / k
        x, y = data.env_rows(e)
        u = x @ phi
        g = 2 * u * (u - y)
        # delta method for (c/N) * mean(g)^2
        var_plugin += (c / N) ** 2 * (2 * g.mean()) ** 2 * g.var(ddof=1) / c
    gap = risk.penalty_plugin(phi, data) - risk.penalty_paired(phi, pr).value
    return gap / math.sqrt(var_paired + var_plugin)


# ---------------------------------------------------------------- interval

def interval_instance(variant="ac", s: int = 5, seed: int = 0, mu: float = 0.25):
    """Population solve with ``2n`` environments, noise scales geometric in [0.2, 2]."""
    spec = sem.draw_regression_sem(variant, s, seed)
    spec = spec.with_envs(sem.make_envs(np.geomspace(0.2, 2.0, 2 * spec.n)))
    M, pi = risk.spec_moments(spec)
    w_star = sem.true_invariant_predictor(spec).phi
    eps_th, _ = solve.population_threshold_constants(M, pi, solve.default_shell(w_star))
    return solve.irm_population_constrained(M, pi, mu * eps_th, w_star)


def interval_suite(seed: int = 0) -> list[OracleCheck]:
    out = []
    for v in ("ac", "hb"):
        res = interval_instance(v, seed=seed)
        lo, hi = res.interval
        dist = max(lo - res.alpha, res.alpha - hi, 0.0)
        out.append(OracleCheck("interval", f"{v}_alpha_outside_interval_by", dist, 0.0, dist <= 0.0, "<="))
        out.append(_below("interval", f"{v}_colinearity_residual", res.colinearity_residual, 1e-3))
        out.append(_below("interval", f"{v}_constraint_excess", max(res.penalty / res.eps - 1, 0.0), 1e-9))
    return out


# -------------------------------------------------------------------- bias

def bias_norms(seed: int = 0, s: int = 5) -> dict[str, float]:
    out = {}
    for v in sem.Variant:
        spec = sem.draw_regression_sem(v, s, seed)
        M, pi = risk.spec_moments(spec)
        w = sem.true_invariant_predictor(spec).phi
        out[v.value] = float(np.linalg.norm(solve.erm_population(M, pi).phi - w))
    return out


def bias_suite(seed: int = 0) -> list[OracleCheck]:
    b = bias_norms(seed)
    return [_below("bias", "cs_erm_bias_norm", b["cs"], 1e-10),
            _above("bias", "ac_erm_bias_norm", b["ac"], 0.01),
            _above("bias", "hb_erm_bias_norm", b["hb"], 0.01)]


# --------------------------------------------------------------- normal eq

def normal_eq_suite(seed: int = 0) -> list[OracleCheck]:
    rng = np.random.default_rng(seed)
    worst_res, worst_qr = 0.0, 0.0
    for i, v in enumerate(sem.Variant):
        for N in (50, 500, 2000):
            data = sem.sample_mixture(sem.draw_regression_sem(v, 5, seed + i), N, seed + N)
            phi = solve.erm_closed_form(data).phi
            G, b = data.x.T @ data.x, data.x.T @ data.y
            worst_res = max(worst_res, solve.normal_residual(G, b, phi))
            Q, R = np.linalg.qr(data.x)
            worst_qr = max(worst_qr, rel_err(phi, np.linalg.solve(R, Q.T @ data.y)))
    for _ in range(20):
        X, y = rng.standard_normal((60, 8)), rng.standard_normal(60)
        data = sem.Dataset(X, y, np.zeros(60, int))
        phi = solve.erm_closed_form(data).phi
        worst_res = max(worst_res, solve.normal_residual(X.T @ X, X.T @ y, phi))
        Q, R = np.linalg.qr(X)
        worst_qr = max(worst_qr, rel_err(phi, np.linalg.solve(R, Q.T @ y)))
    return [_below("normal_eq", "normal_equation_residual", worst_res, 1e-8),
            _below("normal_eq", "qr_reference_relative_gap", worst_qr, 1e-9)]


_RUNNERS = {
    "tensor": tensor_suite,
    "gradient": gradient_suite,
    "estimator": estimator_suite,
    "interval": interval_suite,
    "bias": bias_suite,
    "normal_eq": normal_eq_suite,
}


def run_oracles(selection=None, seed: int = 0) -> list[OracleCheck]:
    names = SUITES if not selection else tuple(selection)
    unknown = set(names) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites {sorted(unknown)}; choose from {list(SUITES)}")
    return [c for name in names for c in _RUNNERS[name](seed)]
