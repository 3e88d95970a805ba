"""Risks, invariance penalties and their derivatives.

Empirical quantities act on a :class:`~irmbench.sem.Dataset`; population
quantities act on per-environment :class:`Moments` with mixing weights ``pi``.
For the square loss the per-sample derivative of ``l(w * phi.x, y)`` in ``w`` at
``w = 1`` is ``g = 2u(u - y)`` with ``u = phi.x``; its expectation in
environment ``e`` is ``2 h_e(phi)`` with ``h_e = phi' S_e phi - phi' m_e``.

The paired penalty multiplies the ``g`` of rows ``2i`` and ``2i+1`` (0-based,
dataset order) within each environment, so it is an unbiased estimate of
``sum_e (n_e/N) (2 h_e)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .predictor import Predictor, as_phi
from .sem import Dataset

__all__ = [
    "Predictor", "Moments", "PenaltyEstimate", "PairedRows",
    "empirical_risk", "empirical_risk_grad", "env_gradient", "paired_rows",
    "penalty_paired", "penalty_paired_grad", "penalty_paired_hessian", "penalty_plugin",
    "analytic_moments", "spec_moments", "population_risk", "population_risk_grad",
    "population_risk_hessian", "population_penalty", "population_penalty_grad",
    "population_penalty_hessian", "env_population_gradient", "min_eigenvalue",
]


@dataclass(frozen=True, eq=False)
class Moments:
    """Second moments of one environment: E[XX'], E[XY], E[X eps], E[Y^2]."""

    sigma: np.ndarray
    m_xy: np.ndarray
    rho: np.ndarray
    y2: float

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim != 2 or sig.shape[0] != sig.shape[1]:
            raise ValueError("sigma must be square")
        if not np.allclose(sig, sig.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sig).max())):
            raise ValueError("sigma must be symmetric")
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "m_xy", np.asarray(self.m_xy, dtype=float))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "y2", float(self.y2))

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class PenaltyEstimate:
    value: float
    n_pairs: int

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class PairedRows:
    """Rows split into first (``a``) and second (``b``) members of each pair."""

    xa: np.ndarray
    ya: np.ndarray
    xb: np.ndarray
    yb: np.ndarray
    n_rows: int

    @property
    def n_pairs(self) -> int:
        return self.ya.shape[0]


# ---------------------------------------------------------------- empirical

def _env_weights(data: Dataset, weights: Mapping[int, float] | None) -> dict[int, float]:
    counts = data.per_env_counts
    if weights is None:
        return {e: c / len(data) for e, c in counts.items() if c}
    return {int(e): float(w) for e, w in weights.items()}


def empirical_risk(phi, data: Dataset, weights: Mapping[int, float] | None = None) -> float:
    """Mean squared error; pooled by default, else ``sum_e weights[e] * R_e``."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    phi = as_phi(phi)
    resid = data.y - data.x @ phi
    if weights is None:
        return float(np.mean(resid**2))
    total = 0.0
    for e, w in _env_weights(data, weights).items():
        r = resid[data.env == e]
        if r.size == 0:
            raise ValueError(f"environment {e} has no rows")
        total += w * float(np.mean(r**2))
    return total


def empirical_risk_grad(phi, data: Dataset) -> np.ndarray:
    phi = as_phi(phi)
    return -2.0 * data.x.T @ (data.y - data.x @ phi) / len(data)


def env_gradient(phi, x, y) -> float:
    """``d/dw`` of the mean of ``(y - w phi.x)^2`` at ``w = 1``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("empty environment")
    u = x @ as_phi(phi)
    return float(np.mean(2.0 * u * (u - y)))


def paired_rows(data: Dataset) -> PairedRows:
    """Consecutive within-environment pairs, environments in ``data.env_ids`` order."""
    ia, ib = [], []
    for e in data.env_ids:
        idx = np.flatnonzero(data.env == e)
        ia.append(idx[0::2])
        ib.append(idx[1::2])
    ia, ib = np.concatenate(ia), np.concatenate(ib)
    return PairedRows(data.x[ia], data.y[ia], data.x[ib], data.y[ib], len(data))


def _pairs(data) -> PairedRows:
    return data if isinstance(data, PairedRows) else paired_rows(data)


def penalty_paired(phi, data) -> PenaltyEstimate:
    """``(2/N) sum over pairs g_a g_b``; may be negative on finite samples."""
    p = _pairs(data)
    phi = as_phi(phi)
    ua, ub = p.xa @ phi, p.xb @ phi
    ga, gb = 2 * ua * (ua - p.ya), 2 * ub * (ub - p.yb)
    return PenaltyEstimate(float(2.0 * np.sum(ga * gb) / p.n_rows), p.n_pairs)


def penalty_paired_grad(phi, data) -> np.ndarray:
    p = _pairs(data)
    phi = as_phi(phi)
    ua, ub = p.xa @ phi, p.xb @ phi
    ga, gb = 2 * ua * (ua - p.ya), 2 * ub * (ub - p.yb)
    # grad g_i = 2 (2 u_i - y_i) x_i
    ca, cb = 2 * (2 * ua - p.ya), 2 * (2 * ub - p.yb)
    return 2.0 * (p.xa.T @ (gb * ca) + p.xb.T @ (ga * cb)) / p.n_rows


def penalty_paired_hessian(phi, data) -> np.ndarray:
    p = _pairs(data)
    phi = as_phi(phi)
    ua, ub = p.xa @ phi, p.xb @ phi
    ga, gb = 2 * ua * (ua - p.ya), 2 * ub * (ub - p.yb)
    A = p.xa * (2 * (2 * ua - p.ya))[:, None]
    B = p.xb * (2 * (2 * ub - p.yb))[:, None]
    cross = A.T @ B
    curv = 4 * (p.xb.T @ (p.xb * ga[:, None]) + p.xa.T @ (p.xa * gb[:, None]))
    return 2.0 * (cross + cross.T + curv) / p.n_rows


def penalty_plugin(phi, data: Dataset) -> float:
    """``sum_e (n_e/N) env_gradient_e^2``."""
    total = 0.0
    for e, c in data.per_env_counts.items():
        if c == 0:
            raise ValueError(f"environment {e} has no rows")
        x, y = data.env_rows(e)
        total += c / len(data) * env_gradient(phi, x, y) ** 2
    return total


# --------------------------------------------------------------- population

def analytic_moments(spec, e: int) -> Moments:
    """Exact moments of environment ``e`` from the spec's latent linear model."""
    lat = spec.latent_model(e)
    A = lat.A_x
    sigma = A @ A.T
    return Moments(0.5 * (sigma + sigma.T), A @ lat.a_y, A @ lat.a_eps, float(lat.a_y @ lat.a_y))


def spec_moments(spec) -> tuple[list[Moments], np.ndarray]:
    """Moments of every environment and the mixing weights, in spec order."""
    return [analytic_moments(spec, e) for e in spec.env_ids], spec.mix_probs


def _check(phi, moments: Sequence[Moments], pi) -> tuple[np.ndarray, np.ndarray]:
    phi = as_phi(phi)
    pi = np.asarray(pi, dtype=float)
    if len(moments) != pi.shape[0]:
        raise ValueError("need one mixing weight per environment")
    for m in moments:
        if m.n != phi.shape[0]:
            raise ValueError(f"moments have dimension {m.n}, predictor {phi.shape[0]}")
    return phi, pi


def population_risk(phi, moments: Sequence[Moments], pi) -> float:
    phi, pi = _check(phi, moments, pi)
    return float(sum(p * (m.y2 - 2 * phi @ m.m_xy + phi @ m.sigma @ phi) for p, m in zip(pi, moments)))


def population_risk_grad(phi, moments: Sequence[Moments], pi) -> np.ndarray:
    phi, pi = _check(phi, moments, pi)
    return sum(p * 2 * (m.sigma @ phi - m.m_xy) for p, m in zip(pi, moments))


def population_risk_hessian(moments: Sequence[Moments], pi) -> np.ndarray:
    return sum(p * 2 * m.sigma for p, m in zip(pi, moments))


def env_population_gradient(phi, m: Moments) -> float:
    """Population ``d/dw R_e(w phi)`` at ``w = 1``: ``2 (phi' S phi - phi' m)``."""
    phi = as_phi(phi)
    return float(2 * (phi @ m.sigma @ phi - phi @ m.m_xy))


def population_penalty(phi, moments: Sequence[Moments], pi) -> float:
    phi, pi = _check(phi, moments, pi)
    return float(sum(p * env_population_gradient(phi, m) ** 2 for p, m in zip(pi, moments)))


def population_penalty_grad(phi, moments: Sequence[Moments], pi) -> np.ndarray:
    phi, pi = _check(phi, moments, pi)
    out = np.zeros_like(phi)
    for p, m in zip(pi, moments):
        h = phi @ m.sigma @ phi - phi @ m.m_xy
        out += 8 * p * h * (2 * m.sigma @ phi - m.m_xy)
    return out


def population_penalty_hessian(phi, moments: Sequence[Moments], pi) -> np.ndarray:
    phi, pi = _check(phi, moments, pi)
    out = np.zeros((phi.shape[0], phi.shape[0]))
    for p, m in zip(pi, moments):
        h = phi @ m.sigma @ phi - phi @ m.m_xy
        dh = 2 * m.sigma @ phi - m.m_xy
        out += 8 * p * (np.outer(dh, dh) + 2 * h * m.sigma)
    return out


def min_eigenvalue(moments: Sequence[Moments]) -> float:
    """Smallest eigenvalue over all environment second-moment matrices."""
    return float(min(np.linalg.eigvalsh(m.sigma)[0] for m in moments))
