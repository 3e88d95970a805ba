"""ERM and IRM solvers.

* :func:`erm_closed_form` / :func:`erm_population` solve the normal equations.
* :func:`irmv1_train` minimizes ``R + lam * R'`` (paired penalty) by full-batch
  gradient descent; :func:`irmv1_path` runs a whole lambda grid at once.
* :func:`select_penalty` picks lambda by held-out risk on training environments.
* :func:`eirm_constrained` and :func:`irm_population_constrained` solve
  ``min R subject to R' <= eps`` by a lambda homotopy: double lambda from 1
  until the penalized optimum is feasible, then bisect until the penalty is
  within 5% of ``eps``.  The penalized problems are solved by damped Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from . import bounds
from .predictor import Predictor, as_phi
from .risk import (Moments, PairedRows, empirical_risk, empirical_risk_grad, min_eigenvalue,
                   paired_rows, penalty_paired, penalty_paired_grad, penalty_paired_hessian,
                   population_penalty, population_penalty_grad, population_penalty_hessian,
                   population_risk, population_risk_grad, population_risk_hessian)
from .rng import SPLIT, substream
from .sem import Dataset

DEFAULT_LAMBDA_GRID = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-8
LAMBDA_CAP = 1e12
TIGHTNESS = 0.05


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


class InfeasibleError(SolverError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 50_000
    lr: float = 1e-3
    lam: float = 0.0
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    val_fraction: float = 0.2
    seed: int = 0
    tol: float = 1e-7
    init: str = "zero"
    divergence_limit: float = 1e12
    check_every: int = 100

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if any(l < 0 for l in self.lambda_grid):
            raise ValueError("lambda grid values must be >= 0")
        if self.init not in ("zero", "erm"):
            raise ValueError("init must be 'zero' or 'erm'")
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["lambda"] = d.pop("lam")
        d["lambda_grid"] = list(d["lambda_grid"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown training options {sorted(extra)}")
        if "lambda_grid" in d:
            d["lambda_grid"] = tuple(d["lambda_grid"])
        return cls(**d)


@dataclass(frozen=True)
class SolveResult:
    predictor: Predictor
    final_risk: float
    final_penalty: float
    lambda_used: float
    converged: bool
    steps: int = 0
    diverged: bool = False
    trace: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.final_risk < 0:
            raise ValueError("final_risk must be >= 0")


# --------------------------------------------------------------------- ERM

def _solve_normal(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularSystemError(f"Gram matrix is singular or ill-conditioned (cond = {cond:.3g})")
    phi = np.linalg.solve(G, b)
    phi = phi + np.linalg.solve(G, b - G @ phi)  # one step of iterative refinement
    if normal_residual(G, b, phi) >= RESIDUAL_LIMIT:
        raise SingularSystemError("normal equations not solved to tolerance")
    return phi


def normal_residual(G, b, phi) -> float:
    """``|G phi - b| / (|G| |phi| + |b|)``."""
    scale = np.linalg.norm(G, 2) * np.linalg.norm(phi) + np.linalg.norm(b)
    return float(np.linalg.norm(G @ phi - b) / scale) if scale > 0 else 0.0


def erm_closed_form(data: Dataset) -> Predictor:
    """Pooled least squares ``(X'X) phi = X'y``."""
    return Predictor(_solve_normal(data.x.T @ data.x, data.x.T @ data.y))


def erm_population(moments: Sequence[Moments], pi) -> Predictor:
    """``(sum pi_e S_e)^-1 sum pi_e m_e``."""
    G = sum(p * m.sigma for p, m in zip(pi, moments))
    b = sum(p * m.m_xy for p, m in zip(pi, moments))
    return Predictor(_solve_normal(G, b))


# ------------------------------------------------------- IRMv1 descent

def _pair_grad(P: np.ndarray, pr: PairedRows) -> np.ndarray:
    ua, ub = pr.xa @ P, pr.xb @ P
    ya, yb = pr.ya[:, None], pr.yb[:, None]
    ga, gb = 2 * ua * (ua - ya), 2 * ub * (ub - yb)
    return 2.0 * (pr.xa.T @ (gb * 2 * (2 * ua - ya)) + pr.xb.T @ (ga * 2 * (2 * ub - yb))) / pr.n_rows


def _pair_value(P: np.ndarray, pr: PairedRows) -> np.ndarray:
    ua, ub = pr.xa @ P, pr.xb @ P
    ga, gb = 2 * ua * (ua - pr.ya[:, None]), 2 * ub * (ub - pr.yb[:, None])
    return 2.0 * np.sum(ga * gb, axis=0) / pr.n_rows


def irmv1_objective_grad(phi, data: Dataset, lam: float) -> np.ndarray:
    """Analytic gradient of ``R + lam * R'`` (what the descent uses)."""
    pr = paired_rows(data)
    P = np.asarray(as_phi(phi), dtype=float).reshape(-1, 1)
    G, b = data.x.T @ data.x, data.x.T @ data.y
    return (2 * (G @ P - b[:, None]) / len(data) + lam * _pair_grad(P, pr))[:, 0]


def irmv1_path(data: Dataset, lambdas: Sequence[float], cfg: TrainConfig = TrainConfig()) -> list[SolveResult]:
    """Gradient descent for every lambda at once; columns stop when their gradient norm < tol."""
    lams = np.asarray(lambdas, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("need at least one lambda")
    if np.any(lams < 0):
        raise ValueError("lambda must be >= 0")
    pr = paired_rows(data)
    N, n, K = len(data), data.n_features, lams.size
    G, b, yy = data.x.T @ data.x, data.x.T @ data.y, float(data.y @ data.y)

    if cfg.init == "erm":
        phi0 = erm_closed_form(data).phi
    else:
        phi0 = np.zeros(n)
    Phi = np.repeat(phi0[:, None], K, axis=1)
    steps = np.full(K, cfg.steps)
    converged = np.zeros(K, bool)
    diverged = np.zeros(K, bool)

    act = np.arange(K)
    P = Phi.copy()
    safe = P.copy()
    lam_a = lams.copy()
    # overflow is caught by the divergence check below
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.steps + 1):
            grad = 2 * (G @ P - b[:, None]) / N + lam_a * _pair_grad(P, pr)
            gn = np.sqrt(np.sum(grad * grad, axis=0))
            done = gn < cfg.tol
            bad = ~np.isfinite(gn)
            if t % cfg.check_every == 0 or bad.any():
                obj = (yy - 2 * b @ P + np.sum(P * (G @ P), axis=0)) / N + lam_a * _pair_value(P, pr)
                bad |= ~np.isfinite(obj) | (obj > cfg.divergence_limit)
                safe = np.where(bad, safe, P)
            stop = done | bad
            if stop.any():
                idx = act[stop]
                Phi[:, idx] = np.where(bad[stop], safe[:, stop], P[:, stop])
                converged[idx] = done[stop] & ~bad[stop]
                diverged[idx] = bad[stop]
                steps[idx] = t
                keep = ~stop
                act, P, safe, lam_a, grad = act[keep], P[:, keep], safe[:, keep], lam_a[keep], grad[:, keep]
                if act.size == 0:
                    break
            if t == cfg.steps:
                Phi[:, act] = P
                break
            P = P - cfg.lr * grad

    out = []
    for k in range(K):
        phi = Phi[:, k]
        out.append(SolveResult(Predictor(phi), empirical_risk(phi, data), penalty_paired(phi, pr).value,
                               float(lams[k]), bool(converged[k]), int(steps[k]), bool(diverged[k])))
    return out


def irmv1_train(data: Dataset, cfg: TrainConfig = TrainConfig(), lam: float | None = None) -> SolveResult:
    """IRMv1 at a single lambda (``cfg.lam`` unless given)."""
    lam = cfg.lam if lam is None else lam
    res = irmv1_path(data, [lam], cfg)[0]
    if res.diverged:
        raise DivergenceError(f"objective exceeded {cfg.divergence_limit:g} (lambda = {lam}, "
                              f"step {res.steps}, last finite coefficients {res.predictor.phi.tolist()})")
    return res


# ------------------------------------------------------ penalty selection

def split_dataset(data: Dataset, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of a per-environment train/validation split.

    Each environment keeps ``2 * round((1 - f) n_e / 2)`` training rows (an even
    count, so pairs stay intact) chosen at random; training rows keep dataset
    order.
    """
    tr, va = [], []
    for e in data.env_ids:
        idx = np.flatnonzero(data.env == e)
        n_e = idx.size
        if n_e == 0:
            continue
        n_tr = 2 * int(round((1 - val_fraction) * n_e / 2))
        if n_tr < 2 or n_tr >= n_e:
            raise ValueError(f"split of environment {e} ({n_e} rows) leaves an empty or odd part")
        val_pos = substream(seed, SPLIT, e).choice(n_e, n_e - n_tr, replace=False)
        mask = np.zeros(n_e, bool)
        mask[val_pos] = True
        tr.append(idx[~mask])
        va.append(idx[mask])
    return np.sort(np.concatenate(tr)), np.sort(np.concatenate(va))


def select_penalty(data: Dataset, cfg: TrainConfig = TrainConfig()) -> tuple[float, SolveResult]:
    """Train on the split for every grid value, return the lambda with least validation risk.

    The returned model is the one trained on the training split (no refit).
    Ties go to the smaller lambda; diverged runs count as infinite risk.
    """
    grid = sorted(set(cfg.lambda_grid))
    if not grid:
        raise ValueError("lambda grid is empty")
    tr, va = split_dataset(data, cfg.val_fraction, cfg.seed)
    train, val = data.take(tr), data.take(va)
    results = irmv1_path(train, grid, cfg)
    val_risk = [math.inf if r.diverged else empirical_risk(r.predictor, val) for r in results]
    best = int(np.argmin(val_risk))
    r = results[best]
    trace = tuple((lam, vr, res.final_penalty) for lam, vr, res in zip(grid, val_risk, results))
    return grid[best], SolveResult(r.predictor, r.final_risk, r.final_penalty, r.lambda_used,
                                   r.converged, r.steps, r.diverged, trace)


# ---------------------------------------------------------- constrained IRM

class _Problem:
    """Risk and penalty with gradients and Hessians."""

    def risk(self, phi): ...
    def risk_grad(self, phi): ...
    def risk_hess(self, phi): ...
    def pen(self, phi): ...
    def pen_grad(self, phi): ...
    def pen_hess(self, phi): ...
    def erm(self) -> np.ndarray: ...


class _Empirical(_Problem):
    def __init__(self, data: Dataset):
        self.data, self.pairs = data, paired_rows(data)
        self.G = 2 * data.x.T @ data.x / len(data)

    def risk(self, phi):
        return empirical_risk(phi, self.data)

    def risk_grad(self, phi):
        return empirical_risk_grad(phi, self.data)

    def risk_hess(self, phi):
        return self.G

    def pen(self, phi):
        return penalty_paired(phi, self.pairs).value

    def pen_grad(self, phi):
        return penalty_paired_grad(phi, self.pairs)

    def pen_hess(self, phi):
        return penalty_paired_hessian(phi, self.pairs)

    def erm(self):
        return erm_closed_form(self.data).phi


class _Population(_Problem):
    def __init__(self, moments, pi):
        self.m, self.pi = list(moments), np.asarray(pi, dtype=float)
        self.G = population_risk_hessian(self.m, self.pi)

    def risk(self, phi):
        return population_risk(phi, self.m, self.pi)

    def risk_grad(self, phi):
        return population_risk_grad(phi, self.m, self.pi)

    def risk_hess(self, phi):
        return self.G

    def pen(self, phi):
        return population_penalty(phi, self.m, self.pi)

    def pen_grad(self, phi):
        return population_penalty_grad(phi, self.m, self.pi)

    def pen_hess(self, phi):
        return population_penalty_hessian(phi, self.m, self.pi)

    def erm(self):
        return erm_population(self.m, self.pi).phi


def _project(phi, shell):
    if shell is None:
        return phi
    omega, Omega = shell
    sq = float(phi @ phi)
    if sq < omega:
        return phi * math.sqrt(omega / sq) if sq > 0 else phi
    if sq > Omega:
        return phi * math.sqrt(Omega / sq)
    return phi


def _projected_gradient(f, phi, fx, g, curvature, shell):
    t = 1.0 / max(curvature, 1e-300)
    while t * np.linalg.norm(g) > 1e-16 * max(1.0, np.linalg.norm(phi)):
        cand = _project(phi - t * g, shell)
        fc = f(cand)
        if fc < fx:
            return cand, fc
        t *= 0.5
    return phi, fx


def _newton(prob: _Problem, lam: float, phi, shell=None, max_iter: int = 200) -> np.ndarray:
    """Damped Newton on ``risk + lam * pen`` with |eigenvalue| regularization."""
    f = lambda p: prob.risk(p) + lam * prob.pen(p)
    phi = _project(np.array(phi, dtype=float), shell)
    fx = f(phi)
    for _ in range(max_iter):
        g = prob.risk_grad(phi) + lam * prob.pen_grad(phi)
        H = prob.risk_hess(phi) + lam * prob.pen_hess(phi)
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        floor = 1e-14 * max(np.abs(w).max(), 1e-300)
        step = -V @ ((V.T @ g) / np.maximum(np.abs(w), floor))
        decrement = -float(g @ step)
        if decrement <= 1e-28 * max(1.0, abs(fx)):
            break
        t = 1.0
        while True:
            cand = _project(phi + t * step, shell)
            fc = f(cand)
            if fc <= fx - 1e-4 * t * decrement or t < 1e-12:
                break
            t *= 0.5
        if fc >= fx and shell is not None:
            # the projected Newton step can stall on the shell boundary
            cand, fc = _projected_gradient(f, phi, fx, g, np.abs(w).max(), shell)
        if fc >= fx:
            break
        moved = np.linalg.norm(cand - phi)
        phi, fx = cand, fc
        if moved <= 1e-16 * max(1.0, np.linalg.norm(phi)):
            break
    return phi


def _homotopy(prob: _Problem, eps: float, shell, phi0=None):
    """Returns ``(phi, lam, schedule)``; schedule rows are ``(lam, penalty, risk)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    phi = prob.erm() if phi0 is None else np.asarray(phi0, dtype=float)
    phi = _project(phi, shell)
    schedule = [(0.0, prob.pen(phi), prob.risk(phi))]
    if shell is not None:
        phi = _newton(prob, 0.0, phi, shell)
        schedule[0] = (0.0, prob.pen(phi), prob.risk(phi))
    if schedule[0][1] <= eps:
        return phi, 0.0, schedule

    lo, lo_phi, lam = 0.0, phi, 1.0
    while True:
        cand = _newton(prob, lam, phi, shell)
        pen = prob.pen(cand)
        schedule.append((lam, pen, prob.risk(cand)))
        if pen <= eps:
            hi, hi_phi, hi_pen = lam, cand, pen
            break
        lo, lo_phi, phi = lam, cand, cand
        lam *= 2.0
        if lam > LAMBDA_CAP:
            raise InfeasibleError(f"penalty {pen:.3g} still above eps = {eps:.3g} at lambda = {LAMBDA_CAP:g}")

    for _ in range(200):
        if hi_pen >= (1 - TIGHTNESS) * eps or hi - lo <= 1e-15 * hi:
            break
        mid = 0.5 * (lo + hi)
        cand = _newton(prob, mid, lo_phi, shell)
        pen = prob.pen(cand)
        schedule.append((mid, pen, prob.risk(cand)))
        if pen <= eps:
            hi, hi_phi, hi_pen = mid, cand, pen
        else:
            lo, lo_phi = mid, cand
    return hi_phi, hi, schedule


def _check_shell(shell):
    if shell is None:
        return None
    omega, Omega = float(shell[0]), float(shell[1])
    if not 0 < omega <= Omega:
        raise InfeasibleError(f"shell [{omega}, {Omega}] is empty or not positive")
    return omega, Omega


def eirm_constrained(data: Dataset, eps: float, shell=None, cfg: TrainConfig = TrainConfig(),
                     phi0=None) -> SolveResult:
    """Empirical ``min R subject to R' <= eps`` via the lambda homotopy.

    ``phi0`` seeds the homotopy (ERM by default); when it is already feasible and
    the penalized problem at lambda = 0 stays there, it is returned as is.
    """
    shell = _check_shell(shell)
    prob = _Empirical(data)
    if phi0 is not None:
        p0 = _project(np.asarray(as_phi(phi0), dtype=float), shell)
        if prob.pen(p0) <= eps and np.linalg.norm(prob.risk_grad(p0)) <= 1e-10 * max(1.0, prob.risk(p0)):
            return SolveResult(Predictor(p0), prob.risk(p0), prob.pen(p0), 0.0, True)
    phi, lam, sched = _homotopy(prob, eps, shell)
    return SolveResult(Predictor(phi), prob.risk(phi), prob.pen(phi), lam, True, trace=tuple(sched))


@dataclass(frozen=True)
class PopulationIRMResult:
    predictor: Predictor
    alpha: float
    colinearity_residual: float
    penalty: float
    risk: float
    lambda_used: float
    eps: float
    eps_threshold: float
    tau: float
    interval: tuple[float, float]
    uniqueness_guaranteed: bool
    general_position: bool
    schedule: tuple = field(default=(), repr=False)

    @property
    def in_interval(self) -> bool:
        lo, hi = self.interval
        return lo <= self.alpha <= hi


def default_shell(w_star) -> tuple[float, float]:
    """Widest ``omega`` and narrowest ``Omega`` that keep ``w_star`` admissible."""
    sq = float(np.dot(w_star, w_star))
    return sq / 2, (3 + 2 * math.sqrt(2)) / 2 * sq


def general_position(moments: Sequence[Moments], n_probe: int = 8, seed: int = 0) -> bool:
    """Numerical check that ``{S_e x - rho_e}`` spans R^n for random nonzero ``x``."""
    n = moments[0].n
    rng = np.random.default_rng(seed)
    for _ in range(n_probe):
        x = rng.standard_normal(n)
        M = np.array([m.sigma @ x - m.rho for m in moments])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv.size < n or sv[n - 1] <= 1e-10 * sv[0]:
            return False
    return True


def population_threshold_constants(moments, pi, shell) -> tuple[float, float]:
    """``(eps_th, tau)`` for the given environments and shell."""
    pi = np.asarray(pi, dtype=float)
    inp = bounds.BoundInputs(E=len(moments), pi_min=len(moments) * float(pi.min()), omega=shell[0],
                             Omega=shell[1], lambda_min=min_eigenvalue(moments))
    return bounds.epsilon_threshold(inp), bounds.tau(inp)


def irm_population_constrained(moments: Sequence[Moments], pi, eps: float, w_star,
                               shell=None) -> PopulationIRMResult:
    """Population ``min R subject to R' <= eps`` with the alpha diagnostics.

    ``alpha = phi.w*/|w*|^2`` and the residual is ``|phi - alpha w*| / |phi|``.
    Raises ``ValueError`` if ``eps >= eps_th``.
    """
    w_star = np.asarray(as_phi(w_star), dtype=float)
    shell = _check_shell(shell if shell is not None else default_shell(w_star))
    sq = float(w_star @ w_star)
    if not (2 * shell[0] <= sq * (1 + 1e-12) and sq <= 2 / (3 + 2 * math.sqrt(2)) * shell[1] * (1 + 1e-12)):
        raise InfeasibleError("w_star violates the shell conditions 2 omega <= |w*|^2 <= 2 Omega/(3+2 sqrt 2)")
    eps_th, tau = population_threshold_constants(moments, pi, shell)
    if eps >= eps_th:
        raise ValueError(f"eps = {eps:.3g} is not below the threshold {eps_th:.3g}")
    prob = _Population(moments, pi)
    phi, lam, sched = _homotopy(prob, eps, shell)
    alpha = float(phi @ w_star / sq)
    resid = float(np.linalg.norm(phi - alpha * w_star) / np.linalg.norm(phi))
    gp = general_position(moments)
    n = moments[0].n
    unique = gp and len(moments) > 2 * n - 1
    return PopulationIRMResult(Predictor(phi), alpha, resid, prob.pen(phi), prob.risk(phi), lam, eps,
                               eps_th, tau, bounds.alpha_interval(eps, tau), unique, gp, tuple(sched))
