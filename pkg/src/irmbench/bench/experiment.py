"""Regression benchmark: ERM vs IRMv1 estimation error over a sample grid.

Trial ``t`` uses master seed ``derive_seed(seed, t)``.  It draws one SEM
(fresh weights unless ``fixed_w``) and, for each sample size ``N``, an
independent mixture sample seeded by ``derive_seed(trial_seed, N)``.  ERM is
pooled least squares on all ``N`` rows; IRM is IRMv1 with lambda chosen by
held-out risk on a 4:1 split of the training environments.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..rng import derive_seed
from ..sem import draw_regression_sem, sample_mixture, true_invariant_predictor
from ..solve import SolverError, erm_closed_form, select_penalty
from .config import ExperimentConfig

TRIAL_FIELDS = ("variant", "method", "n_samples", "trial", "est_error", "lambda_used", "converged", "status")
SUMMARY_FIELDS = ("variant", "method", "n_samples", "trials", "mean", "stderr")


@dataclass(frozen=True)
class TrialResult:
    variant: str
    method: str
    n_samples: int
    trial: int
    est_error: float
    lambda_used: float
    converged: bool = True
    status: str = "ok"

    def __post_init__(self):
        if self.status == "ok" and not self.est_error >= 0:
            raise ValueError("est_error must be >= 0")

    def row(self) -> list[str]:
        return [self.variant, self.method, str(self.n_samples), str(self.trial), repr(float(self.est_error)),
                repr(float(self.lambda_used)), str(int(self.converged)), self.status]


@dataclass(frozen=True)
class SummaryRow:
    variant: str
    method: str
    n_samples: int
    trials: int
    mean: float
    stderr: float

    def row(self) -> list[str]:
        return [self.variant, self.method, str(self.n_samples), str(self.trials), repr(self.mean), repr(self.stderr)]


def _sq_dist(phi, w_star) -> float:
    d = np.asarray(phi) - np.asarray(w_star)
    return float(d @ d)


def run_trial(cfg: ExperimentConfig, t: int) -> list[TrialResult]:
    ts = derive_seed(cfg.seed, t)
    wseed = derive_seed(cfg.seed, 0) if cfg.fixed_w else ts
    spec = draw_regression_sem(cfg.variant, cfg.dim_s, wseed, sigmas=cfg.sigma_envs,
                               weight_scale=cfg.weight_scale)
    w_star = true_invariant_predictor(spec).phi
    out = []
    for N in cfg.sample_grid:
        data = sample_mixture(spec, N, derive_seed(ts, N))
        if "erm" in cfg.methods:
            try:
                phi = erm_closed_form(data).phi
                out.append(TrialResult(cfg.variant, "erm", N, t, _sq_dist(phi, w_star), 0.0))
            except SolverError as exc:
                out.append(TrialResult(cfg.variant, "erm", N, t, math.nan, 0.0, False, _status(exc)))
        if "irm" in cfg.methods:
            train = replace(cfg.train, lambda_grid=cfg.lambda_grid, seed=derive_seed(ts, N, 1))
            try:
                lam, res = select_penalty(data, train)
                status = "diverged" if res.diverged else "ok"
                out.append(TrialResult(cfg.variant, "irm", N, t, _sq_dist(res.predictor.phi, w_star), lam,
                                       res.converged, status))
            except (SolverError, ValueError) as exc:
                out.append(TrialResult(cfg.variant, "irm", N, t, math.nan, math.nan, False, _status(exc)))
    return out


def _status(exc: Exception) -> str:
    return type(exc).__name__


def run_trials(cfg: ExperimentConfig) -> list[TrialResult]:
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            parts = list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        parts = [run_trial(cfg, t) for t in range(cfg.trials)]
    rows = [r for part in parts for r in part]
    return sorted(rows, key=lambda r: (r.method, r.n_samples, r.trial))


def aggregate(rows: Iterable[TrialResult]) -> list[SummaryRow]:
    """Mean and ``std(ddof=1)/sqrt(count)`` of finite errors per (variant, method, N)."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.variant, r.method, r.n_samples), [])
        if r.status == "ok" and math.isfinite(r.est_error):
            groups[(r.variant, r.method, r.n_samples)].append(r.est_error)
    out = []
    for (variant, method, n), errs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2])):
        a = np.array(errs)
        mean = float(a.mean()) if a.size else math.nan
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
        out.append(SummaryRow(variant, method, n, int(a.size), mean, se))
    return out


def to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def read_trials(path) -> list[TrialResult]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TrialResult(r["variant"], r["method"], int(r["n_samples"]), int(r["trial"]), float(r["est_error"]),
                        float(r["lambda_used"]), bool(int(r["converged"])), r["status"]) for r in rows]


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[SummaryRow]:
    """Run every trial, write ``trials.csv`` and ``summary.csv`` when ``out_dir`` is given."""
    rows = run_trials(cfg)
    summary = aggregate(rows)
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_text(out_dir / "trials.csv", to_csv(TRIAL_FIELDS, rows))
        write_text(out_dir / "summary.csv", to_csv(SUMMARY_FIELDS, summary))
    return summary


def summary_table(summary: Iterable[SummaryRow]) -> dict[tuple[str, int], SummaryRow]:
    return {(s.method, s.n_samples): s for s in summary}
