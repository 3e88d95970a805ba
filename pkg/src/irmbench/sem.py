"""Structural equation models and their samplers.

Two model families are provided.

``RegressionSemSpec`` is the four-variant regression model (covariate shift,
confounded, anti-causal, hybrid) over blocks ``H, X1, Y, X2`` of size ``s``::

    H  <- sigma_e * N(0, I_s)
    X1 <- sigma_e * N(0, I_s) + W_h1 H
    Y  <- w_1y . X1 + sigma_e * N(0, 1) + w_hy . H
    X2 <- w_y2 Y + N(0, I_s) + W_h2 H

``LinearSemSpec`` is the general scrambled linear model ``Y = gamma . Z1 + eps``,
``X = S (Z1, Z2)`` with ``Z2`` anti-causal or confounded.

Both reduce to a per-environment *latent model*: ``X = A_x L``, ``Y = a_y . L``,
``eps = a_eps . L`` with ``L`` a vector of independent unit-variance noises.
The samplers draw ``L`` and evaluate the recursion; the analytic moments in
:mod:`irmbench.risk` use the same matrices.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .predictor import Predictor
from .rng import ENV_ROWS, MIXTURE, WEIGHTS, substream

DEFAULT_SIGMAS = (0.2, 2.0)


class Variant(str, Enum):
    CS = "cs"
    CF = "cf"
    AC = "ac"
    HB = "hb"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown variant {value!r}; expected one of cs, cf, ac, hb") from None


@dataclass(frozen=True)
class EnvSpec:
    index: int
    mix_prob: float
    noise_scale: float

    def __post_init__(self):
        if not self.mix_prob > 0 or self.mix_prob > 1:
            raise ValueError(f"mix_prob must lie in (0, 1], got {self.mix_prob}")
        if not self.noise_scale > 0:
            raise ValueError(f"noise_scale must be positive, got {self.noise_scale}")


def make_envs(sigmas: Sequence[float], probs: Sequence[float] | None = None) -> tuple[EnvSpec, ...]:
    """Environments ``0..k-1`` with the given noise scales; uniform mixing by default."""
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise ValueError("need at least one environment")
    if probs is None:
        probs = [1.0 / len(sigmas)] * len(sigmas)
    if len(probs) != len(sigmas):
        raise ValueError("probs and sigmas differ in length")
    return _check_envs([EnvSpec(i, float(p), s) for i, (p, s) in enumerate(zip(probs, sigmas))])


def _check_envs(envs: Sequence[EnvSpec]) -> tuple[EnvSpec, ...]:
    envs = tuple(e if isinstance(e, EnvSpec) else EnvSpec(**e) for e in envs)
    if not envs:
        raise ValueError("need at least one environment")
    ids = [e.index for e in envs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate environment ids {ids}")
    total = sum(e.mix_prob for e in envs)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"mixing probabilities sum to {total!r}, not 1")
    return envs


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LatentModel:
    """``X = A_x L``, ``Y = a_y . L``, ``eps = a_eps . L`` for unit-variance ``L``."""

    A_x: np.ndarray
    a_y: np.ndarray
    a_eps: np.ndarray


@dataclass(frozen=True)
class NoiseScales:
    """Multipliers on the four exogenous noise blocks (1 reproduces the model as written).

    ``h``, ``x1`` and ``y`` scale the environment-dependent ``sigma_e`` noises; ``x2``
    scales the unit-variance noise on ``X2``.  Setting them to zero gives the
    deterministic limits of the recursion.
    """

    h: float = 1.0
    x1: float = 1.0
    y: float = 1.0
    x2: float = 1.0

    def __post_init__(self):
        for name in ("h", "x1", "y", "x2"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise multiplier {name} must be >= 0")


@dataclass(frozen=True, eq=False)
class RegressionSemSpec:
    variant: Variant
    s: int
    w_h1: np.ndarray
    w_1y: np.ndarray
    w_hy: np.ndarray
    w_y2: np.ndarray
    w_h2: np.ndarray
    envs: tuple[EnvSpec, ...]
    noise: NoiseScales = field(default_factory=NoiseScales)

    def __post_init__(self):
        s = int(self.s)
        if s < 1:
            raise ValueError("block size s must be >= 1")
        object.__setattr__(self, "s", s)
        v = Variant.parse(self.variant)
        object.__setattr__(self, "variant", v)
        for name, shape in (("w_h1", (s, s)), ("w_1y", (s,)), ("w_hy", (s,)),
                            ("w_y2", (s,)), ("w_h2", (s, s))):
            object.__setattr__(self, name, _frozen(getattr(self, name), shape))
        object.__setattr__(self, "envs", _check_envs(self.envs))
        if not isinstance(self.noise, NoiseScales):
            object.__setattr__(self, "noise", NoiseScales(**self.noise))

        zero = [k for k in ZERO_PATTERN[v] if np.any(getattr(self, k))]
        if zero:
            raise ValueError(f"variant {v.value} requires {', '.join(zero)} to be zero")
        if v is Variant.CS and not np.array_equal(self.w_h1, np.eye(s)):
            raise ValueError("variant cs requires w_h1 to be the identity")

    @property
    def n(self) -> int:
        return 2 * self.s

    @property
    def env_ids(self) -> tuple[int, ...]:
        return tuple(e.index for e in self.envs)

    @property
    def mix_probs(self) -> np.ndarray:
        return np.array([e.mix_prob for e in self.envs])

    def env(self, e: int) -> EnvSpec:
        for spec in self.envs:
            if spec.index == e:
                return spec
        raise KeyError(f"environment {e} not in spec (have {list(self.env_ids)})")

    def with_envs(self, envs: Sequence[EnvSpec]) -> "RegressionSemSpec":
        return replace(self, envs=tuple(envs))

    def latent_model(self, e: int) -> LatentModel:
        # latent order: N_h (s), N_1 (s), N_y (1), N_2 (s)
        s, sig, nz = self.s, self.env(e).noise_scale, self.noise
        k = 3 * s + 1
        hb = slice(0, s)
        H = np.zeros((s, k))
        H[:, hb] = sig * nz.h * np.eye(s)
        X1 = self.w_h1 @ H
        X1[:, s:2 * s] += sig * nz.x1 * np.eye(s)
        eps = self.w_hy @ H
        eps[2 * s] += sig * nz.y
        y = self.w_1y @ X1 + eps
        X2 = np.outer(self.w_y2, y) + self.w_h2 @ H
        X2[:, 2 * s + 1:] += nz.x2 * np.eye(s)
        return LatentModel(np.vstack([X1, X2]), y, eps)

    def to_dict(self) -> dict:
        return {
            "kind": "regression",
            "variant": self.variant.value,
            "s": self.s,
            "w_h1": self.w_h1.tolist(),
            "w_1y": self.w_1y.tolist(),
            "w_hy": self.w_hy.tolist(),
            "w_y2": self.w_y2.tolist(),
            "w_h2": self.w_h2.tolist(),
            "envs": [vars(e) for e in self.envs],
            "noise": vars(self.noise),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressionSemSpec":
        d = dict(d)
        d.pop("kind", None)
        d["envs"] = tuple(EnvSpec(**e) for e in d["envs"])
        d["noise"] = NoiseScales(**d.get("noise", {}))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RegressionSemSpec":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, RegressionSemSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()


ZERO_PATTERN = {
    Variant.CS: ("w_h2", "w_hy", "w_y2"),
    Variant.CF: ("w_y2",),
    Variant.AC: ("w_hy", "w_h1", "w_h2"),
    Variant.HB: (),
}


def draw_regression_sem(variant, s: int, seed: int, sigmas: Sequence[float] = DEFAULT_SIGMAS,
                        probs: Sequence[float] | None = None,
                        weight_scale: float | None = None) -> RegressionSemSpec:
    """Draw the weights of a regression SEM.

    Every retained weight is ``weight_scale * N(0, 1)``.  The default
    ``weight_scale = 1/sqrt(s)`` gives each weight variance ``1/s``; pass ``1/s``
    for the standard-deviation reading.  All five weight blocks are drawn in a fixed order whatever the
    variant, so one seed yields the same ``w_1y`` for every variant.
    """
    v = Variant.parse(variant)
    if s < 1:
        raise ValueError("block size s must be >= 1")
    scale = 1.0 / np.sqrt(s) if weight_scale is None else float(weight_scale)
    rng = substream(seed, WEIGHTS)
    w = {
        "w_h1": rng.standard_normal((s, s)),
        "w_1y": rng.standard_normal(s),
        "w_hy": rng.standard_normal(s),
        "w_y2": rng.standard_normal(s),
        "w_h2": rng.standard_normal((s, s)),
    }
    w = {k: scale * a for k, a in w.items()}
    for k in ZERO_PATTERN[v]:
        w[k] = np.zeros_like(w[k])
    if v is Variant.CS:
        w["w_h1"] = np.eye(s)
    return RegressionSemSpec(v, s, envs=make_envs(sigmas, probs), **w)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows ``(x, y, env)`` stored column-wise; every environment has an even count."""

    x: np.ndarray
    y: np.ndarray
    env: np.ndarray
    env_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        env = np.array(self.env, dtype=np.int64).reshape(-1)
        if not (x.shape[0] == y.shape[0] == env.shape[0]):
            raise ValueError("x, y and env must have the same number of rows")
        present = tuple(int(e) for e in np.unique(env))
        ids = present if self.env_ids is None else tuple(int(e) for e in self.env_ids)
        unknown = set(present) - set(ids)
        if unknown:
            raise ValueError(f"rows carry environments {sorted(unknown)} not in {list(ids)}")
        counts = {e: int(np.count_nonzero(env == e)) for e in present}
        odd = [e for e, c in counts.items() if c % 2]
        if odd:
            raise ValueError(f"environments {odd} have odd counts; pairing needs even counts")
        for a in (x, y, env):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "env", env)
        object.__setattr__(self, "env_ids", ids)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def per_env_counts(self) -> dict[int, int]:
        return {e: int(np.count_nonzero(self.env == e)) for e in self.env_ids}

    @property
    def present_envs(self) -> tuple[int, ...]:
        return tuple(e for e, c in self.per_env_counts.items() if c)

    @property
    def rows(self):
        for xi, yi, ei in zip(self.x, self.y, self.env):
            yield xi, float(yi), int(ei)

    def env_rows(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        mask = self.env == e
        return self.x[mask], self.y[mask]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.env[idx], self.env_ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.env_ids == other.env_ids and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y) and np.array_equal(self.env, other.env))

    @staticmethod
    def concat(parts: Iterable["Dataset"], env_ids: Sequence[int] | None = None) -> "Dataset":
        parts = list(parts)
        return Dataset(np.vstack([p.x for p in parts]), np.concatenate([p.y for p in parts]),
                       np.concatenate([p.env for p in parts]), env_ids)

    def header(self) -> list[str]:
        return [f"x_{i}" for i in range(self.n_features)] + ["y", "env"]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for xi, yi, ei in self.rows:
            w.writerow([repr(float(v)) for v in xi] + [repr(yi), ei])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path, env_ids: Sequence[int] | None = None) -> "Dataset":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"), env_ids)

    @classmethod
    def from_csv_text(cls, text: str, env_ids: Sequence[int] | None = None) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], rows[1:]
        if head[-2:] != ["y", "env"]:
            raise ValueError("CSV header must end with y,env")
        vals = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(head) - 1)
        env = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return cls(vals[:, :-1], vals[:, -1], env, env_ids)


def _check_n(n: int):
    if n < 2 or n % 2:
        raise ValueError(f"sample size must be even and >= 2, got {n}")


def sample_env(spec: RegressionSemSpec, e: int, n: int, seed: int) -> Dataset:
    """``n`` rows of environment ``e``, following the SEM recursion in order."""
    _check_n(n)
    sig = spec.env(e).noise_scale
    s, nz = spec.s, spec.noise
    rng = substream(seed, ENV_ROWS, e)
    n_h = rng.standard_normal((n, s))
    n_1 = rng.standard_normal((n, s))
    n_y = rng.standard_normal(n)
    n_2 = rng.standard_normal((n, s))

    h = sig * nz.h * n_h
    x1 = sig * nz.x1 * n_1 + h @ spec.w_h1.T
    y = x1 @ spec.w_1y + sig * nz.y * n_y + h @ spec.w_hy
    x2 = np.outer(y, spec.w_y2) + nz.x2 * n_2 + h @ spec.w_h2.T
    return Dataset(np.hstack([x1, x2]), y, np.full(n, e), spec.env_ids)


def _sampler(spec):
    return sample_linear if isinstance(spec, LinearSemSpec) else sample_env


def sample_envs(spec, counts: Mapping[int, int], seed: int) -> Dataset:
    """Fixed per-environment counts, environments stacked in spec order."""
    draw = _sampler(spec)
    parts = [draw(spec, e, int(counts[e]), seed) for e in spec.env_ids if counts.get(e, 0)]
    return Dataset.concat(parts, spec.env_ids)


def mixture_counts(probs: Sequence[float], N: int, seed: int) -> np.ndarray:
    """Multinomial environment counts made even by moving single rows between odd pairs."""
    k = len(probs)
    if N % 2:
        raise ValueError(f"total sample size must be even, got {N}")
    if N < 2 * k:
        raise ValueError(f"N={N} is too small to give each of {k} environments two rows")
    counts = substream(seed, MIXTURE).multinomial(N, probs)
    odd = np.flatnonzero(counts % 2)
    for i, j in zip(odd[0::2], odd[1::2]):
        # move one row from the larger to the smaller environment
        big, small = (i, j) if counts[i] >= counts[j] else (j, i)
        counts[big] -= 1
        counts[small] += 1
    if counts.min() < 2:
        raise ValueError(f"mixture draw left an environment with fewer than 2 rows: {counts.tolist()}")
    return counts


def sample_mixture(spec, N: int, seed: int) -> Dataset:
    """``N`` i.i.d. rows from the environment mixture (counts then rows)."""
    counts = mixture_counts([e.mix_prob for e in spec.envs], N, seed)
    return sample_envs(spec, dict(zip(spec.env_ids, counts.tolist())), seed)


def true_invariant_predictor(spec) -> Predictor:
    """``(w_1y, 0)`` for regression SEMs, ``S~^T gamma`` for the general linear model."""
    if isinstance(spec, LinearSemSpec):
        return Predictor(spec.unscrambler().T @ spec.gamma)
    return Predictor(np.concatenate([spec.w_1y, np.zeros(spec.s)]))


class Mechanism(str, Enum):
    ANTI_CAUSAL = "anti_causal"
    CONFOUNDED = "confounded"


@dataclass(frozen=True, eq=False)
class LinearSemSpec:
    """Scrambled linear model with a spurious block ``Z2``.

    Per environment with scale ``sigma``: ``Z1 ~ sigma N(0, I_c)``; for the
    anti-causal mechanism ``eps ~ sigma N(0, 1)`` and ``Z2 = z2_weights * Y + N(0, I_d)``;
    for the confounded one a scalar ``H ~ sigma N(0, 1)`` gives ``eps = H + sigma N(0, 1)``
    and ``Z2 = z2_weights * H + N(0, I_d)``.  ``noise='uniform'`` swaps every unit
    Gaussian for a unit-variance uniform, which gives bounded support with the
    same second moments.
    """

    c: int
    d: int
    gamma: np.ndarray
    scrambler: np.ndarray
    z2_mechanism: Mechanism
    z2_weights: np.ndarray
    envs: tuple[EnvSpec, ...]
    noise: str = "gaussian"

    def __post_init__(self):
        c, d = int(self.c), int(self.d)
        if c < 1 or d < 0:
            raise ValueError("need c >= 1 and d >= 0")
        object.__setattr__(self, "gamma", _frozen(self.gamma, (c,)))
        object.__setattr__(self, "scrambler", _frozen(self.scrambler, (c + d, c + d)))
        object.__setattr__(self, "z2_weights", _frozen(self.z2_weights, (d,)))
        object.__setattr__(self, "z2_mechanism", Mechanism(self.z2_mechanism))
        object.__setattr__(self, "envs", _check_envs(self.envs))
        if self.noise not in ("gaussian", "uniform"):
            raise ValueError("noise must be 'gaussian' or 'uniform'")
        if not np.any(self.gamma):
            raise ValueError("gamma must be nonzero")
        self.unscrambler()

    @property
    def n(self) -> int:
        return self.c + self.d

    @property
    def env_ids(self) -> tuple[int, ...]:
        return tuple(e.index for e in self.envs)

    @property
    def mix_probs(self) -> np.ndarray:
        return np.array([e.mix_prob for e in self.envs])

    env = RegressionSemSpec.env
    with_envs = RegressionSemSpec.with_envs

    def unscrambler(self) -> np.ndarray:
        """``S~`` with ``S~ S = [I_c, 0]``; raises if the Z1 block is not recoverable."""
        S_t = np.linalg.pinv(self.scrambler)[: self.c]
        target = np.hstack([np.eye(self.c), np.zeros((self.c, self.d))])
        resid = np.linalg.norm(S_t @ self.scrambler - target)
        if resid >= 1e-9:
            raise ValueError(f"Z1 block of the scrambler is not invertible (residual {resid:.3g})")
        return S_t

    def latent_model(self, e: int) -> LatentModel:
        # latent order: N_z1 (c), N_eps (1), N_h (1), N_2 (d)
        c, d, sig = self.c, self.d, self.env(e).noise_scale
        k = c + d + 2
        z1 = np.zeros((c, k))
        z1[:, :c] = sig * np.eye(c)
        eps = np.zeros(k)
        eps[c] = sig
        z2 = np.zeros((d, k))
        z2[:, c + 2:] = np.eye(d)
        if self.z2_mechanism is Mechanism.CONFOUNDED:
            hid = np.zeros(k)
            hid[c + 1] = sig
            eps = eps + hid
            z2 += np.outer(self.z2_weights, hid)
        y = self.gamma @ z1 + eps
        if self.z2_mechanism is Mechanism.ANTI_CAUSAL:
            z2 += np.outer(self.z2_weights, y)
        return LatentModel(self.scrambler @ np.vstack([z1, z2]), y, eps)


def sample_linear(spec: LinearSemSpec, e: int, n: int, seed: int) -> Dataset:
    """``n`` rows of environment ``e`` of a :class:`LinearSemSpec`."""
    _check_n(n)
    spec.env(e)
    lat = spec.latent_model(e)
    rng = substream(seed, ENV_ROWS, e)
    k = lat.a_y.shape[0]
    if spec.noise == "uniform":
        L = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, k))
    else:
        L = rng.standard_normal((n, k))
    return Dataset(L @ lat.A_x.T, L @ lat.a_y, np.full(n, e), spec.env_ids)
