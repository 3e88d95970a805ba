"""Polynomial feature map built from stacked Kronecker powers.

``zeta(w) = (w, w(x)w, ..., w^(x)p)`` where every block uses ``np.kron`` ordering
(row-major: the last factor varies fastest).  Full Kronecker powers are kept, so
monomials appear with multiplicity.  The lifted scrambler ``diag(S, S(x)S, ...)``
then satisfies ``lift(S) @ zeta(z) == zeta(S @ z)`` by the mixed-product rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import block_diag

MAX_DEGREE = 4
MAX_OUT_DIM = 10_000


@dataclass(frozen=True)
class PolyFeatureMap:
    in_dim: int
    degree: int

    def __post_init__(self):
        if self.in_dim < 1:
            raise ValueError("in_dim must be >= 1")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {self.degree}")
        if self.out_dim > MAX_OUT_DIM:
            raise ValueError(f"lifted dimension {self.out_dim} exceeds {MAX_OUT_DIM}")

    @property
    def out_dim(self) -> int:
        return lifted_dim(self.in_dim, self.degree)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return zeta(self, w)


def lifted_dim(a: int, p: int) -> int:
    return sum(a**i for i in range(1, p + 1))


def kron_power(a: np.ndarray, i: int) -> np.ndarray:
    """``a (x) a (x) ... (x) a`` with ``i`` factors."""
    if i < 1:
        raise ValueError("power must be >= 1")
    return reduce(np.kron, [a] * i)


def zeta(fmap: PolyFeatureMap, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] != fmap.in_dim:
        raise ValueError(f"expected a vector of length {fmap.in_dim}, got shape {w.shape}")
    return np.concatenate([kron_power(w, i) for i in range(1, fmap.degree + 1)])


def zeta_rows(fmap: PolyFeatureMap, X) -> np.ndarray:
    """Apply ``zeta`` to every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.vstack([zeta(fmap, x) for x in X])


def _lift(S, p: int) -> np.ndarray:
    if not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {p}")
    return block_diag(*(kron_power(S, i) for i in range(1, p + 1)))


def lift_scrambler(S, p: int) -> np.ndarray:
    """Block-diagonal ``diag(S^(x)1, ..., S^(x)p)`` for square ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"scrambler must be square, got {S.shape}")
    _check_size(S.shape[0], p)
    return _lift(S, p)


def lift_unscrambler(S_tilde, p: int, n: int | None = None) -> np.ndarray:
    """Block-diagonal lift of a (c x n) unscrambler; ``n`` checks the column count."""
    S_tilde = np.atleast_2d(np.asarray(S_tilde, dtype=float))
    c, m = S_tilde.shape
    if n is not None and m != n:
        raise ValueError(f"unscrambler has {m} columns, features have {n}")
    if c > m:
        raise ValueError(f"unscrambler of shape {S_tilde.shape} has more rows than columns")
    _check_size(m, p)
    return _lift(S_tilde, p)


def _check_size(a, p):
    if lifted_dim(a, p) > MAX_OUT_DIM:
        raise ValueError(f"lifted dimension {lifted_dim(a, p)} exceeds {MAX_OUT_DIM}")


def operator_norm(A, iters: int = 10_000, tol: float = 1e-15, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = np.sqrt(nw)
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(np.linalg.norm(A @ v))
