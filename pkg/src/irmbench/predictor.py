from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Predictor:
    """Linear model ``x -> phi @ x`` over base (degree 1) or lifted features."""

    phi: np.ndarray
    feature_degree: int = 1

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        if not np.all(np.isfinite(phi)):
            raise ValueError("predictor coefficients must be finite")
        if self.feature_degree < 1:
            raise ValueError("feature_degree must be >= 1")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return self.phi.shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.phi

    def in_shell(self, omega: float, Omega: float) -> bool:
        sq = float(self.phi @ self.phi)
        return omega <= sq <= Omega

    def __eq__(self, other):
        if not isinstance(other, Predictor):
            return NotImplemented
        return self.feature_degree == other.feature_degree and np.array_equal(self.phi, other.phi)

    def __repr__(self):
        return f"Predictor(phi={self.phi.tolist()!r}, feature_degree={self.feature_degree})"


def as_phi(p) -> np.ndarray:
    """Coefficient vector of a Predictor or array-like."""
    if isinstance(p, Predictor):
        return p.phi
    return np.asarray(p, dtype=float)
