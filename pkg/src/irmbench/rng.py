"""Seeded, counter-based random streams.

Every random draw in the package goes through :func:`substream`, which maps a
master seed plus a tuple of integer keys to an independent Philox generator.
The keys used by the samplers are

* ``(0,)`` for drawing SEM weights,
* ``(1, e)`` for rows of environment ``e``,
* ``(2,)`` for environment counts of a mixture sample,
* ``(3,)`` for the validation split,

and trial ``t`` of an experiment uses the master seed ``derive_seed(seed, t)``.
Because the keys are positional, the same trial always sees the same numbers
no matter how many other trials run or in what order.
"""

from __future__ import annotations

import numpy as np

WEIGHTS = 0
ENV_ROWS = 1
MIXTURE = 2
SPLIT = 3


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the sub-stream ``keys`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived deterministically from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = (int(v) for v in ss.generate_state(2, dtype=np.uint32))
    return (lo | hi << 32) >> 1
