"""Seeded random streams.

Backed by numpy's PCG64 bit generator, whose output for a given seed is
fixed across platforms and numpy releases.
"""

from __future__ import annotations

import numpy as np

INIT_SCALE = 0.08


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)
