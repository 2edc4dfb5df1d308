"""Explicitly seeded, counter-based random number generation.

All stochastic code takes a Generator argument; nothing touches numpy's
global RNG state. Philox is counter-based, so independent streams can be
derived from (seed, stream) pairs without correlation.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed=[seed, stream]))
