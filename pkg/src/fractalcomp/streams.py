"""Counter-based random streams.

Every trial gets its own Philox generator keyed by ``(seed, index)``, so a
trial's draws depend only on those two numbers and never on how trials are
scheduled across workers.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial ``index`` of a run seeded with ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    key = (int(seed) & _MASK64) | ((int(index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
