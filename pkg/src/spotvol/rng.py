"""Counter-based random streams derived from a master seed.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *keys)`` through :class:`numpy.random.SeedSequence`.
Two calls with the same seed and keys produce the same stream no matter in
which order, or on which worker, they run.
"""

from __future__ import annotations

import numpy as np

# Stream tags. Keep them stable: changing a value changes every output.
PATH = 1
JUMPS = 2
NOISE = 3
PSI = 4
ORACLE = 5
ITERATION = 6
FIXED_PATH = 7


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed_or_rng, *keys: int) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng), *keys)
