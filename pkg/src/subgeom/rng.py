"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *path)``.  A path is a tuple of labels (strings or
non-negative ints), e.g. ``(seed, "marginal", 3, trajectory_index)``, so the
stream used by a given trajectory never depends on scheduling, chunking or
the number of workers.
"""
from __future__ import annotations

import zlib

import numpy as np


def _label(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def stream(seed: int, *path) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_label(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(rng)
