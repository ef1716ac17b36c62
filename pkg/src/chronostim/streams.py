"""Counter-based random streams.

Every random draw in the package is addressed by a key path such as
``(seed, cell_index)`` or ``(seed, policy, replicate)`` rather than by the
order in which work happens to be scheduled. Philox is a counter-based
generator, so the t-th draw of a keyed stream is a pure function of
(key, t) and any partitioning of work across processes reproduces the
same numbers.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def keyed_stream(seed: int, index: int = 0) -> np.random.Generator:
    """Philox stream whose 128-bit key is exactly ``(seed, index)``."""
    key = np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for a hierarchical key path (replicates, policies...)."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def subseed(seed: int, *path: int) -> int:
    """64-bit integer seed derived from a key path."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
