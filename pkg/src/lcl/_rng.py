"""Deterministic counter-based RNG substreams.

Every sampler in the package draws from a ``numpy`` Philox generator keyed by
a master seed plus a tuple of integer indices (t-index, replicate, ...).
Philox is counter-based: streams with different keys are independent, and the
same key always reproduces the same draws regardless of worker count or
execution order.  The key is derived by SplitMix64-mixing the seed and the
indices so that adjacent (seed, index) pairs land far apart in key space.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # Standard SplitMix64 finalizer; good avalanche for sequential inputs.
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix_key(seed: int, *indices: int) -> int:
    """Collapse a master seed and index tuple into one 64-bit Philox key."""
    h = _splitmix64(int(seed) & _MASK)
    for ix in indices:
        h = _splitmix64(h ^ (int(ix) & _MASK))
    return h


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for the (seed, *indices) cell.

    Identical arguments give bit-identical draw sequences on every platform
    numpy supports, in any execution order.
    """
    return np.random.Generator(np.random.Philox(key=mix_key(seed, *indices)))
