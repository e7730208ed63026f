"""Platform-stable seed derivation.

Every random stream in the package is derived from a user seed plus a
structured key, so results do not depend on scheduling order.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_mix(seed: int, i: int) -> int:
    """Mix ``seed`` and a counter ``i`` into a 64-bit seed (splitmix64 finaliser)."""
    z = (int(seed) * 0x9E3779B97F4A7C15 + int(i) + 0x632BE59BD9B4E019) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def key_seed(seed: int, *parts) -> int:
    """Derive a 64-bit seed from ``seed`` and an arbitrary tuple of hashable parts."""
    digest = hashlib.blake2b(repr((int(seed),) + parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(key_seed(seed, *parts))
