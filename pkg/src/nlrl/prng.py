"""SplitMix64 streams.

The generator is Steele/Lea/Flood's SplitMix64 with the constants used by
``java.util.SplittableRandom`` and Vigna's reference ``splitmix64.c``::

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Doubles in [0, 1) are ``(z >> 11) * 2**-53``. Because the state advances by a
fixed increment, output ``k`` depends only on ``seed + (k + 1) * GAMMA`` and
whole blocks are computed in one vectorised pass.
"""
from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """The SplitMix64 finaliser on a python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically derive an independent 64-bit seed from ``seed`` and ``keys``."""
    z = seed & MASK64
    for key in keys:
        z = mix64((z + GAMMA * (int(key) + 1)) & MASK64)
    return z


class SplitMix64:
    """Sequential SplitMix64 stream.

    >>> rng = SplitMix64(0)
    >>> rng.next_u64() == mix64(GAMMA)
    True
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def u64(self, n: int) -> np.ndarray:
        """The next ``n`` raw outputs as a uint64 array."""
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GAMMA) & MASK64
        return z

    def uniform(self, n: int) -> np.ndarray:
        """The next ``n`` doubles in [0, 1)."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of ``range(n)`` obtained by stable-sorting ``n`` raw draws."""
        return np.argsort(self.u64(n), kind="stable")
