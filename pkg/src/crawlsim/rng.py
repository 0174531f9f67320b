"""Portable seeded random number generator.

Every stochastic component of the package (terrain placement, network
initialization, epoch shuffling, evolution-strategy sampling, optional
sensor noise) draws from this generator so that results are reproducible
bit-for-bit from a 64-bit seed, independent of platform or of whatever
global RNG state the host process carries.

The core is SplitMix64: state advances by the golden-gamma constant and
the output is a finalizing mix of the state.  It is tiny, passes BigCrush,
and is trivially portable because it is specified purely in terms of
64-bit integer arithmetic.
"""

from __future__ import annotations

import math

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent stream seed from a base seed and integer tags.

    Used to give each benchmark cell / trial / subsystem its own stream
    while keeping everything a pure function of the base seed.
    """
    z = seed & _MASK64
    for tag in tags:
        z = _mix64((z + _GAMMA) & _MASK64)
        z = _mix64(z ^ (tag & _MASK64))
    return z


class SplitMix64:
    """SplitMix64 stream with uniform/normal/shuffle helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_gauss: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi); 53-bit resolution."""
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> list[float]:
        return [self.uniform(lo, hi) for _ in range(n)]

    def randint(self, n: int) -> int:
        """Integer in [0, n) by rejection, unbiased."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def gauss(self) -> float:
        """Standard normal via Box-Muller (pairs cached)."""
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return z
        # u1 in (0, 1] so log() is safe
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_gauss = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def gausses(self, n: int) -> list[float]:
        return [self.gauss() for _ in range(n)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
