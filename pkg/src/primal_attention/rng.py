"""Deterministic pseudo-random numbers, reproducible across platforms.

All stochastic choices in the package (weight init, subsampling, synthetic
data, random feature directions) flow through a xoshiro256** generator
seeded via splitmix64, so a run is fully determined by its integer seeds
rather than by any library's generator version.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_DOUBLE_SCALE = 1.0 / (1 << 53)


def _splitmix64_next(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_seed(base: int, *parts) -> int:
    """Mix a base seed with string/int tags into a new 64-bit seed."""
    acc = base & _MASK64
    for part in parts:
        tag = part if isinstance(part, bytes) else str(part).encode("utf-8")
        acc ^= _fnv1a64(tag)
        _, acc = _splitmix64_next(acc)
    return acc


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256++ generator with splitmix64 state expansion."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        state = self.seed
        s = []
        for _ in range(4):
            state, word = _splitmix64_next(state)
            s.append(word)
        self._s = s
        self._spare_normal = None

    @classmethod
    def from_state(cls, state_words) -> "Rng":
        """Construct from four explicit 64-bit state words (test vectors)."""
        rng = cls(0)
        rng._s = [w & _MASK64 for w in state_words]
        return rng

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def normal(self) -> float:
        """Standard normal via Box-Muller."""
        if self._spare_normal is not None:
            value, self._spare_normal = self._spare_normal, None
            return value
        # u1 in (0, 1] so the log is finite
        u1 = ((self.next_u64() >> 11) + 1) * _DOUBLE_SCALE
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = radius * math.sin(theta)
        return radius * math.cos(theta)

    def normals(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = self.normal()
        return out.reshape(shape)

    def uniform_symmetric(self, scale: float, shape) -> np.ndarray:
        """Uniform in [-scale, scale), used for fan-in weight init."""
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = (2.0 * self.uniform() - 1.0) * scale
        return out.reshape(shape)

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in draw order (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def derive(self, *parts) -> "Rng":
        return Rng(derive_seed(self.seed, *parts))
