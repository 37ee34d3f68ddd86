"""Portable pseudo-random numbers: splitmix64 seeding a xoshiro256** generator.

Everything here is defined bit-for-bit so that an experiment manifest
(seed + stream label) reproduces the same draws on any platform:

* ``splitmix64`` expands a 64-bit seed into the four state words.
* ``xoshiro256**`` produces 64-bit outputs.
* doubles use the top 53 bits: ``(x >> 11) * 2**-53``.
* normals use the Box-Muller transform, consuming two doubles per pair.
* bounded integers use rejection sampling on the 64-bit output.

Independent streams are derived from a seed plus a label; the label is
hashed with BLAKE2b (8-byte digest) and XORed into the seed before
splitmix64 expansion.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def stream_key(stream: int | str) -> int:
    """64-bit key for a stream label; the empty label and 0 map to 0."""
    if stream in (0, ""):
        return 0
    digest = hashlib.blake2b(str(stream).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Xoshiro256:
    """xoshiro256** generator with a small numpy-returning convenience API."""

    def __init__(self, seed: int = 0, stream: int | str = 0):
        sm = (int(seed) ^ stream_key(stream)) & MASK64
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        self._s = state
        self._spare_normal: float | None = None

    @classmethod
    def from_state(cls, state) -> "Xoshiro256":
        rng = cls.__new__(cls)
        rng._s = [int(v) & MASK64 for v in state]
        if not any(rng._s):
            raise ValueError("xoshiro256 state must not be all zero")
        rng._spare_normal = None
        return rng

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        span = high - low
        return np.array([low + span * self.random() for _ in range(size)], dtype=np.float64)

    def normal(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = self._standard_normal()
        return out

    def _standard_normal(self) -> float:
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates, in draw order)."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)
