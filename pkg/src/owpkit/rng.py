"""Portable counter-based random streams.

Output ``i`` of a stream with key ``k`` is ``mix64(k + (i + 1) * GOLDEN)``,
where ``mix64`` is the SplitMix64 finaliser.  Uniforms take the top 53 bits;
normals use the cosine branch of Box-Muller on two consecutive uniforms.
Everything is plain uint64 arithmetic, so streams are identical on every
platform and in every language that implements the same three lines.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int = 0) -> int:
    """Key of the independent stream ``stream`` under ``seed`` (e.g. an image id)."""
    s = int(mix64(np.uint64(seed & _MASK)))
    return int(mix64(np.uint64((s ^ ((stream * 0x9E3779B97F4A7C15) & _MASK)) & _MASK)))


class CounterRng:
    def __init__(self, seed: int, stream: int = 0):
        self.key = np.uint64(stream_key(seed, stream))
        self.counter = 0

    def bits(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return mix64(self.key + idx * GOLDEN)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        u = (self.bits(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape=(), sigma: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniform((n, 2))
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
        return (sigma * z).reshape(shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integers in [low, high)."""
        u = self.uniform(shape)
        return np.minimum(low + np.floor(u * (high - low)).astype(np.int64), high - 1)
