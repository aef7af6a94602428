"""Deterministic random streams.

All randomness in the toolkit flows through :class:`Rng`, a counter-mode
SplitMix64 generator: draw ``i`` of a stream with key ``k`` is
``mix64(k + (i + 1) * GOLDEN)`` where ``mix64`` is the SplitMix64 finalizer
(Steele, Lea & Flood 2014).  The raw 64-bit stream is a pure function of
(seed, counter), so it is reproducible across platforms and independent of
how many values are drawn per call.  Floating-point variates are derived
from the top 24 bits; ``normal`` additionally goes through libm
(sqrt/log/cos), which is deterministic per platform.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def mix64(x) -> np.ndarray:
    """SplitMix64 finalizer, elementwise on uint64 (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _U64(30))) * _MIX1
        x = (x ^ (x >> _U64(27))) * _MIX2
        return x ^ (x >> _U64(31))


class Rng:
    """Seeded stream of reproducible variates.

    ``derive(i)`` yields an independent child stream; children of distinct
    indices (or of distinct parents) never collide in practice because keys
    are re-mixed at every derivation.
    """

    def __init__(self, seed: int):
        self.key = np.uint64(mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN))
        self.counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 draws."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return mix64(self.key + idx * _GOLDEN)

    def derive(self, index: int) -> "Rng":
        """Independent child stream; does not consume from this stream."""
        child = Rng.__new__(Rng)
        with np.errstate(over="ignore"):
            child.key = np.uint64(mix64(self.key ^ mix64(np.uint64(index & 0xFFFFFFFFFFFFFFFF) + _MIX2)))
        child.counter = 0
        return child

    def _unit_open(self, n: int) -> np.ndarray:
        # (raw >> 40) has 24 bits; +0.5 keeps the result strictly inside (0, 1).
        return ((self.raw(n) >> _U64(40)).astype(np.float64) + 0.5) * 2.0**-24

    def uniform(self, shape, low: float = -1.0, high: float = 1.0) -> np.ndarray:
        """float32 i.i.d. draws strictly inside (low, high)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = self._unit_open(n)
        out = (low + (high - low) * u).astype(np.float32)
        return out.reshape(shape)

    def normal(self, shape, std: float = 1.0, mean: float = 0.0) -> np.ndarray:
        """float32 Gaussian draws via Box-Muller."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = self._unit_open(m)
        u2 = self._unit_open(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (mean + std * z).astype(np.float32).reshape(shape)

    def integers(self, n: int, upper: int) -> np.ndarray:
        """``n`` integers uniform on [0, upper); modulo bias < upper / 2**64."""
        return (self.raw(n) % _U64(upper)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of raw draws)."""
        return np.argsort(self.raw(n), kind="stable")
