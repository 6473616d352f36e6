"""Deterministic random numbers for reproducible attacks.

Everything stochastic in this package (cloud textures, population draws,
corpus subsampling) runs off SplitMix64 so that runs are bit-identical
across platforms and implementation languages. The generator is the
published constant-time mixer: state advances by the 64-bit golden-gamma
increment and each output is a finalizer of the state, which also makes
bulk generation trivially vectorizable.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# 2**-53: top 53 bits of the mixed state become a float in [0, 1)
_FLOAT_SCALE = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: str | bytes) -> int:
    """64-bit FNV-1a hash, used to fold string ids into seeds."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(master_seed: int, *parts: str) -> int:
    """Stable per-entity seed from a master seed and string labels.

    Independent of iteration order, so parallel query dispatch cannot
    change any stream.
    """
    h = fnv1a64(str(master_seed & MASK64))
    for part in parts:
        h = fnv1a64(part.encode("utf-8") + h.to_bytes(8, "little"))
    return mix64(h)


class SplitMix64:
    """Sequential SplitMix64 stream with the scalar helpers the attack needs.

    Scalar draws use pure Python arithmetic (the optimizer works on 5-dim
    parameter vectors where numpy would only add overhead and make the
    seeded transcript harder to reproduce externally); `floats` produces
    the same stream in bulk for lattice-noise generation.
    """

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _FLOAT_SCALE

    def floats(self, n: int) -> np.ndarray:
        """Next `n` uniforms as float64, identical to n calls of next_float."""
        start = self._state
        self._state = (self._state + n * _GAMMA) & MASK64
        with np.errstate(over="ignore"):
            states = np.uint64(start) + np.uint64(_GAMMA) * np.arange(
                1, n + 1, dtype=np.uint64
            )
            z = states
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * _FLOAT_SCALE

    def uniform(self, lo: float, hi: float) -> float:
        return lo + self.next_float() * (hi - lo)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        span = hi - lo + 1
        v = lo + int(self.next_float() * span)
        return min(v, hi)

    def normal(self) -> float:
        """Standard normal via Box-Muller; always consumes two uniforms."""
        u1 = self.next_float()
        u2 = self.next_float()
        if u1 <= 0.0:
            u1 = _FLOAT_SCALE
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k of range(n) without replacement, in ascending order.

        Selection sampling (Knuth algorithm S): exactly uniform over
        subsets and consumes one float per scanned index.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        picked: list[int] = []
        needed = k
        for i in range(n):
            if needed == 0:
                break
            if self.next_float() * (n - i) < needed:
                picked.append(i)
                needed -= 1
        return picked
