"""Counter-based deterministic random numbers.

A splitmix-style 64-bit generator: draw i of a stream is a pure function
of (seed, i), so the same sequence can be produced one value at a time or
as a whole numpy array, and independent substreams can be derived per work
item (dataset pair, weight tensor) without consuming the parent stream.

Gaussians come from Box-Muller. Each normal consumes exactly two uniforms
and discards the sine branch, so scalar and vectorized draws produce the
same sequence.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_DERIVE_SALT = 0xD1B54A32D192ED03


def mix64(z: int) -> int:
    """Finalizing mixer of splitmix64; bijective on 64-bit ints."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Deterministic stream of uniforms/normals addressed by a counter."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._n = 0  # uniforms consumed so far

    def derive(self, key: int) -> "Rng":
        """Independent substream for work item `key`; parent is untouched."""
        return Rng(mix64(self.seed ^ mix64(((key + 1) * _GAMMA) ^ _DERIVE_SALT)))

    def _raw(self, i: int) -> int:
        return mix64((self.seed + (i + 1) * _GAMMA) & _MASK)

    def u64(self) -> int:
        v = self._raw(self._n)
        self._n += 1
        return v

    def uniform(self) -> float:
        # 53-bit mantissa in [0, 1)
        return (self.u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        idx = np.arange(self._n + 1, self._n + n + 1, dtype=np.uint64)
        self._n += n
        raw = _mix64_array(np.uint64(self.seed) + idx * np.uint64(_GAMMA))
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return float(np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2))

    def normals(self, n: int) -> np.ndarray:
        u = self.uniforms(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def randint(self, n: int) -> int:
        """Uniform int in [0, n). Uses rejection-free modulo; fine for small n."""
        return self.u64() % n
