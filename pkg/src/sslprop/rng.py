"""Deterministic random primitives shared by every stage of the pipeline.

All randomness flows through SplitMix64 so that splits, insertion plans and
synthetic fixtures reproduce bit-for-bit across runs, worker counts and
platforms.  The exact procedures, pinned here once:

* stream: output ``i`` (1-based) is ``mix64(seed + i * GOLDEN)`` with the
  standard SplitMix64 finalizer,
* bounded draws: Lemire multiply-shift reduction ``(x * n) >> 64``,
* shuffles: backward Fisher-Yates (Durstenfeld), one bounded draw per swap,
* uniform floats: 53 high bits, mapped to (0, 1],
* gaussians: Box-Muller on consecutive blocks of uniforms (the first half of
  a block feeds the radius, the second half the angle).

Derived sub-seeds use :func:`derive_seed` everywhere, so per-case work is
independent of processing order.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Sub-seed for an independent stream: ``seed XOR first-output-of(stream)``."""
    return (seed ^ mix64((stream + GOLDEN) & _MASK64)) & _MASK64


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Scalar and vectorized draws share one output counter, so a bulk draw of
    ``n`` values consumes exactly the same outputs as ``n`` scalar calls.
    """

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        self._count = 0

    def next_uint64(self) -> int:
        self._count += 1
        return mix64((self._seed + self._count * GOLDEN) & _MASK64)

    def next_below(self, n: int) -> int:
        """Bounded draw in [0, n) by the multiply-shift reduction."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return (self.next_uint64() * n) >> 64

    def next_uint64_array(self, n: int) -> np.ndarray:
        """Next ``n`` raw outputs as a uint64 array (vectorized)."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = np.uint64(self._seed) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        return z ^ (z >> np.uint64(31))

    def next_float(self) -> float:
        """One uniform double in (0, 1]."""
        return ((self.next_uint64() >> 11) + 1) * 2.0**-53

    def next_floats(self, n: int) -> np.ndarray:
        """Uniform doubles in (0, 1], vectorized."""
        bits = self.next_uint64_array(n)
        return (((bits >> np.uint64(11)) + np.uint64(1))).astype(np.float64) * 2.0**-53

    def next_gaussians(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller.

        Draws ceil(n/2) uniforms for the radius, then ceil(n/2) for the
        angle; pairs are interleaved (cos, sin) and truncated to ``n``.
        """
        m = (n + 1) // 2
        u1 = self.next_floats(m)
        u2 = self.next_floats(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def shuffle(self, items: list) -> None:
        """In-place backward Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def shuffled(self, items) -> list:
        out = list(items)
        self.shuffle(out)
        return out
