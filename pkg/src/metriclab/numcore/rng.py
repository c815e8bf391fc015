"""Seeded random streams.

Every random draw in the package goes through :class:`RngStream`.  The
generator is numpy's PCG64 (PCG XSL RR 128/64), seeded through
``numpy.random.SeedSequence``; both are specified bit-for-bit and give the
same stream on every platform.  Only the raw 64-bit outputs are consumed,
and every transform on top of them is defined here:

* uniform double: ``(raw >> 11) * 2**-53``, a value in ``[0, 1)``;
* standard normal: Box-Muller on consecutive uniform pairs ``(u1, u2)``
  with ``r = sqrt(-2 ln(1 - u1))``, emitting ``r cos(2 pi u2)`` then
  ``r sin(2 pi u2)``;
* integer in ``[0, n)``: ``raw % n``;
* permutation: stable argsort of ``n`` uniform doubles.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_NEG53 = 2.0 ** -53


class RngStream:
    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bitgen = np.random.PCG64(np.random.SeedSequence(self.seed))

    def __repr__(self):
        return f"RngStream(seed={self.seed})"

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        return np.asarray(self._bitgen.random_raw(int(n)), dtype=np.uint64)

    def uniform(self, size) -> np.ndarray:
        shape = _as_shape(size)
        n = math.prod(shape)
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        return u.reshape(shape)

    def normal(self, size) -> np.ndarray:
        shape = _as_shape(size)
        n = math.prod(shape)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def integers(self, n: int, size=None):
        """Uniform integers in ``[0, n)``; scalar when ``size`` is None."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if size is None:
            return int(self.raw(1)[0] % np.uint64(n))
        shape = _as_shape(size)
        out = self.raw(math.prod(shape)) % np.uint64(n)
        return out.astype(np.int64).reshape(shape)

    def choice(self, options):
        """One element of a non-empty sequence, uniformly."""
        return options[self.integers(len(options))]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def child(self, key: int) -> "RngStream":
        """Independent stream derived from this stream's seed and ``key``.

        Does not consume draws from the parent.
        """
        state = np.random.SeedSequence([self.seed, int(key) & _MASK64]).generate_state(1, np.uint64)
        return RngStream(int(state[0]))


def _as_shape(size) -> tuple:
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(int(s) for s in size)


def gaussian_matrix(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. standard normals (Box-Muller, row-major)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got {rows}x{cols}")
    return rng.normal((rows, cols))
