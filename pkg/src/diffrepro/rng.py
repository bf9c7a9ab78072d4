"""Deterministic, stream-splittable random number generation.

Every random draw in this package flows through :class:`SeededRng`; nothing
reads ambient entropy or the clock. A generator is identified by a
``(seed, stream)`` pair of 64-bit integers. The underlying source is the
counter-based Philox 4x64 generator keyed on exactly that pair, so the same
pair reproduces the same byte stream on every platform and run, and distinct
stream ids give statistically independent streams.

Normal variates use the Box-Muller transform on 53-bit uniforms derived from
raw 64-bit outputs:

    u1 = ((raw0 >> 11) + 1) * 2**-53        in (0, 1]
    u2 = (raw1 >> 11) * 2**-53              in [0, 1)
    z0 = sqrt(-2 ln u1) * cos(2 pi u2)
    z1 = sqrt(-2 ln u1) * sin(2 pi u2)

Each pair of raw words yields the pair (z0, z1) in that order; an odd-length
request discards the trailing z1. The transform is fixed here (rather than a
library ziggurat) so the sampled values are pinned by this module alone.
"""

from __future__ import annotations

import numpy as np

_U64 = 1 << 64
_TWO_POW_MINUS_53 = 2.0 ** -53


class SeededRng:
    """Deterministic random stream identified by (seed, stream).

    Single-owner and stateful: draws advance the stream. Parallel work must
    use distinct stream ids, never share one instance across workers.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= int(seed) < _U64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= int(stream) < _U64:
            raise ValueError(f"stream must be a 64-bit unsigned integer, got {stream}")
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def split(self, stream: int) -> "SeededRng":
        """Fresh independent generator with the same seed and a new stream id."""
        return SeededRng(self.seed, stream)

    def raw64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        return self._bits.random_raw(n)

    def uniform01(self, n: int) -> np.ndarray:
        """``n`` uniforms in [0, 1) with 53-bit resolution."""
        return (self.raw64(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_MINUS_53

    def normal(self, n: int) -> np.ndarray:
        """``n`` i.i.d. standard normal variates via Box-Muller."""
        if n == 0:
            return np.zeros(0)
        pairs = (n + 1) // 2
        raw = self.raw64(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_MINUS_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_POW_MINUS_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, bound: int, n: int = 1) -> np.ndarray:
        """``n`` unbiased integers in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        bound_u = np.uint64(bound)
        # Largest multiple of bound that fits in 64 bits; rejecting raws at or
        # above it removes modulo bias. Wraps to 0 when bound divides 2**64,
        # which the accept-all branch below handles.
        limit = np.uint64((_U64 - (_U64 % bound)) % _U64)
        out = np.empty(n, dtype=np.uint64)
        filled = 0
        while filled < n:
            raw = self.raw64(n - filled)
            keep = raw < limit if limit != 0 else np.ones_like(raw, dtype=bool)
            accepted = raw[keep] % bound_u
            out[filled:filled + accepted.size] = accepted
            filled += accepted.size
        return out.astype(np.int64)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"
