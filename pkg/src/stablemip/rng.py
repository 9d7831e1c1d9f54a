"""Counter-based random streams (Philox4x32-10).

Every draw is a pure function of ``(key, counter)``, so the uniforms used by a
particle at a given step do not depend on how work is scheduled.  The counter
words are laid out as ``(block, step, stream, tag)``; the key is derived from
the experiment seed and the replication index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

# purpose tags (fourth counter word)
TAG_DYNAMICS = 0
TAG_INITIAL = 1
TAG_AUX = 2


@njit(cache=True, nogil=True, inline="always")
def _philox_round(c0, c1, c2, c3, k0, k1):
    p0 = _M0 * c0
    p1 = _M1 * c2
    hi0 = p0 >> np.uint64(32)
    lo0 = p0 & _MASK32
    hi1 = p1 >> np.uint64(32)
    lo1 = p1 & _MASK32
    return hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; inputs and outputs are 32-bit words in uint64."""
    c0 = np.uint64(c0) & _MASK32
    c1 = np.uint64(c1) & _MASK32
    c2 = np.uint64(c2) & _MASK32
    c3 = np.uint64(c3) & _MASK32
    k0 = np.uint64(k0) & _MASK32
    k1 = np.uint64(k1) & _MASK32
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        c0, c1, c2, c3 = _philox_round(c0, c1, c2, c3, k0, k1)
    return c0, c1, c2, c3


_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def fill_uniforms(out, k0, k1, tag, step, streams):
    """Fill ``out[i, :]`` with open-interval (0, 1) doubles for stream ``streams[i]``.

    Each Philox block yields two 53-bit doubles.
    """
    n, m = out.shape
    nblocks = (m + 1) // 2
    for i in range(n):
        s = np.uint64(streams[i])
        s_lo = s & _MASK32
        s_hi = s >> np.uint64(32)
        j = 0
        for b in range(nblocks):
            # the stream id spans counter words 2 and (folded into) 3
            r0, r1, r2, r3 = philox4x32(b, step, s_lo, np.uint64(tag) ^ (s_hi << np.uint64(8)), k0, k1)
            a = ((r0 >> np.uint64(5)) << np.uint64(26)) | (r1 >> np.uint64(6))
            out[i, j] = (np.float64(a) + 0.5) * _INV53
            j += 1
            if j < m:
                a = ((r2 >> np.uint64(5)) << np.uint64(26)) | (r3 >> np.uint64(6))
                out[i, j] = (np.float64(a) + 0.5) * _INV53
                j += 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class StreamFamily:
    """A family of independent streams for one (seed, replication) pair.

    ``uniforms(tag, step, streams, m)`` returns an ``(len(streams), m)`` array;
    row ``i`` depends only on ``streams[i]``, the step and the tag.
    """

    seed: int
    replication: int = 0

    @property
    def key(self) -> tuple[int, int]:
        z = _splitmix64(_splitmix64(self.seed & 0xFFFFFFFFFFFFFFFF) ^ (self.replication & 0xFFFFFFFFFFFFFFFF))
        return z & 0xFFFFFFFF, z >> 32

    def uniforms(self, tag: int, step: int, streams, m: int) -> np.ndarray:
        streams = np.ascontiguousarray(streams, dtype=np.uint64)
        out = np.empty((streams.shape[0], m))
        k0, k1 = self.key
        fill_uniforms(out, np.uint64(k0), np.uint64(k1), np.uint64(tag), np.uint64(step), streams)
        return out
