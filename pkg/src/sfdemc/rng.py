"""Counter-based normal variates (Philox4x32-10) evaluated in bulk.

Every normal draw is a pure function of ``(seed, path index, stream id,
position)``, so any subset of paths can be regenerated independently and
in any order.  This is what makes ensemble results independent of how the
paths are split across workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_LO = np.uint64(0xFFFFFFFF)
_U32 = np.uint32

_MASK64 = (1 << 64) - 1


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = 10):
    """Philox4x32 block function on uint32 arrays (broadcast together).

    Parameters
    ----------
    c0, c1, c2, c3 : array_like of uint32
        Counter words.
    k0, k1 : int
        Key words (32-bit).

    Returns
    -------
    tuple of four uint32 arrays
    """
    c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=_U32) for c in (c0, c1, c2, c3)))
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for _ in range(rounds):
        p0 = _M0 * c0.astype(np.uint64)
        p1 = _M1 * c2.astype(np.uint64)
        hi0 = (p0 >> np.uint64(32)).astype(_U32)
        lo0 = (p0 & _LO).astype(_U32)
        hi1 = (p1 >> np.uint64(32)).astype(_U32)
        lo1 = (p1 & _LO).astype(_U32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ _U32(k0), lo1, hi0 ^ c3 ^ _U32(k1), lo0
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _uniform53(hi, lo):
    # 53 random bits mapped to the open interval (0, 1)
    bits = (hi.astype(np.uint64) << np.uint64(21)) ^ (lo.astype(np.uint64) >> np.uint64(11))
    return (bits.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(seed: int, path_ids, n: int, stream: int = 0, offset: int = 0) -> np.ndarray:
    """Standard normal draws for a set of paths.

    Parameters
    ----------
    seed : int
        64-bit master seed.
    path_ids : array_like of int
        Path indices (64-bit); one row of output per entry.
    n : int
        Number of draws per path.
    stream : int
        Independent sub-stream id (32-bit) for the same path.
    offset : int
        Index of the first draw inside the path's stream.  Must be even.

    Returns
    -------
    ndarray, shape (len(path_ids), n)
    """
    if offset % 2:
        raise ValueError("offset must be even")
    ids = np.atleast_1d(np.asarray(path_ids, dtype=np.uint64))
    seed &= _MASK64
    q0 = offset // 2
    nq = (n + 1) // 2
    if nq == 0:
        return np.zeros((ids.size, 0))
    ctr = np.arange(q0, q0 + nq, dtype=np.uint64)
    c0 = (ctr & _LO).astype(_U32)[None, :]
    c1 = (ids & _LO).astype(_U32)[:, None]
    c2 = (ids >> np.uint64(32)).astype(_U32)[:, None]
    c3 = np.full((1, 1), stream & 0xFFFFFFFF, dtype=_U32)
    if q0 + nq > 0xFFFFFFFF:
        raise ValueError("per-path stream exhausted")
    r0, r1, r2, r3 = philox4x32(c0, c1, c2, c3, seed & 0xFFFFFFFF, seed >> 32)
    u = np.empty((ids.size, 2 * nq))
    u[:, 0::2] = _uniform53(r0, r1)
    u[:, 1::2] = _uniform53(r2, r3)
    return ndtri(u[:, :n])


@dataclass(frozen=True)
class RngStream:
    """One path's reproducible random stream.

    ``counter`` is the index of the next draw; :meth:`draw` returns the draws
    and an advanced copy of the stream.
    """

    seed: int
    path_index: int
    counter: int = 0
    stream: int = 0

    def draw(self, n: int) -> tuple[np.ndarray, "RngStream"]:
        start = self.counter + (self.counter % 2)
        z = normals(self.seed, [self.path_index], n, self.stream, start)[0]
        return z, RngStream(self.seed, self.path_index, start + n, self.stream)
