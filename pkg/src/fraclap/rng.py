"""Counter-based random streams (Philox4x32-10), vectorized with numpy.

Every random number is a pure function of ``(seed, point, walker, step,
block)``, so a walk's draws do not depend on how walkers are chunked or
which thread runs them.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 bijection.

    ``counter`` is a sequence of four uint32-valued arrays (broadcastable),
    ``key`` a pair of uint32 values.  Returns four uint64 arrays holding
    32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(int(key[0]) & 0xFFFFFFFF)
    k1 = np.uint64(int(key[1]) & 0xFFFFFFFF)
    for r in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if r + 1 < rounds:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    # 53-bit mantissa, strictly inside (0, 1)
    return ((hi >> np.uint64(5)).astype(np.float64) * 67108864.0
            + (lo >> np.uint64(6)).astype(np.float64) + 0.5) / 9007199254740992.0


class CounterStream:
    """Stateless uniform generator keyed by a 64-bit seed.

    ``uniforms(point, walkers, step, k)`` returns an array of shape
    ``(len(walkers), k)`` of doubles in (0, 1).  Distinct ``(point, walker,
    step, slot)`` tuples never share counters; walker indices must fit in
    32 bits.
    """

    def __init__(self, seed: int):
        seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.seed = seed
        self._key = (seed & 0xFFFFFFFF, seed >> 32)

    def uniforms(self, point: int, walkers, step: int, k: int, slot: int = 0):
        walkers = np.asarray(walkers, dtype=np.uint64)
        nblocks = (k + 1) // 2
        out = np.empty((walkers.size, 2 * nblocks))
        for b in range(nblocks):
            block = np.uint64(((slot * 1024 + b) & 0xFFFFFFFF))
            c3 = np.full(walkers.shape, block, dtype=np.uint64)
            r = philox4x32((walkers & _MASK,
                            np.full(walkers.shape, np.uint64(point & 0xFFFFFFFF)),
                            np.full(walkers.shape, np.uint64(step & 0xFFFFFFFF)),
                            c3), self._key)
            out[:, 2 * b] = _to_unit(r[0], r[1])
            out[:, 2 * b + 1] = _to_unit(r[2], r[3])
        return out[:, :k]
