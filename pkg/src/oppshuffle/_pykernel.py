"""Pure-Python trial kernel.

Reference implementation of the per-trial simulation loop.  The compiled
kernel in ``_speedups.pyx`` mirrors this module draw-for-draw: both consume
the same raw uint64 stream from a numpy bit generator and apply identical
masked-rejection / Fisher-Yates logic, so for a given bit generator state
the two produce bit-identical trajectories.  Keep the two in sync.

All node and item indices here are 0-based; the public API layers convert
to 1-based NodeId / item labels.
"""

from __future__ import annotations

import numpy as np

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


class _RawStream:
    """Buffered raw uint64 draws from a numpy BitGenerator."""

    __slots__ = ("_bitgen", "_block", "_buf", "_pos")

    def __init__(self, bitgen, block=1024):
        self._bitgen = bitgen
        self._block = block
        self._buf = []
        self._pos = 0

    def u64(self):
        if self._pos == len(self._buf):
            self._buf = self._bitgen.random_raw(self._block).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def _randbelow(raw, k):
    """Uniform integer in [0, k) by masked rejection; k <= 1 consumes no draw."""
    if k <= 1:
        return 0
    mask = (1 << (k - 1).bit_length()) - 1
    while True:
        v = raw.u64() & mask
        if v < k:
            return v


def _exchange(holdings, holder, i, j, raw):
    """Swap floor(half) of i's items with floor(half) of j's, atomically.

    Selections are partial Fisher-Yates draws against the pre-exchange
    holdings; remaining items keep their relative order and received items
    are appended, which the compiled kernel reproduces exactly.
    """
    hi, hj = holdings[i], holdings[j]
    ci, cj = len(hi), len(hj)
    ki, kj = ci // 2, cj // 2
    for t in range(ki):
        r = t + _randbelow(raw, ci - t)
        hi[t], hi[r] = hi[r], hi[t]
    for t in range(kj):
        r = t + _randbelow(raw, cj - t)
        hj[t], hj[r] = hj[r], hj[t]
    sel_i, sel_j = hi[:ki], hj[:kj]
    holdings[i] = hi[ki:] + sel_j
    holdings[j] = hj[kj:] + sel_i
    for d in sel_j:
        holder[d] = i
    for d in sel_i:
        holder[d] = j


def _record(r, holder, item_index, counts_out, history_out):
    if counts_out is not None:
        counts_out[r, item_index, holder] += 1
    if history_out is not None:
        history_out[r] = holder


def _init_state(n, m):
    holdings = [list(range(i * m, (i + 1) * m)) for i in range(n)]
    holder = [d // m for d in range(n * m)]
    return holdings, holder


def markov_trial(cum, n, m, rounds, bitgen, counts_out=None, history_out=None):
    """One trial under transition-matrix mobility.

    ``cum`` is the row-cumulative transition matrix (last column forced to
    1.0).  Each round visits every node once in a uniformly shuffled order;
    the visited node samples one outcome from its row and, if the outcome
    is a partner, the pair exchanges immediately.
    """
    raw = _RawStream(bitgen)
    rows = [list(map(float, row)) for row in np.asarray(cum)]
    holdings, holder = _init_state(n, m)
    item_index = np.arange(n * m)
    order = list(range(n))
    _record(0, holder, item_index, counts_out, history_out)
    for r in range(1, rounds + 1):
        for t in range(n - 1):
            s = t + _randbelow(raw, n - t)
            order[t], order[s] = order[s], order[t]
        for i in order:
            u = (raw.u64() >> 11) * _INV53
            row = rows[i]
            j = n - 1
            for t in range(n):
                if u < row[t]:
                    j = t
                    break
            if j != i:
                _exchange(holdings, holder, i, j, raw)
        _record(r, holder, item_index, counts_out, history_out)


def pairs_trial(pair_a, pair_b, offsets, n, m, rounds, bitgen, counts_out=None, history_out=None):
    """One trial under precomputed contact pairs.

    Round r (1-based) applies exchanges ``offsets[r-1]:offsets[r]`` from the
    flat pair arrays, in order.  Rounds with no pairs still get recorded.
    """
    raw = _RawStream(bitgen)
    pa = [int(x) for x in pair_a]
    pb = [int(x) for x in pair_b]
    offs = [int(x) for x in offsets]
    holdings, holder = _init_state(n, m)
    item_index = np.arange(n * m)
    _record(0, holder, item_index, counts_out, history_out)
    for r in range(1, rounds + 1):
        for e in range(offs[r - 1], offs[r]):
            _exchange(holdings, holder, pa[e], pb[e], raw)
        _record(r, holder, item_index, counts_out, history_out)
