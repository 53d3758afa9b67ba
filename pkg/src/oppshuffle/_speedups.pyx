# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trial kernel.

Mirror of ``_pykernel`` (see its docstring): identical draw order and
identical masked-rejection / Fisher-Yates logic on the same raw uint64
stream, so both backends produce bit-identical trajectories from the same
bit generator state.  Keep the two in sync.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

cimport numpy as cnp
import numpy as np

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64

cdef double _INV53 = 1.0 / 9007199254740992.0  # 2**-53


cdef inline bitgen_t *_get_bitgen(object bitgen) except NULL:
    cdef const char *name = "BitGenerator"
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, name):
        raise ValueError("object does not expose a BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, name)


cdef inline unsigned long long _randbelow(bitgen_t *rng, unsigned long long k) noexcept nogil:
    # Uniform in [0, k) by masked rejection; k <= 1 consumes no draw.
    cdef unsigned long long mask, v
    if k <= 1:
        return 0
    mask = k - 1
    mask |= mask >> 1
    mask |= mask >> 2
    mask |= mask >> 4
    mask |= mask >> 8
    mask |= mask >> 16
    mask |= mask >> 32
    while True:
        v = rng.next_uint64(rng.state) & mask
        if v < k:
            return v


cdef inline void _exchange(i32[:, ::1] H, i32[::1] cnt, i32[::1] holder,
                           i32[::1] tmp_a, i32[::1] tmp_b,
                           Py_ssize_t i, Py_ssize_t j, bitgen_t *rng) noexcept nogil:
    cdef Py_ssize_t ci = cnt[i], cj = cnt[j]
    cdef Py_ssize_t ki = ci >> 1, kj = cj >> 1
    cdef Py_ssize_t t, r
    cdef i32 sw
    for t in range(ki):
        r = t + <Py_ssize_t>_randbelow(rng, <unsigned long long>(ci - t))
        sw = H[i, t]; H[i, t] = H[i, r]; H[i, r] = sw
    for t in range(kj):
        r = t + <Py_ssize_t>_randbelow(rng, <unsigned long long>(cj - t))
        sw = H[j, t]; H[j, t] = H[j, r]; H[j, r] = sw
    for t in range(ki):
        tmp_a[t] = H[i, t]
    for t in range(kj):
        tmp_b[t] = H[j, t]
    # compact remainders to the front (forward copy is safe: src > dst)
    for t in range(ci - ki):
        H[i, t] = H[i, ki + t]
    for t in range(cj - kj):
        H[j, t] = H[j, kj + t]
    for t in range(kj):
        H[i, ci - ki + t] = tmp_b[t]
        holder[tmp_b[t]] = <i32>i
    for t in range(ki):
        H[j, cj - kj + t] = tmp_a[t]
        holder[tmp_a[t]] = <i32>j
    cnt[i] = <i32>(ci - ki + kj)
    cnt[j] = <i32>(cj - kj + ki)


cdef inline void _record(Py_ssize_t r, i32[::1] holder, Py_ssize_t n_items,
                         bint has_c, i64[:, :, ::1] C,
                         bint has_h, i32[:, ::1] hist) noexcept nogil:
    cdef Py_ssize_t d
    if has_c:
        for d in range(n_items):
            C[r, d, holder[d]] += 1
    if has_h:
        for d in range(n_items):
            hist[r, d] = holder[d]


cdef void _init_state(i32[:, ::1] H, i32[::1] cnt, i32[::1] holder,
                      Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, t, item
    for i in range(n):
        cnt[i] = <i32>m
        for t in range(m):
            item = i * m + t
            H[i, t] = <i32>item
            holder[item] = <i32>i


def markov_trial(cum, int n, int m, int rounds, bitgen, counts_out=None, history_out=None):
    """One trial under transition-matrix mobility; see ``_pykernel.markov_trial``."""
    cdef bitgen_t *rng = _get_bitgen(bitgen)
    cdef Py_ssize_t n_items = n * m
    cdef double[:, ::1] rows = np.ascontiguousarray(cum, dtype=np.float64)
    if rows.shape[0] != n or rows.shape[1] != n:
        raise ValueError("cumulative matrix shape must be (n, n)")

    holdings = np.empty((n, n_items), dtype=np.int32)
    counts = np.empty(n, dtype=np.int32)
    holder_arr = np.empty(n_items, dtype=np.int32)
    order_arr = np.arange(n, dtype=np.int32)
    tmp_a = np.empty(n_items, dtype=np.int32)
    tmp_b = np.empty(n_items, dtype=np.int32)

    cdef i32[:, ::1] H = holdings
    cdef i32[::1] cnt = counts
    cdef i32[::1] holder = holder_arr
    cdef i32[::1] order = order_arr
    cdef i32[::1] ta = tmp_a
    cdef i32[::1] tb = tmp_b

    cdef bint has_c = counts_out is not None
    cdef bint has_h = history_out is not None
    cdef i64[:, :, ::1] C = counts_out if has_c else np.zeros((1, 1, 1), dtype=np.int64)
    cdef i32[:, ::1] hist = history_out if has_h else np.zeros((1, 1), dtype=np.int32)
    if has_c and (C.shape[0] != rounds + 1 or C.shape[1] != n_items or C.shape[2] != n):
        raise ValueError("counts_out shape must be (rounds+1, n*m, n)")
    if has_h and (hist.shape[0] != rounds + 1 or hist.shape[1] != n_items):
        raise ValueError("history_out shape must be (rounds+1, n*m)")

    cdef Py_ssize_t r, t, s, idx, i, j
    cdef double u
    cdef i32 sw
    with nogil:
        _init_state(H, cnt, holder, n, m)
        _record(0, holder, n_items, has_c, C, has_h, hist)
        for r in range(1, rounds + 1):
            for t in range(n - 1):
                s = t + <Py_ssize_t>_randbelow(rng, <unsigned long long>(n - t))
                sw = order[t]; order[t] = order[s]; order[s] = sw
            for idx in range(n):
                i = order[idx]
                u = <double>(rng.next_uint64(rng.state) >> 11) * _INV53
                j = n - 1
                for t in range(n):
                    if u < rows[i, t]:
                        j = t
                        break
                if j != i:
                    _exchange(H, cnt, holder, ta, tb, i, j, rng)
            _record(r, holder, n_items, has_c, C, has_h, hist)


def pairs_trial(pair_a, pair_b, offsets, int n, int m, int rounds, bitgen,
                counts_out=None, history_out=None):
    """One trial under precomputed contact pairs; see ``_pykernel.pairs_trial``."""
    cdef bitgen_t *rng = _get_bitgen(bitgen)
    cdef Py_ssize_t n_items = n * m
    cdef i32[::1] pa = np.ascontiguousarray(pair_a, dtype=np.int32)
    cdef i32[::1] pb = np.ascontiguousarray(pair_b, dtype=np.int32)
    cdef i64[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    if offs.shape[0] != rounds + 1:
        raise ValueError("offsets length must be rounds+1")
    if pa.shape[0] != pb.shape[0]:
        raise ValueError("pair arrays must have equal length")

    holdings = np.empty((n, n_items), dtype=np.int32)
    counts = np.empty(n, dtype=np.int32)
    holder_arr = np.empty(n_items, dtype=np.int32)
    tmp_a = np.empty(n_items, dtype=np.int32)
    tmp_b = np.empty(n_items, dtype=np.int32)

    cdef i32[:, ::1] H = holdings
    cdef i32[::1] cnt = counts
    cdef i32[::1] holder = holder_arr
    cdef i32[::1] ta = tmp_a
    cdef i32[::1] tb = tmp_b

    cdef bint has_c = counts_out is not None
    cdef bint has_h = history_out is not None
    cdef i64[:, :, ::1] C = counts_out if has_c else np.zeros((1, 1, 1), dtype=np.int64)
    cdef i32[:, ::1] hist = history_out if has_h else np.zeros((1, 1), dtype=np.int32)
    if has_c and (C.shape[0] != rounds + 1 or C.shape[1] != n_items or C.shape[2] != n):
        raise ValueError("counts_out shape must be (rounds+1, n*m, n)")
    if has_h and (hist.shape[0] != rounds + 1 or hist.shape[1] != n_items):
        raise ValueError("history_out shape must be (rounds+1, n*m)")

    cdef Py_ssize_t r, e
    with nogil:
        _init_state(H, cnt, holder, n, m)
        _record(0, holder, n_items, has_c, C, has_h, hist)
        for r in range(1, rounds + 1):
            for e in range(offs[r - 1], offs[r]):
                _exchange(H, cnt, holder, ta, tb, pa[e], pb[e], rng)
            _record(r, holder, n_items, has_c, C, has_h, hist)
