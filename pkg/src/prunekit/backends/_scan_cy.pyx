# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled n-gram scan kernel; mirror of _scan_py.

Reads the same ScanTables and accumulates left-to-right in C doubles, so
outputs are bit-identical to the pure-Python kernel. Keep this file in
sync with _scan_py.py.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32
ctypedef cnp.float64_t f64


cdef inline Py_ssize_t _bsearch_i64(const i64[::1] arr, i64 key) nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < arr.shape[0] and arr[lo] == key:
        return lo
    return -1


cdef inline Py_ssize_t _bsearch_i32(const i32[::1] arr, Py_ssize_t lo, Py_ssize_t hi, i32 key) nogil:
    cdef Py_ssize_t mid, end = hi
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < end and arr[lo] == key:
        return lo
    return -1


cdef inline double _lp_at(
    const i64[::1] ctx_keys,
    const i64[::1] row_ptr,
    const i32[::1] tok_ids,
    const f64[::1] tok_lp,
    const f64[::1] floor_lp,
    double default_lp,
    i64 key,
    i32 tok,
) nogil:
    cdef Py_ssize_t c = _bsearch_i64(ctx_keys, key)
    if c < 0:
        return default_lp
    cdef Py_ssize_t j = _bsearch_i32(tok_ids, row_ptr[c], row_ptr[c + 1], tok)
    if j < 0:
        return floor_lp[c]
    return tok_lp[j]


cdef inline i64 _ctx_key(const i32[::1] ids, Py_ssize_t t, int order, i32 bos, i64 base) nogil:
    cdef i64 p1, p2
    if order == 1:
        return 0
    p1 = ids[t - 1] if t >= 1 else bos
    if order == 2:
        return p1
    p2 = ids[t - 2] if t >= 2 else bos
    return p2 * base + p1


def seq_logprobs(tables, ids):
    """Per-token conditional log-probs with BOS padding at the sequence start."""
    ids_arr = np.ascontiguousarray(ids, dtype=np.int32)
    cdef const i32[::1] v = ids_arr
    cdef const i64[::1] ctx_keys = tables.ctx_keys
    cdef const i64[::1] row_ptr = tables.row_ptr
    cdef const i32[::1] tok_ids = tables.tok_ids
    cdef const f64[::1] tok_lp = tables.tok_lp
    cdef const f64[::1] floor_lp = tables.ctx_floor_lp
    cdef double default_lp = tables.default_lp
    cdef int order = tables.order
    cdef i32 bos = tables.bos_id
    cdef i64 base = tables.key_base

    cdef Py_ssize_t t, n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef f64[::1] o = out
    for t in range(n):
        o[t] = _lp_at(ctx_keys, row_ptr, tok_ids, tok_lp, floor_lp, default_lp,
                      _ctx_key(v, t, order, bos, base), v[t])
    return out


def deletion_scan(tables, q_ids, r_ids, a_ids, bint joint):
    """Objective score of every single-deletion candidate of the reasoning span.

    Same contract and accumulation order as _scan_py.deletion_scan.
    """
    q_arr = np.ascontiguousarray(q_ids, dtype=np.int32)
    r_arr = np.ascontiguousarray(r_ids, dtype=np.int32)
    a_arr = np.ascontiguousarray(a_ids, dtype=np.int32)
    cdef const i64[::1] ctx_keys = tables.ctx_keys
    cdef const i64[::1] row_ptr = tables.row_ptr
    cdef const i32[::1] tok_ids = tables.tok_ids
    cdef const f64[::1] tok_lp = tables.tok_lp
    cdef const f64[::1] floor_lp = tables.ctx_floor_lp
    cdef double default_lp = tables.default_lp
    cdef int order = tables.order
    cdef i32 bos = tables.bos_id
    cdef i64 base = tables.key_base

    cdef Py_ssize_t q_len = q_arr.shape[0]
    cdef Py_ssize_t n = r_arr.shape[0]
    cdef Py_ssize_t a_len = a_arr.shape[0]
    cdef Py_ssize_t total = q_len + n + a_len

    seq_np = np.concatenate([q_arr, r_arr, a_arr])
    cdef const i32[::1] seq = seq_np

    # Base-sequence log-probs of the reasoning span, then running prefix sums.
    prefix_np = np.zeros(n + 1, dtype=np.float64)
    cdef f64[::1] prefix = prefix_np
    cdef double acc = 0.0
    cdef Py_ssize_t j, t, c, start
    for j in range(n):
        acc += _lp_at(ctx_keys, row_ptr, tok_ids, tok_lp, floor_lp, default_lp,
                      _ctx_key(seq, q_len + j, order, bos, base), seq[q_len + j])
        prefix[j + 1] = acc

    cand_np = np.empty(total - 1, dtype=np.int32)
    cdef i32[::1] cand = cand_np
    scores_np = np.empty(n, dtype=np.float64)
    cdef f64[::1] scores = scores_np
    cdef double s
    cdef Py_ssize_t cand_len = total - 1

    for c in range(n):
        for t in range(q_len + c):
            cand[t] = seq[t]
        for t in range(q_len + c + 1, total):
            cand[t - 1] = seq[t]
        start = q_len + c
        if joint:
            s = prefix[c]
            for t in range(start, cand_len):
                s += _lp_at(ctx_keys, row_ptr, tok_ids, tok_lp, floor_lp, default_lp,
                            _ctx_key(cand, t, order, bos, base), cand[t])
        else:
            s = 0.0
            for t in range(cand_len - a_len, cand_len):
                s += _lp_at(ctx_keys, row_ptr, tok_ids, tok_lp, floor_lp, default_lp,
                            _ctx_key(cand, t, order, bos, base), cand[t])
        scores[c] = s
    return scores_np
