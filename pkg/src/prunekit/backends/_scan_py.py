"""Pure-Python n-gram scan kernel; mirror of the compiled _scan_cy module.

Both kernels read the same ScanTables and accumulate left-to-right in
IEEE double precision, so their outputs are bit-identical. Keep this file
in sync with _scan_cy.pyx.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from ._tables import ScanTables


def _as_id_list(ids) -> List[int]:
    if isinstance(ids, np.ndarray):
        return ids.tolist()
    return [int(i) for i in ids]


def _lp_at(rows, default_lp: float, key: int, tok: int) -> float:
    row = rows.get(key)
    if row is None:
        return default_lp
    toks, floor = row
    lp = toks.get(tok)
    return floor if lp is None else lp


def _ctx_key(ids: List[int], t: int, order: int, bos: int, base: int) -> int:
    if order == 1:
        return 0
    p1 = ids[t - 1] if t >= 1 else bos
    if order == 2:
        return p1
    p2 = ids[t - 2] if t >= 2 else bos
    return p2 * base + p1


def seq_logprobs(tables: ScanTables, ids) -> np.ndarray:
    """Per-token conditional log-probs with BOS padding at the sequence start."""
    ids = _as_id_list(ids)
    rows = tables.py_rows()
    order, bos, base, default_lp = tables.order, tables.bos_id, tables.key_base, tables.default_lp
    out = np.empty(len(ids), dtype=np.float64)
    for t, tok in enumerate(ids):
        out[t] = _lp_at(rows, default_lp, _ctx_key(ids, t, order, bos, base), tok)
    return out


def deletion_scan(tables: ScanTables, q_ids, r_ids, a_ids, joint: bool) -> np.ndarray:
    """Objective score of every single-deletion candidate of the reasoning span.

    Candidate c scores the sequence q + r[:c] + r[c+1:] + a; the target is
    the reasoning+answer span (joint) or the answer span alone. Log-probs
    of target tokens before the deletion point are reused from the base
    sequence (their context windows are untouched); the accumulation order
    matches a naive left-to-right sum exactly.
    """
    q_ids, r_ids, a_ids = _as_id_list(q_ids), _as_id_list(r_ids), _as_id_list(a_ids)
    rows = tables.py_rows()
    order, bos, base, default_lp = tables.order, tables.bos_id, tables.key_base, tables.default_lp
    q_len, n, a_len = len(q_ids), len(r_ids), len(a_ids)

    seq = q_ids + r_ids + a_ids
    base_lp = [
        _lp_at(rows, default_lp, _ctx_key(seq, t, order, bos, base), seq[t])
        for t in range(q_len, q_len + n)
    ]
    prefix = [0.0] * (n + 1)
    acc = 0.0
    for j in range(n):
        acc += base_lp[j]
        prefix[j + 1] = acc

    scores = np.empty(n, dtype=np.float64)
    for c in range(n):
        cand = seq[: q_len + c] + seq[q_len + c + 1 :]
        start = q_len + c
        if joint:
            s = prefix[c]
            for t in range(start, len(cand)):
                s += _lp_at(rows, default_lp, _ctx_key(cand, t, order, bos, base), cand[t])
        else:
            s = 0.0
            for t in range(len(cand) - a_len, len(cand)):
                s += _lp_at(rows, default_lp, _ctx_key(cand, t, order, bos, base), cand[t])
        scores[c] = s
    return scores
