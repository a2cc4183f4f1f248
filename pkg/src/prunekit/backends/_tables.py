"""Flattened n-gram probability tables consumed by the scan kernels.

The model is stored CSR-style: observed contexts as sorted int64 keys,
each with a sorted run of (token id, log-prob) pairs plus a floor log-prob
for tokens unseen in that context. Unseen contexts share one default
log-prob. Both the compiled and the pure-Python kernel read these tables,
so the two paths look up bit-identical values.

Token ids: vocabulary units are 0..V-1, UNK is V, the BOS padding
sentinel is V+1. A context is packed into one int64 key:
order 1 -> 0, order 2 -> c1, order 3 -> c1 * (V + 2) + c2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np


@dataclass
class ScanTables:
    order: int
    vocab_size: int
    ctx_keys: np.ndarray        # int64 [C], sorted
    row_ptr: np.ndarray         # int64 [C+1]
    tok_ids: np.ndarray         # int32 [NNZ], sorted within each row
    tok_lp: np.ndarray          # float64 [NNZ]
    ctx_floor_lp: np.ndarray    # float64 [C]
    default_lp: float
    _py_rows: Optional[Dict[int, Tuple[Dict[int, float], float]]] = field(
        default=None, repr=False, compare=False
    )

    @property
    def unk_id(self) -> int:
        return self.vocab_size

    @property
    def bos_id(self) -> int:
        return self.vocab_size + 1

    @property
    def key_base(self) -> int:
        return self.vocab_size + 2

    def py_rows(self) -> Dict[int, Tuple[Dict[int, float], float]]:
        """context key -> ({token id: log-prob}, floor log-prob), built lazily."""
        if self._py_rows is None:
            rows: Dict[int, Tuple[Dict[int, float], float]] = {}
            ptr = self.row_ptr
            for c, key in enumerate(self.ctx_keys.tolist()):
                lo, hi = int(ptr[c]), int(ptr[c + 1])
                toks = {
                    int(t): float(v)
                    for t, v in zip(self.tok_ids[lo:hi].tolist(), self.tok_lp[lo:hi].tolist())
                }
                rows[int(key)] = (toks, float(self.ctx_floor_lp[c]))
            self._py_rows = rows
        return self._py_rows


def build_tables(
    order: int,
    vocab_size: int,
    context_counts: Mapping[Tuple[int, ...], Mapping[int, int]],
    alpha: float,
) -> ScanTables:
    """Additive-smoothing conditionals, flattened for kernel lookup.

    p(v | ctx) = (count + alpha) / (total + alpha * (V + 1)); the +1 grants
    UNK floor mass.  alpha = 0 leaves unseen events at -inf.
    """
    base = vocab_size + 2
    denom_extra = alpha * (vocab_size + 1)

    keyed = {}
    for ctx, counts in context_counts.items():
        key = 0
        for c in ctx:
            key = key * base + c
        keyed[key] = counts

    ctx_keys = np.array(sorted(keyed), dtype=np.int64)
    row_ptr = np.zeros(len(ctx_keys) + 1, dtype=np.int64)
    tok_ids, tok_lp, floors = [], [], []
    for c, key in enumerate(ctx_keys.tolist()):
        counts = keyed[key]
        total = sum(counts.values())
        denom = total + denom_extra
        for tok in sorted(counts):
            tok_ids.append(tok)
            tok_lp.append(float(np.log((counts[tok] + alpha) / denom)))
        floors.append(float(np.log(alpha / denom)) if alpha > 0 else -np.inf)
        row_ptr[c + 1] = len(tok_ids)

    default_lp = float(np.log(1.0 / (vocab_size + 1))) if alpha > 0 else -np.inf
    return ScanTables(
        order=order,
        vocab_size=vocab_size,
        ctx_keys=ctx_keys,
        row_ptr=row_ptr,
        tok_ids=np.array(tok_ids, dtype=np.int32),
        tok_lp=np.array(tok_lp, dtype=np.float64),
        ctx_floor_lp=np.array(floors, dtype=np.float64),
        default_lp=default_lp,
    )
