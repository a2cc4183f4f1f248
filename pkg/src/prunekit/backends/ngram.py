"""Additive-smoothing n-gram likelihood backend.

A desk-scale stand-in for a large pruner model: deterministic, exactly
normalized, cheap enough to brute-force against. Sequences are scored
with the (compiled or fallback) scan kernel over flattened tables; the
sentence start is padded with order-1 BOS sentinels, and any unit outside
the fitted vocabulary scores as UNK.
"""

from __future__ import annotations

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from ..core import Objective, TokenUnit, unit_texts
from ..errors import EmptyCorpus, ValidationError
from . import _scan
from ._tables import ScanTables, build_tables
from .base import BackendDescriptor

UnitSeq = Sequence[Union[TokenUnit, str]]


@dataclass
class NgramModel:
    """Smoothed conditional model p(unit | previous order-1 units).

    p(v | ctx) = (count(ctx, v) + alpha) / (total(ctx) + alpha * (|V| + 1));
    the extra +1 reserves floor mass for UNK, so each conditional sums to
    one over vocab + UNK. With alpha = 0 unseen events score -inf.
    """

    order: int
    smoothing_alpha: float
    vocab: Tuple[str, ...]
    counts: Dict[Tuple[str, ...], Counter]
    tables: ScanTables = field(repr=False)
    _ids: Dict[str, int] = field(repr=False)

    BOS = "<bos>"

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, units: UnitSeq) -> np.ndarray:
        unk = self.tables.unk_id
        return np.array(
            [self._ids.get(t, unk) for t in unit_texts(units)], dtype=np.int32
        )

    def prob(self, unit: str, context: Sequence[str] = ()) -> float:
        """Conditional probability, mainly for tests and normalization checks."""
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        ctx = (self.BOS,) * (self.order - 1 - len(ctx)) + ctx
        counts = self.counts.get(ctx)
        denom_extra = self.smoothing_alpha * (self.vocab_size + 1)
        if counts is None:
            return 1.0 / (self.vocab_size + 1) if self.smoothing_alpha > 0 else 0.0
        total = sum(counts.values())
        return (counts.get(unit, 0) + self.smoothing_alpha) / (total + denom_extra)

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        h.update(f"{self.order}|{self.smoothing_alpha!r}".encode())
        for v in self.vocab:
            h.update(v.encode())
            h.update(b"\x00")
        for ctx in sorted(self.counts):
            h.update("\x1f".join(ctx).encode())
            for tok, cnt in sorted(self.counts[ctx].items()):
                h.update(f"{tok}\x1e{cnt}".encode())
        return h.hexdigest()


def fit_ngram(corpus: Sequence[UnitSeq], order: int, alpha: float) -> NgramModel:
    """Count-based additive-smoothing model over token-unit sequences."""
    if order not in (1, 2, 3):
        raise ValidationError(f"order must be 1, 2, or 3, got {order}")
    if alpha < 0:
        raise ValidationError(f"smoothing alpha must be >= 0, got {alpha}")
    sequences = [unit_texts(seq) for seq in corpus]
    if not sequences or all(len(s) == 0 for s in sequences):
        raise EmptyCorpus("n-gram corpus must contain at least one non-empty sequence")

    vocab = tuple(sorted({t for seq in sequences for t in seq}))
    ids = {t: i for i, t in enumerate(vocab)}
    bos_id = len(vocab) + 1

    counts: Dict[Tuple[str, ...], Counter] = defaultdict(Counter)
    id_counts: Dict[Tuple[int, ...], Counter] = defaultdict(Counter)
    for seq in sequences:
        padded = (NgramModel.BOS,) * (order - 1) + seq
        for t in range(order - 1, len(padded)):
            ctx = padded[t - order + 1 : t]
            counts[ctx][padded[t]] += 1
            id_ctx = tuple(bos_id if c == NgramModel.BOS else ids[c] for c in ctx)
            id_counts[id_ctx][ids[padded[t]]] += 1

    tables = build_tables(order, len(vocab), id_counts, alpha)
    return NgramModel(
        order=order,
        smoothing_alpha=alpha,
        vocab=vocab,
        counts=dict(counts),
        tables=tables,
        _ids=ids,
    )


def ngram_logprob(model: NgramModel, seq: UnitSeq) -> List[float]:
    """Per-token conditional log-probs; unseen units score as UNK."""
    if len(seq) == 0:
        return []
    return _scan.seq_logprobs(model.tables, model.encode(seq)).tolist()


class NgramBackend:
    """LikelihoodBackend over an NgramModel, with a batched deletion scan."""

    def __init__(self, model: NgramModel):
        self.model = model
        self._descriptor = BackendDescriptor(
            backend_id=f"ngram-o{model.order}-{model.fingerprint()}",
            provides_attention=False,
            max_sequence=2**31 - 1,
            concurrency_safe=True,
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def target_logprobs(self, context: UnitSeq, target: UnitSeq) -> List[float]:
        if len(target) == 0:
            return []
        ids = np.concatenate([self.model.encode(context), self.model.encode(target)])
        return _scan.seq_logprobs(self.model.tables, ids)[len(context):].tolist()

    def scan_deletion_candidates(
        self,
        question: UnitSeq,
        reasoning_remaining: UnitSeq,
        answer: UnitSeq,
        objective: Objective,
    ) -> List[float]:
        """Objective score of each single-deletion candidate, kernel-evaluated.

        Bit-identical to scoring each candidate through target_logprobs.
        """
        scores = _scan.deletion_scan(
            self.model.tables,
            self.model.encode(question),
            self.model.encode(reasoning_remaining),
            self.model.encode(answer),
            objective is Objective.JOINT,
        )
        return scores.tolist()
