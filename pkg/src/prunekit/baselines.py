"""Comparison ranking rules: uniform, surprisal, cumulative-attention, external.

Each method scores every reasoning token with a priority; lower priority
means pruned earlier. One shared pruning path turns any priority vector
into keep sets, so all methods produce keep sets of identical size at the
same keep fraction and the sets are nested across fractions. Ties break
to the lowest index everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .backends.base import AttentionTensor, Span
from .core import Instance, KeepFraction, KeepSet, RhoLike
from .errors import LengthMismatch, MissingScores, SpanOutOfBounds, ValidationError


class RankMethod(Enum):
    UNIFORM = "uniform"
    SURPRISAL = "surprisal"
    H2O = "h2o"
    EXTERNAL = "external"


@dataclass(frozen=True)
class RankVector:
    """Per-token pruning priorities; lower priority is pruned earlier."""

    instance_id: str
    priorities: Tuple[float, ...]
    method: RankMethod

    def __post_init__(self):
        if not self.priorities:
            raise ValidationError("rank vector must cover at least one token")
        if not all(math.isfinite(p) for p in self.priorities):
            raise ValidationError("rank priorities must be finite")

    @property
    def n(self) -> int:
        return len(self.priorities)

    def deletion_order(self) -> Tuple[int, ...]:
        """1-based indices in the order they would be pruned."""
        return tuple(
            sorted(range(1, self.n + 1), key=lambda i: (self.priorities[i - 1], i))
        )


def uniform_ranks(n: int, seed: int, instance_id: str = "") -> RankVector:
    """Non-informative baseline: a seeded random deletion order."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    priorities = rng.permutation(n) + 1
    return RankVector(
        instance_id=instance_id,
        priorities=tuple(float(p) for p in priorities),
        method=RankMethod.UNIFORM,
    )


def surprisal_ranks(surprisals: Sequence[float], instance_id: str = "") -> RankVector:
    """Low surprisal (highly predictable) tokens are pruned first."""
    return RankVector(
        instance_id=instance_id,
        priorities=tuple(float(s) for s in surprisals),
        method=RankMethod.SURPRISAL,
    )


def h2o_importance(attn: AttentionTensor, reasoning_span: Span) -> np.ndarray:
    """Cumulative attention each span position receives from all later positions,
    summed over layers and heads."""
    T = attn.length
    if reasoning_span.stop > T:
        raise SpanOutOfBounds(
            f"span [{reasoning_span.start}, {reasoning_span.stop}] exceeds sequence length {T}"
        )
    summed = attn.values.sum(axis=(0, 1))
    future = np.tril(summed, -1).sum(axis=0)  # column t: rows strictly below t
    return future[reasoning_span.start - 1 : reasoning_span.stop]


def h2o_ranks(
    attn: AttentionTensor, reasoning_span: Span, instance_id: str = ""
) -> RankVector:
    """Heavy-hitter importance adapted to hard token deletion: tokens with the
    least cumulative future attention are pruned first."""
    importance = h2o_importance(attn, reasoning_span)
    return RankVector(
        instance_id=instance_id,
        priorities=tuple(float(v) for v in importance),
        method=RankMethod.H2O,
    )


def external_ranks(scores: Optional[Sequence[Optional[float]]], inst: Instance) -> RankVector:
    """Imported importance scores (e.g. a learned classifier's probability of
    the important class); lowest importance is pruned first."""
    if scores is None:
        raise MissingScores(f"no external scores for instance {inst.id!r}")
    if len(scores) != inst.n:
        raise LengthMismatch(
            f"instance {inst.id!r} has {inst.n} reasoning tokens but {len(scores)} scores"
        )
    missing = [i + 1 for i, s in enumerate(scores) if s is None]
    if missing:
        raise MissingScores(f"instance {inst.id!r} missing scores at indices {missing}")
    return RankVector(
        instance_id=inst.id,
        priorities=tuple(float(s) for s in scores),
        method=RankMethod.EXTERNAL,
    )


def prune_by_ranks(ranks: RankVector, rho: RhoLike) -> KeepSet:
    """Keep the ceil(rho*n) highest-priority tokens, original order preserved."""
    rho = KeepFraction.parse(rho)
    n = ranks.n
    m = rho.retained_length(n)
    deleted = set(ranks.deletion_order()[: n - m])
    kept = tuple(i for i in range(1, n + 1) if i not in deleted)
    return KeepSet(kept=kept, n=n)


