"""Retention curves per functional category, pruning-rank dynamics, and
category frequency tables.

Everything here is replayed from trace files and annotations; no backend
is ever re-queried, so analyses are reproducible from artifacts alone.
Tables are emitted as CSV for external plotting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .core import KeepFraction, PruneTrace, RhoLike, keep_set_at
from .errors import (
    AnnotationMismatch,
    EmptyInput,
    EmptyTransition,
    MissingStepRecords,
    ValidationError,
)


class Category(Enum):
    SYMB_MATH = "SymbMath"
    META_DISC = "MetaDisc"
    CO_REF = "CoRef"
    ENT_NAME = "EntName"
    VERBAL_MATH = "VerbalMath"
    GRAMMAR = "Grammar"


@dataclass(frozen=True)
class AnnotationSet:
    """One functional-role label per reasoning token of one instance."""

    instance_id: str
    categories: Tuple[Category, ...]

    def __post_init__(self):
        if not self.categories:
            raise ValidationError("annotation set must label at least one token")

    @property
    def n(self) -> int:
        return len(self.categories)


def annotation_from_json(obj: Mapping) -> AnnotationSet:
    try:
        return AnnotationSet(
            instance_id=str(obj["id"]),
            categories=tuple(Category(c) for c in obj["categories"]),
        )
    except KeyError as exc:
        raise ValidationError(f"annotation object missing field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def annotation_to_json(ann: AnnotationSet) -> dict:
    return {"id": ann.instance_id, "categories": [c.value for c in ann.categories]}


@dataclass(frozen=True)
class RetentionRow:
    rho: KeepFraction
    category: Category
    retention: float
    count: int


@dataclass(frozen=True)
class RetentionTable:
    rows: Tuple[RetentionRow, ...]

    def lookup(self, rho: RhoLike, category: Category) -> Optional[RetentionRow]:
        rho = KeepFraction.parse(rho)
        for row in self.rows:
            if row.rho == rho and row.category is category:
                return row
        return None


def retention_curves(
    traces: Sequence[PruneTrace],
    annotations: Mapping[str, AnnotationSet],
    grid: Sequence[RhoLike],
    *,
    macro: bool = False,
) -> RetentionTable:
    """Fraction of each category's tokens still kept at every grid fraction.

    Aggregation over instances is token-weighted (micro-average) by
    default: summed kept counts over summed totals. ``macro`` switches to
    an unweighted mean of per-instance fractions.
    """
    if not traces:
        raise EmptyInput("no traces given")
    pairs = []
    for trace in traces:
        ann = annotations.get(trace.instance_id)
        if ann is None:
            raise AnnotationMismatch(f"no annotation for instance {trace.instance_id!r}")
        if ann.n != trace.n:
            raise AnnotationMismatch(
                f"instance {trace.instance_id!r}: {trace.n} tokens but {ann.n} labels"
            )
        pairs.append((trace, ann))

    rows: List[RetentionRow] = []
    for rho in [KeepFraction.parse(r) for r in grid]:
        kept_counts: Dict[Category, int] = {}
        total_counts: Dict[Category, int] = {}
        fractions: Dict[Category, List[float]] = {}
        for trace, ann in pairs:
            kept = set(keep_set_at(trace, rho).kept)
            per_kept: Dict[Category, int] = {}
            per_total: Dict[Category, int] = {}
            for idx, cat in enumerate(ann.categories, start=1):
                per_total[cat] = per_total.get(cat, 0) + 1
                if idx in kept:
                    per_kept[cat] = per_kept.get(cat, 0) + 1
            for cat, total in per_total.items():
                total_counts[cat] = total_counts.get(cat, 0) + total
                kept_counts[cat] = kept_counts.get(cat, 0) + per_kept.get(cat, 0)
                fractions.setdefault(cat, []).append(per_kept.get(cat, 0) / total)
        for cat in sorted(total_counts, key=lambda c: c.value):
            if macro:
                retention = sum(fractions[cat]) / len(fractions[cat])
            else:
                retention = kept_counts[cat] / total_counts[cat]
            rows.append(
                RetentionRow(rho=rho, category=cat, retention=retention, count=total_counts[cat])
            )
    return RetentionTable(rows=tuple(rows))


class DynamicsMode(Enum):
    DYNAMIC = "dynamic"
    FROZEN = "frozen"
    RANDOM = "random"


def _step_for_survivor_count(trace: PruneTrace, count: int):
    for record in trace.steps:
        if len(record.candidate_scores) == count:
            return record
    return None


def dynamics_hit(
    trace: PruneTrace,
    rho_curr: RhoLike,
    delta: RhoLike = "0.1",
    mode: DynamicsMode = DynamicsMode.DYNAMIC,
) -> float:
    """How well a safety ranking at the previous stage predicts the tokens
    actually pruned by the next stage.

    S is the set pruned between rho_prev = rho_curr + delta and rho_curr.
    DYNAMIC ranks the stage's survivors by their recorded post-deletion
    scores (highest = safest = top); FROZEN reuses the ranking recorded at
    keep fraction 1.0; RANDOM returns the hypergeometric mean of the hit
    rate, |S| / |K_prev|. The result is |top-|S| overlap with S| / |S|.
    """
    if trace.steps is None:
        raise MissingStepRecords("dynamics require a trace recorded with record_steps")
    rho_curr = KeepFraction.parse(rho_curr)
    rho_prev = KeepFraction(rho_curr.rho + KeepFraction.parse(delta).rho)
    k_prev = keep_set_at(trace, rho_prev)
    k_curr = keep_set_at(trace, rho_curr)
    pruned = sorted(set(k_prev.kept) - set(k_curr.kept))
    if not pruned:
        raise EmptyTransition(
            f"no tokens pruned between rho={rho_prev.as_string()} and rho={rho_curr.as_string()}"
        )
    size = len(pruned)

    if mode is DynamicsMode.RANDOM:
        return size / len(k_prev)

    if mode is DynamicsMode.FROZEN:
        record = _step_for_survivor_count(trace, trace.n)
        members = set(k_prev.kept)
    else:
        record = _step_for_survivor_count(trace, len(k_prev))
        members = set(k_prev.kept)
    if record is None or not members <= set(record.candidate_scores):
        raise MissingStepRecords(
            f"no step record covers the stage at rho={rho_prev.as_string()}"
        )
    scored = [(i, record.candidate_scores[i]) for i in sorted(members)]
    top = sorted(scored, key=lambda kv: (-kv[1], kv[0]))[:size]
    hit = len({i for i, _ in top} & set(pruned))
    return hit / size


def hit_at_k(top_ranked: Sequence[int], pruned: Sequence[int]) -> float:
    """Overlap fraction between a top-|S| ranking and the actually pruned set."""
    if not pruned:
        raise EmptyTransition("pruned set is empty")
    top = list(top_ranked)[: len(pruned)]
    return len(set(top) & set(pruned)) / len(pruned)


def category_frequency(
    annotations: Iterable[AnnotationSet],
) -> List[Tuple[Category, float]]:
    """Distribution of functional categories over all reasoning tokens, pre-pruning."""
    counts: Dict[Category, int] = {}
    total = 0
    for ann in annotations:
        for cat in ann.categories:
            counts[cat] = counts.get(cat, 0) + 1
            total += 1
    if total == 0:
        raise EmptyInput("no annotated tokens")
    return [(cat, counts[cat] / total) for cat in sorted(counts, key=lambda c: c.value)]


# --- CSV emission ---------------------------------------------------------------


def write_retention_csv(table: RetentionTable, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "category", "retention", "count"])
        for row in table.rows:
            writer.writerow([row.rho.as_string(), row.category.value, repr(row.retention), row.count])


def write_dynamics_csv(
    rows: Sequence[Tuple[KeepFraction, DynamicsMode, float]], path: Union[str, Path]
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho_curr", "mode", "hit"])
        for rho, mode, hit in rows:
            writer.writerow([rho.as_string(), mode.value, repr(hit)])


def write_frequency_csv(
    rows: Sequence[Tuple[Category, float]], path: Union[str, Path]
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "fraction"])
        for cat, fraction in rows:
            writer.writerow([cat.value, repr(fraction)])
