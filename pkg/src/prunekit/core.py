"""Domain types for pruning: instances, keep sets, traces.

Reasoning positions are 1-based throughout. A pruning rank is the step at
which greedy deletion removed a token; tokens that survive down to the
deepest executed keep fraction carry no rank (serialized as ``null``).
Keep-fraction arithmetic runs on exact rationals so that ``ceil(rho * n)``
never flips on floating-point boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

from .errors import (
    DuplicateId,
    EmptyAnswer,
    EmptyReasoning,
    LengthMismatch,
    RhoBelowTrace,
    ValidationError,
)


class Objective(Enum):
    """Which likelihood the pruner preserves while deleting tokens."""

    JOINT = "joint"  # log P(pruned reasoning, answer | question)
    ANS = "ans"      # log P(answer | question, pruned reasoning)


@dataclass(frozen=True)
class TokenUnit:
    """One pruning unit: a surface string (whitespace included) at a 1-based position."""

    text: str
    index: int

    def __post_init__(self):
        if not self.text:
            raise ValidationError("token unit text must be non-empty")
        if self.index < 1:
            raise ValidationError(f"token unit index must be >= 1, got {self.index}")


def units_from_texts(texts: Iterable[str]) -> Tuple[TokenUnit, ...]:
    """Build a contiguous 1-based unit sequence from raw strings."""
    return tuple(TokenUnit(text=t, index=i) for i, t in enumerate(texts, start=1))


def unit_texts(units: Sequence[Union[TokenUnit, str]]) -> Tuple[str, ...]:
    """Surface strings of a unit sequence; plain strings pass through."""
    return tuple(u.text if isinstance(u, TokenUnit) else u for u in units)


@dataclass(frozen=True)
class Instance:
    """A (question, reasoning, answer) triple, pre-tokenized into units."""

    id: str
    question: Tuple[TokenUnit, ...]
    reasoning: Tuple[TokenUnit, ...]
    answer: Tuple[TokenUnit, ...]
    meta: Mapping[str, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.reasoning)


def _check_contiguous(units: Sequence[TokenUnit], name: str) -> None:
    for pos, unit in enumerate(units, start=1):
        if unit.index != pos:
            raise ValidationError(
                f"{name} indices must be contiguous from 1; "
                f"expected {pos} at position {pos}, got {unit.index}"
            )


def validate_instance(inst: Instance) -> Instance:
    """Return ``inst`` unchanged iff every type invariant holds."""
    if not inst.id:
        raise ValidationError("instance id must be non-empty")
    if len(inst.reasoning) < 1:
        raise EmptyReasoning(f"instance {inst.id!r} has no reasoning tokens")
    if len(inst.answer) < 1:
        raise EmptyAnswer(f"instance {inst.id!r} has no answer tokens")
    _check_contiguous(inst.question, "question")
    _check_contiguous(inst.reasoning, "reasoning")
    _check_contiguous(inst.answer, "answer")
    return inst


def check_unique_ids(instances: Sequence[Instance]) -> None:
    seen = set()
    for inst in instances:
        if inst.id in seen:
            raise DuplicateId(f"duplicate instance id {inst.id!r}")
        seen.add(inst.id)


RhoLike = Union["KeepFraction", Fraction, str, float, int]


@dataclass(frozen=True)
class KeepFraction:
    """Fraction of reasoning tokens to retain, held as an exact rational."""

    rho: Fraction

    def __post_init__(self):
        if not (0 < self.rho <= 1):
            raise ValidationError(f"keep fraction must lie in (0, 1], got {self.rho}")

    @classmethod
    def parse(cls, value: RhoLike) -> "KeepFraction":
        """Coerce a decimal string (preferred), Fraction, or number.

        Floats go through their shortest decimal repr, so 0.3 means the
        decimal 0.3 rather than its binary approximation.
        """
        if isinstance(value, KeepFraction):
            return value
        if isinstance(value, float):
            value = repr(value)
        return cls(Fraction(value))

    def retained_length(self, n: int) -> int:
        """m = ceil(rho * n), computed exactly."""
        return math.ceil(self.rho * n)

    def as_string(self) -> str:
        if self.rho.denominator == 1:
            return f"{self.rho.numerator}.0"
        decimal = self.rho.numerator / self.rho.denominator
        if Fraction(repr(decimal)) == self.rho:
            return repr(decimal)
        return f"{self.rho.numerator}/{self.rho.denominator}"

    def __le__(self, other: "KeepFraction") -> bool:
        return self.rho <= other.rho

    def __lt__(self, other: "KeepFraction") -> bool:
        return self.rho < other.rho


DEFAULT_RHO_GRID: Tuple[KeepFraction, ...] = tuple(
    KeepFraction.parse(s)
    for s in ("0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1.0")
)


@dataclass(frozen=True)
class KeepSet:
    """Sorted 1-based reasoning indices that survive pruning."""

    kept: Tuple[int, ...]
    n: int

    def __post_init__(self):
        if list(self.kept) != sorted(set(self.kept)):
            raise ValidationError("kept indices must be sorted and unique")
        if self.kept and (self.kept[0] < 1 or self.kept[-1] > self.n):
            raise ValidationError(f"kept indices must lie in 1..{self.n}")

    def __contains__(self, index: int) -> bool:
        return index in set(self.kept)

    def __len__(self) -> int:
        return len(self.kept)


@dataclass(frozen=True)
class StepRecord:
    """One greedy scan: the full candidate-score map and what got removed.

    ``removed`` lists indices in removal order (safest first); they attain
    the maximal candidate score, ties broken by lowest index.
    """

    step: int
    candidate_scores: Mapping[int, float]
    removed: Tuple[int, ...]


@dataclass(frozen=True)
class PruneTrace:
    """Per-token removal ranks plus optional per-step score records.

    ``ranks[i]`` is the 1-based removal step of reasoning token i+1, or
    ``None`` if the token was never removed. Assigned ranks are exactly
    1..T for T = n - ceil(rho_min * n); the whole removal order is
    reconstructable from ``ranks`` alone.
    """

    instance_id: str
    objective: Objective
    n: int
    rho_min: KeepFraction
    ranks: Tuple[Optional[int], ...]
    steps: Optional[Tuple[StepRecord, ...]] = None

    def __post_init__(self):
        if len(self.ranks) != self.n:
            raise LengthMismatch(f"ranks length {len(self.ranks)} != n {self.n}")
        assigned = sorted(r for r in self.ranks if r is not None)
        if assigned != list(range(1, len(assigned) + 1)):
            raise ValidationError("assigned ranks must be distinct consecutive integers from 1")
        unremoved = self.n - len(assigned)
        if unremoved != self.rho_min.retained_length(self.n):
            raise ValidationError(
                f"{unremoved} unremoved tokens inconsistent with "
                f"rho_min={self.rho_min.as_string()} (expect {self.rho_min.retained_length(self.n)})"
            )

    @property
    def removal_order(self) -> Tuple[int, ...]:
        """Reasoning indices in the order they were removed."""
        ranked = [(r, i + 1) for i, r in enumerate(self.ranks) if r is not None]
        return tuple(i for _, i in sorted(ranked))


def keep_set_at(trace: PruneTrace, rho: RhoLike) -> KeepSet:
    """Keep set after pruning the trace down to keep fraction ``rho``.

    Replays the removal order recorded in the ranks and stops after
    n - ceil(rho*n) removals: kept indices are those with no rank or with
    rank beyond the stopping point.
    """
    rho = KeepFraction.parse(rho)
    if rho < trace.rho_min:
        raise RhoBelowTrace(
            f"rho={rho.as_string()} below executed rho_min={trace.rho_min.as_string()}"
        )
    m = rho.retained_length(trace.n)
    removals = trace.n - m
    kept = tuple(
        i + 1 for i, r in enumerate(trace.ranks) if r is None or r > removals
    )
    return KeepSet(kept=kept, n=trace.n)


def apply_keep(
    reasoning: Sequence[TokenUnit], keep: KeepSet
) -> Tuple[TokenUnit, ...]:
    """Subsequence of the reasoning selected by ``keep``, original order."""
    if keep.n != len(reasoning):
        raise LengthMismatch(f"keep set built for n={keep.n}, reasoning has {len(reasoning)}")
    kept = set(keep.kept)
    return tuple(u for u in reasoning if u.index in kept)


# --- JSON(L) object schemas ---------------------------------------------------


def instance_to_json(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "question": list(unit_texts(inst.question)),
        "reasoning": list(unit_texts(inst.reasoning)),
        "answer": list(unit_texts(inst.answer)),
        "meta": dict(inst.meta),
    }


def instance_from_json(obj: Mapping) -> Instance:
    try:
        inst = Instance(
            id=str(obj["id"]),
            question=units_from_texts(obj.get("question", [])),
            reasoning=units_from_texts(obj["reasoning"]),
            answer=units_from_texts(obj["answer"]),
            meta={str(k): str(v) for k, v in obj.get("meta", {}).items()},
        )
    except KeyError as exc:
        raise ValidationError(f"instance object missing field {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ValidationError(f"malformed instance object: {exc}") from exc
    return validate_instance(inst)


def trace_to_json(trace: PruneTrace) -> dict:
    obj = {
        "id": trace.instance_id,
        "objective": trace.objective.value,
        "n": trace.n,
        "rho_min": trace.rho_min.as_string(),
        "ranks": list(trace.ranks),
    }
    if trace.steps is not None:
        obj["steps"] = [
            {
                "step": s.step,
                "candidate_scores": {str(i): v for i, v in sorted(s.candidate_scores.items())},
                "removed": list(s.removed),
            }
            for s in trace.steps
        ]
    return obj


def trace_from_json(obj: Mapping) -> PruneTrace:
    try:
        steps = None
        if "steps" in obj and obj["steps"] is not None:
            steps = tuple(
                StepRecord(
                    step=int(s["step"]),
                    candidate_scores={int(k): float(v) for k, v in s["candidate_scores"].items()},
                    removed=tuple(int(i) for i in s["removed"]),
                )
                for s in obj["steps"]
            )
        return PruneTrace(
            instance_id=str(obj["id"]),
            objective=Objective(obj["objective"]),
            n=int(obj["n"]),
            rho_min=KeepFraction.parse(obj["rho_min"]),
            ranks=tuple(None if r is None else int(r) for r in obj["ranks"]),
            steps=steps,
        )
    except KeyError as exc:
        raise ValidationError(f"trace object missing field {exc.args[0]!r}") from exc
