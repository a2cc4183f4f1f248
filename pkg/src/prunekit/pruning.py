"""Greedy likelihood-preserving deletion, its oracle checker, and a brute-force reference.

Each scan scores every single-deletion candidate of the surviving
reasoning, then removes the candidates whose deletion best preserves the
objective (highest post-deletion score; ties go to the lowest index).
All candidate scores within a scan are computed before any removal.
Deleting more than one token per scan amortizes the quadratic scan cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from .backends.base import LikelihoodBackend
from .core import (
    Instance,
    KeepFraction,
    KeepSet,
    Objective,
    PruneTrace,
    StepRecord,
    trace_to_json,
    validate_instance,
)
from .errors import (
    BackendFailure,
    DegenerateAnswer,
    TooLarge,
    UnsupportedTrace,
    ValidationError,
)
from .scoring import ScoreCache, objective_score, score_deletion_candidates


@dataclass(frozen=True)
class GreedyConfig:
    objective: Objective = Objective.JOINT
    rho_min: KeepFraction = KeepFraction.parse("0.1")
    k_per_step: int = 1
    record_steps: bool = False
    parallelism: int = 1
    use_fast_path: bool = True  # backend batched scan when available

    def __post_init__(self):
        if self.k_per_step < 1:
            raise ValidationError(f"k_per_step must be >= 1, got {self.k_per_step}")
        if self.parallelism < 1:
            raise ValidationError(f"parallelism must be >= 1, got {self.parallelism}")


def _pick_removals(
    candidate_scores: Mapping[int, float], k: int
) -> Tuple[int, ...]:
    """Top-k candidates by post-deletion score, safest first, ties to lowest index."""
    ordered = sorted(candidate_scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(idx for idx, _ in ordered[:k])


def greedy_prune(
    backend: LikelihoodBackend,
    inst: Instance,
    cfg: GreedyConfig,
    *,
    cache: Optional[ScoreCache] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    resume_from: Optional[Mapping] = None,
) -> PruneTrace:
    """Iteratively delete reasoning tokens down to ceil(rho_min * n).

    If the backend fails mid-run and ``checkpoint_path`` is set, the
    partial state is persisted with a resume marker; pass the loaded
    checkpoint back as ``resume_from`` to continue without redoing
    completed scans.
    """
    validate_instance(inst)
    if len(inst.answer) == 0:
        raise DegenerateAnswer(f"instance {inst.id!r} has an empty answer")
    n = inst.n
    m = cfg.rho_min.retained_length(n)

    ranks: Dict[int, int] = {}
    steps: List[StepRecord] = []
    next_rank = 1
    scan_no = 1
    if resume_from is not None:
        state = resume_from
        if state.get("instance_id") != inst.id:
            raise ValidationError("resume state belongs to a different instance")
        ranks = {int(k): int(v) for k, v in state["ranks"].items()}
        next_rank = int(state["next_rank"])
        scan_no = int(state["next_scan"])
        for s in state.get("steps", []):
            steps.append(
                StepRecord(
                    step=int(s["step"]),
                    candidate_scores={int(k): float(v) for k, v in s["candidate_scores"].items()},
                    removed=tuple(int(i) for i in s["removed"]),
                )
            )

    kept = [u for u in inst.reasoning if u.index not in ranks]

    while len(kept) > m:
        try:
            score_map = score_deletion_candidates(
                backend,
                cfg.objective,
                inst.question,
                kept,
                inst.answer,
                cache=cache,
                parallelism=cfg.parallelism,
                use_fast_path=cfg.use_fast_path,
            )
        except BackendFailure:
            if checkpoint_path is not None:
                _write_checkpoint(checkpoint_path, inst, cfg, ranks, steps, next_rank, scan_no)
            raise
        k = min(cfg.k_per_step, len(kept) - m)
        removed = _pick_removals(score_map, k)
        for idx in removed:
            ranks[idx] = next_rank
            next_rank += 1
        if cfg.record_steps:
            steps.append(
                StepRecord(step=scan_no, candidate_scores=dict(score_map), removed=removed)
            )
        removed_set = set(removed)
        kept = [u for u in kept if u.index not in removed_set]
        scan_no += 1

    return PruneTrace(
        instance_id=inst.id,
        objective=cfg.objective,
        n=n,
        rho_min=cfg.rho_min,
        ranks=tuple(ranks.get(i) for i in range(1, n + 1)),
        steps=tuple(steps) if cfg.record_steps else None,
    )


def _write_checkpoint(path, inst, cfg, ranks, steps, next_rank, next_scan) -> None:
    state = {
        "resume": True,
        "instance_id": inst.id,
        "objective": cfg.objective.value,
        "rho_min": cfg.rho_min.as_string(),
        "ranks": {str(k): v for k, v in sorted(ranks.items())},
        "next_rank": next_rank,
        "next_scan": next_scan,
        "steps": [
            {
                "step": s.step,
                "candidate_scores": {str(i): v for i, v in sorted(s.candidate_scores.items())},
                "removed": list(s.removed),
            }
            for s in steps
        ],
    }
    Path(path).write_text(json.dumps(state, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> Mapping:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- oracle checking -------------------------------------------------------------


@dataclass(frozen=True)
class StepViolation:
    step: int
    kind: str
    detail: str


@dataclass(frozen=True)
class OracleReport:
    steps_checked: int
    violations: Tuple[StepViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def stepwise_oracle_check(
    trace: PruneTrace,
    backend: LikelihoodBackend,
    inst: Instance,
    *,
    tolerance: float = 1e-9,
) -> OracleReport:
    """Recompute every recorded scan independently and verify the removals.

    Candidate scores are recomputed through the generic per-candidate
    scoring path (never the backend's batched scan), so a buggy fast path
    cannot vouch for itself. A step passes when its recorded scores match
    the recomputed ones within tolerance and the removed tokens are
    exactly the top-k under (highest score, lowest index).
    """
    if trace.steps is None:
        raise UnsupportedTrace("oracle check requires a trace recorded with record_steps")
    violations: List[StepViolation] = []
    kept = list(inst.reasoning)

    for record in trace.steps:
        current = [u for u in kept]
        expected_keys = {u.index for u in current}
        if set(record.candidate_scores) != expected_keys:
            violations.append(
                StepViolation(record.step, "candidate_set",
                              f"recorded candidates != surviving set at step {record.step}")
            )
            break
        recomputed: Dict[int, float] = {}
        by_index = {u.index: u for u in current}
        for idx in sorted(expected_keys):
            candidate = [u for u in current if u.index != idx]
            recomputed[idx] = objective_score(
                backend, trace.objective, inst.question, candidate, inst.answer
            ).total
        for idx, recorded in record.candidate_scores.items():
            if abs(recorded - recomputed[idx]) > tolerance:
                violations.append(
                    StepViolation(record.step, "score_mismatch",
                                  f"index {idx}: recorded {recorded!r} vs recomputed {recomputed[idx]!r}")
                )
        expected = _pick_removals(recomputed, len(record.removed))
        if record.removed != expected:
            kth_score = recomputed[expected[-1]]
            soft_ok = all(recomputed[idx] >= kth_score - tolerance for idx in record.removed)
            if not soft_ok:
                violations.append(
                    StepViolation(record.step, "not_step_max",
                                  f"removed {record.removed} but step maximum is {expected}")
                )
        removed_set = set(record.removed)
        kept = [u for u in kept if u.index not in removed_set]

    return OracleReport(steps_checked=len(trace.steps), violations=tuple(violations))


# --- brute-force reference --------------------------------------------------------


def brute_force_subset(
    backend: LikelihoodBackend,
    inst: Instance,
    obj: Objective,
    m: int,
    *,
    max_n: int = 16,
) -> Tuple[KeepSet, float]:
    """Exact argmax over all C(n, m) keep sets; ties go to the
    lexicographically smallest kept index set.

    Greedy deletion is myopic, so its final score can fall below this
    reference; it can never exceed it.
    """
    validate_instance(inst)
    n = inst.n
    if n > max_n:
        raise TooLarge(f"brute force refused for n={n} > {max_n}")
    if not (0 <= m <= n):
        raise ValidationError(f"m must lie in 0..{n}, got {m}")
    units_by_index = {u.index: u for u in inst.reasoning}

    best_subset: Optional[Tuple[int, ...]] = None
    best_total = float("-inf")
    for subset in combinations(range(1, n + 1), m):
        candidate = [units_by_index[i] for i in subset]
        total = objective_score(backend, obj, inst.question, candidate, inst.answer).total
        if total > best_total:
            best_total = total
            best_subset = subset
    return KeepSet(kept=best_subset, n=n), best_total
