"""Objective evaluation over a likelihood backend, plus score memoization.

Two objectives, both teacher-forced on the gold prefix and aggregated by
summation (candidates within one greedy step share a length, so sum and
mean induce the same ranking):

  JOINT: sum log p over pruned-reasoning + answer units, given the question.
  ANS:   sum log p over answer units, given question + pruned reasoning.

All values are natural-log nats; conversion happens only at presentation.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .backends.base import LikelihoodBackend, scan_capability
from .core import Objective, TokenUnit, unit_texts
from .errors import ValidationError

UnitSeq = Sequence[Union[TokenUnit, str]]


@dataclass(frozen=True)
class ScoreResult:
    """Sequence log-probability in nats, with optional per-token terms."""

    total: float
    per_token: Optional[Tuple[float, ...]] = None


def _context_and_target(
    obj: Objective, question: UnitSeq, reasoning_kept: UnitSeq, answer: UnitSeq
) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    q = unit_texts(question)
    r = unit_texts(reasoning_kept)
    a = unit_texts(answer)
    if obj is Objective.JOINT:
        return q, r + a
    return q + r, a


def objective_score(
    backend: LikelihoodBackend,
    obj: Objective,
    question: UnitSeq,
    reasoning_kept: UnitSeq,
    answer: UnitSeq,
) -> ScoreResult:
    """Evaluate one objective on one (pruned) instance."""
    if len(answer) == 0:
        raise ValidationError("objective_score requires a non-empty answer")
    context, target = _context_and_target(obj, question, reasoning_kept, answer)
    per_token = backend.target_logprobs(context, target)
    total = 0.0
    for v in per_token:
        total += v
    return ScoreResult(total=total, per_token=tuple(per_token))


def token_surprisals(
    backend: LikelihoodBackend, question: UnitSeq, reasoning: UnitSeq, answer: UnitSeq
) -> List[float]:
    """Surprisal -log p of each reasoning token, teacher-forced on Q + R + A.

    Answer units extend the sequence but sit after every reasoning
    position, so they never affect these values under a causal model.
    """
    target = tuple(unit_texts(reasoning)) + tuple(unit_texts(answer))
    lps = backend.target_logprobs(unit_texts(question), target)
    return [-v for v in lps[: len(reasoning)]]


# --- memoization ---------------------------------------------------------------


def make_cache_key(
    backend_id: str, obj: Objective, context: Sequence[str], target: Sequence[str]
) -> str:
    """128-bit digest over exact unit strings; whitespace-carrying units stay distinct."""
    h = hashlib.blake2b(digest_size=16)
    h.update(backend_id.encode())
    h.update(b"\x00")
    h.update(obj.value.encode())
    for part in (context, target):
        h.update(b"\x01")
        for t in part:
            raw = t.encode("utf-8")
            h.update(len(raw).to_bytes(4, "big"))
            h.update(raw)
    return h.hexdigest()


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    backend_calls: int = 0


class ScoreCache:
    """Thread-safe memo of objective scores, optionally persisted on disk.

    The disk file is append-only JSONL of {key, total}; loading restores
    totals only (per-token terms are kept in memory for the session).
    Inserts are idempotent last-write-wins, so concurrent workers may race
    harmlessly.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, enabled: bool = True):
        self.enabled = enabled
        self.path = Path(path) if path is not None else None
        self.stats = CacheStats()
        self._store: Dict[str, ScoreResult] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.load(self.path)

    def __len__(self) -> int:
        return len(self._store)

    def load(self, path: Union[str, Path]) -> int:
        count = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                self._store[obj["key"]] = ScoreResult(total=float(obj["total"]))
                count += 1
        return count

    def get(self, key: str) -> Optional[ScoreResult]:
        with self._lock:
            result = self._store.get(key)
            if result is not None:
                self.stats.hits += 1
            else:
                self.stats.misses += 1
            return result

    def put(self, key: str, result: ScoreResult) -> None:
        with self._lock:
            self._store[key] = result
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "total": result.total}) + "\n")


def cached_score(
    cache: Optional[ScoreCache],
    backend: LikelihoodBackend,
    obj: Objective,
    question: UnitSeq,
    reasoning_kept: UnitSeq,
    answer: UnitSeq,
) -> ScoreResult:
    """objective_score with memoization; a repeat call costs zero backend evaluations."""
    if cache is None or not cache.enabled:
        return objective_score(backend, obj, question, reasoning_kept, answer)
    context, target = _context_and_target(obj, question, reasoning_kept, answer)
    key = make_cache_key(backend.descriptor.backend_id, obj, context, target)
    hit = cache.get(key)
    if hit is not None:
        return hit
    result = objective_score(backend, obj, question, reasoning_kept, answer)
    with cache._lock:
        cache.stats.backend_calls += 1
    cache.put(key, result)
    return result


# --- batched candidate evaluation ----------------------------------------------


def score_deletion_candidates(
    backend: LikelihoodBackend,
    obj: Objective,
    question: UnitSeq,
    reasoning_remaining: Sequence[TokenUnit],
    answer: UnitSeq,
    *,
    cache: Optional[ScoreCache] = None,
    parallelism: int = 1,
    use_fast_path: bool = True,
) -> Dict[int, float]:
    """Score every single-deletion candidate of the remaining reasoning.

    Returns {original 1-based reasoning index -> objective total with that
    token deleted}. Uses the backend's batched scan when it offers one;
    otherwise falls back to per-candidate scoring, optionally fanned out
    over threads (the map is index-keyed, so completion order is
    irrelevant).
    """
    indices = [u.index for u in reasoning_remaining]
    scan = scan_capability(backend) if use_fast_path else None
    if scan is not None:
        scores = scan(question, reasoning_remaining, answer, obj)
        return dict(zip(indices, scores))

    def score_without(pos: int) -> float:
        candidate = [u for j, u in enumerate(reasoning_remaining) if j != pos]
        return cached_score(cache, backend, obj, question, candidate, answer).total

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            totals = list(pool.map(score_without, range(len(indices))))
    else:
        totals = [score_without(pos) for pos in range(len(indices))]
    return dict(zip(indices, totals))
