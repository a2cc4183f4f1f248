"""Rejection-sampling dataset generation through the remote client.

For each question, sample several completions at the configured
temperature, keep only those whose final answer the checker accepts, and
retain one accepted completion chosen by a seeded uniform draw. Questions
with no accepted completion are discarded.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..core import Instance, TokenUnit, units_from_texts
from ..errors import ValidationError
from ..backends.remote import RemoteClient, sample_completions
from .io import PathLike, _read_jsonl

_WHITESPACE = re.compile(r"\s+")


def normalized_equals(candidate: str, gold: str) -> bool:
    """Default answer checker: trim and collapse internal whitespace.

    Benchmark-specific semantics (boxed expressions, letter choices) are
    pluggable via SamplingSpec.checker.
    """
    return _WHITESPACE.sub(" ", candidate).strip() == _WHITESPACE.sub(" ", gold).strip()


@dataclass(frozen=True)
class SamplingSpec:
    temperature: float = 0.7
    top_p: float = 1.0
    samples_per_question: int = 10
    checker: Callable[[str, str], bool] = normalized_equals

    def __post_init__(self):
        if self.samples_per_question < 1:
            raise ValidationError("samples_per_question must be >= 1")


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    question: Tuple[TokenUnit, ...]
    gold_answer: str


def read_questions(path: PathLike) -> List[QuestionRecord]:
    """JSONL of {"id", "question": [units...], "gold_answer": str}."""
    records = []
    for lineno, obj in _read_jsonl(path):
        try:
            records.append(
                QuestionRecord(
                    id=str(obj["id"]),
                    question=units_from_texts(obj["question"]),
                    gold_answer=str(obj["gold_answer"]),
                )
            )
        except KeyError as exc:
            raise ValidationError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
    return records


def _question_rng(seed: int, question_id: str) -> np.random.Generator:
    h = hashlib.blake2b(f"{seed}:{question_id}".encode(), digest_size=8)
    return np.random.Generator(np.random.PCG64(int.from_bytes(h.digest(), "big")))


def generate(
    client: RemoteClient,
    questions: Sequence[QuestionRecord],
    spec: SamplingSpec = SamplingSpec(),
    *,
    seed: int = 0,
) -> List[Instance]:
    """Instances built from one accepted completion per surviving question."""
    instances: List[Instance] = []
    for record in questions:
        completions = sample_completions(
            client,
            record.question,
            samples=spec.samples_per_question,
            temperature=spec.temperature,
            top_p=spec.top_p,
            request_id=f"gen-{record.id}",
        )
        accepted = [
            c for c in completions if spec.checker(c.answer_text, record.gold_answer)
        ]
        if not accepted:
            continue
        pick = accepted[int(_question_rng(seed, record.id).integers(len(accepted)))]
        instances.append(
            Instance(
                id=record.id,
                question=record.question,
                reasoning=units_from_texts(pick.reasoning_units),
                answer=units_from_texts(pick.answer_units),
                meta={"source": "rejection-sampling"},
            )
        )
    return instances
