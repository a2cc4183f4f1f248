"""Dataset and artifact file handling: JSONL readers/writers, atomic writes.

File schemas (one JSON object per line):

  instances:       {"id", "question": [str...], "reasoning": [str...],
                    "answer": [str...], "meta": {...}}
  traces:          {"id", "objective": "joint"|"ans", "n", "rho_min": str,
                    "ranks": [int|null...], "steps": optional}
  annotations:     {"id", "categories": [str...]}
  external scores: {"id", "scores": [float...]}
  keep sets:       {"id", "method", "objective": str|null, "rho": str,
                    "n", "kept": [int...]}
  SFT export:      {"question": str, "reasoning": str, "answer": str}
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from ..analysis import AnnotationSet, annotation_from_json, annotation_to_json
from ..core import (
    Instance,
    KeepFraction,
    KeepSet,
    PruneTrace,
    RhoLike,
    apply_keep,
    check_unique_ids,
    instance_from_json,
    instance_to_json,
    keep_set_at,
    trace_from_json,
    trace_to_json,
    unit_texts,
)
from ..errors import DuplicateId, ParseError, TraceMissing, ValidationError

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LineIssue:
    line: int
    message: str


def _read_jsonl(path: PathLike):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def write_jsonl(path: PathLike, objects: Iterable[Mapping]) -> None:
    payload = "".join(json.dumps(obj, sort_keys=True) + "\n" for obj in objects)
    atomic_write_text(path, payload)


def read_instances(
    path: PathLike, lenient: bool = False
) -> Tuple[List[Instance], List[LineIssue]]:
    """Parse and validate an instance JSONL file.

    Strict mode raises on the first malformed line; lenient mode skips it
    and reports the line number.
    """
    instances: List[Instance] = []
    issues: List[LineIssue] = []
    seen: Dict[str, int] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            inst = instance_from_json(obj)
            if inst.id in seen:
                raise DuplicateId(
                    f"id {inst.id!r} already used on line {seen[inst.id]}"
                )
        except (ValidationError, DuplicateId) as exc:
            if lenient:
                issues.append(LineIssue(line=lineno, message=str(exc)))
                continue
            if isinstance(exc, DuplicateId):
                raise DuplicateId(f"{path}:{lineno}: {exc}") from exc
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        seen[inst.id] = lineno
        instances.append(inst)
    return instances, issues


def write_instances(path: PathLike, instances: Sequence[Instance]) -> None:
    check_unique_ids(instances)
    write_jsonl(path, (instance_to_json(inst) for inst in instances))


def read_traces(path: PathLike) -> List[PruneTrace]:
    return [trace_from_json(obj) for _, obj in _read_jsonl(path)]


def write_traces(path: PathLike, traces: Sequence[PruneTrace]) -> None:
    write_jsonl(path, (trace_to_json(t) for t in traces))


def read_annotations(path: PathLike) -> Dict[str, AnnotationSet]:
    out: Dict[str, AnnotationSet] = {}
    for lineno, obj in _read_jsonl(path):
        ann = annotation_from_json(obj)
        if ann.instance_id in out:
            raise DuplicateId(f"{path}:{lineno}: duplicate annotation id {ann.instance_id!r}")
        out[ann.instance_id] = ann
    return out


def write_annotations(path: PathLike, annotations: Sequence[AnnotationSet]) -> None:
    write_jsonl(path, (annotation_to_json(a) for a in annotations))


def read_external_scores(path: PathLike) -> Dict[str, List[Optional[float]]]:
    out: Dict[str, List[Optional[float]]] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            out[str(obj["id"])] = [None if s is None else float(s) for s in obj["scores"]]
        except KeyError as exc:
            raise ValidationError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
    return out


def keep_set_to_json(
    keep: KeepSet, instance_id: str, method: str, rho: KeepFraction, objective: Optional[str]
) -> dict:
    return {
        "id": instance_id,
        "method": method,
        "objective": objective,
        "rho": rho.as_string(),
        "n": keep.n,
        "kept": list(keep.kept),
    }


def export_sft(
    instances: Sequence[Instance],
    traces: Mapping[str, PruneTrace],
    rho: RhoLike,
    path: PathLike,
) -> int:
    """One SFT record per instance with the reasoning pruned to ``rho``.

    Detokenization is plain concatenation of unit texts (units carry
    their own whitespace).
    """
    rho = KeepFraction.parse(rho)
    records = []
    for inst in instances:
        trace = traces.get(inst.id)
        if trace is None:
            raise TraceMissing(f"no trace for instance {inst.id!r}")
        kept = keep_set_at(trace, rho)
        records.append(
            {
                "question": "".join(unit_texts(inst.question)),
                "reasoning": "".join(unit_texts(apply_keep(inst.reasoning, kept))),
                "answer": "".join(unit_texts(inst.answer)),
            }
        )
    write_jsonl(path, records)
    return len(records)


# --- filesystem helpers ------------------------------------------------------


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write-temp-then-rename so concurrent readers never observe partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
