"""Remote teacher-forced log-probability client and generation sampler.

The wire contract is artifact-owned (vendor adapters stay out of scope):

  POST <score_endpoint>
    request  {"context": [str...], "target": [str...], "id": str}
    response {"id": str, "target_logprobs": [float...], "offsets": [[start, end]...]}

  POST <generate_endpoint>
    request  {"id": str, "question": [str...], "samples": int,
              "temperature": float, "top_p": float}
    response {"id": str, "completions": [{"reasoning": str,
              "reasoning_offsets": [[s, e]...], "answer": str,
              "answer_offsets": [[s, e]...]}]}

Score responses carry provider-token log-probs with character offsets
into the concatenated target text; offsets are re-aligned to unit
boundaries here. A provider token that straddles a unit boundary is
reported as an alignment gap and attributed to the unit containing its
first character, so per-unit sums always add up to the whole-span sum
exactly.

Auth is a bearer token read from the PRUNEKIT_API_TOKEN environment
variable at request time; it is never logged. Scoring is read-only, so
retries are idempotent.
"""

from __future__ import annotations

import hashlib
import os
import time
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import httpx

from ..core import TokenUnit, unit_texts
from ..errors import AuthFailure, BackendFailure, RequestTimeout
from .base import BackendDescriptor

UnitSeq = Sequence[Union[TokenUnit, str]]

TOKEN_ENV_VAR = "PRUNEKIT_API_TOKEN"


@dataclass(frozen=True)
class RemoteConfig:
    score_endpoint: str
    generate_endpoint: Optional[str] = None
    timeout: float = 30.0
    max_retries: int = 2
    backoff: float = 0.1
    batch_size: int = 16    # requests grouped per dispatch wave
    max_inflight: int = 4   # concurrent requests within a wave


@dataclass(frozen=True)
class AlignmentGap:
    """A provider token that straddled a unit boundary (0-based indices)."""

    provider_index: int
    start: int
    end: int
    unit_index: int


@dataclass(frozen=True)
class RemoteScore:
    total: float
    per_unit: Tuple[float, ...]
    gaps: Tuple[AlignmentGap, ...]


def align_provider_tokens(
    units: Sequence[str],
    logprobs: Sequence[float],
    offsets: Sequence[Sequence[int]],
) -> Tuple[List[float], List[AlignmentGap]]:
    """Sum provider-token log-probs within each unit's character span.

    Every provider token is attributed to exactly one unit (the one
    containing its first character), so the per-unit sums partition the
    provider sum; straddlers are additionally reported as gaps.
    """
    if len(logprobs) != len(offsets):
        raise BackendFailure(
            f"response carries {len(logprobs)} logprobs but {len(offsets)} offsets"
        )
    starts: List[int] = []
    pos = 0
    for u in units:
        starts.append(pos)
        pos += len(u)
    total_len = pos
    per_unit = [0.0] * len(units)
    gaps: List[AlignmentGap] = []
    for k, (lp, span) in enumerate(zip(logprobs, offsets)):
        s, e = int(span[0]), int(span[1])
        if not (0 <= s < e <= total_len):
            raise BackendFailure(f"provider offset [{s}, {e}) outside target text of {total_len} chars")
        unit_idx = bisect_right(starts, s) - 1
        unit_end = starts[unit_idx] + len(units[unit_idx])
        if e > unit_end:
            gaps.append(AlignmentGap(provider_index=k, start=s, end=e, unit_index=unit_idx))
        per_unit[unit_idx] += lp
    return per_unit, gaps


class RemoteClient:
    """Thin HTTP client with bounded retries and id-matched batching."""

    def __init__(self, config: RemoteConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, url: str, payload: dict) -> dict:
        attempts = 0
        last_error = "no attempt made"
        while attempts <= self.config.max_retries:
            attempts += 1
            try:
                response = self._client.post(url, json=payload, headers=self._headers())
            except httpx.TimeoutException:
                last_error = f"timeout after {self.config.timeout}s"
                if attempts <= self.config.max_retries:
                    time.sleep(self.config.backoff * attempts)
                continue
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                if attempts <= self.config.max_retries:
                    time.sleep(self.config.backoff * attempts)
                continue
            if response.status_code in (401, 403):
                raise AuthFailure(f"authentication rejected ({response.status_code})")
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                if attempts <= self.config.max_retries:
                    time.sleep(self.config.backoff * attempts)
                continue
            if response.status_code != 200:
                raise BackendFailure(
                    f"request failed with status {response.status_code}", attempts=attempts
                )
            body = response.json()
            if body.get("id") != payload["id"]:
                raise BackendFailure(
                    f"response id {body.get('id')!r} does not match request {payload['id']!r}"
                )
            return body
        if "timeout" in last_error:
            raise RequestTimeout(last_error, attempts=attempts)
        raise BackendFailure(last_error, retryable=True, attempts=attempts)


def _request_id(context: Sequence[str], target: Sequence[str]) -> str:
    h = hashlib.blake2b(digest_size=12)
    for part in (context, target):
        h.update(b"\x01")
        for t in part:
            raw = t.encode("utf-8")
            h.update(len(raw).to_bytes(4, "big"))
            h.update(raw)
    return h.hexdigest()


def remote_score(client: RemoteClient, context: UnitSeq, target: UnitSeq) -> RemoteScore:
    """Score a target span; per-unit sums plus the exact whole-span sum."""
    ctx = list(unit_texts(context))
    tgt = list(unit_texts(target))
    if not tgt:
        return RemoteScore(total=0.0, per_unit=(), gaps=())
    payload = {"context": ctx, "target": tgt, "id": _request_id(ctx, tgt)}
    body = client._post(client.config.score_endpoint, payload)
    try:
        logprobs = [float(v) for v in body["target_logprobs"]]
        offsets = body["offsets"]
    except KeyError as exc:
        raise BackendFailure(f"response missing field {exc.args[0]!r}") from exc
    per_unit, gaps = align_provider_tokens(tgt, logprobs, offsets)
    total = 0.0
    for v in per_unit:
        total += v
    return RemoteScore(total=total, per_unit=tuple(per_unit), gaps=tuple(gaps))


def remote_score_many(
    client: RemoteClient, pairs: Sequence[Tuple[UnitSeq, UnitSeq]]
) -> List[RemoteScore]:
    """Score many (context, target) pairs with bounded parallel fan-out.

    Results are matched positionally via request ids, so arrival order is
    irrelevant.
    """
    results: List[Optional[RemoteScore]] = [None] * len(pairs)
    wave = max(1, client.config.batch_size)
    workers = max(1, client.config.max_inflight)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, len(pairs), wave):
            chunk = range(lo, min(lo + wave, len(pairs)))
            for idx, score in zip(
                chunk, pool.map(lambda i: remote_score(client, *pairs[i]), chunk)
            ):
                results[idx] = score
    return results  # type: ignore[return-value]


class RemoteBackend:
    """LikelihoodBackend over the remote scoring endpoint."""

    def __init__(self, client: RemoteClient):
        self.client = client
        self._descriptor = BackendDescriptor(
            backend_id=f"remote:{client.config.score_endpoint}",
            provides_attention=False,
            max_sequence=2**31 - 1,
            concurrency_safe=True,
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def target_logprobs(self, context: UnitSeq, target: UnitSeq) -> List[float]:
        return list(remote_score(self.client, context, target).per_unit)


@dataclass(frozen=True)
class Completion:
    reasoning_units: Tuple[str, ...]
    answer_units: Tuple[str, ...]

    @property
    def answer_text(self) -> str:
        return "".join(self.answer_units)


def _units_from_offsets(text: str, offsets: Sequence[Sequence[int]]) -> Tuple[str, ...]:
    units = []
    for s, e in offsets:
        piece = text[int(s):int(e)]
        if not piece:
            raise BackendFailure(f"empty unit from offsets [{s}, {e})")
        units.append(piece)
    return tuple(units)


def sample_completions(
    client: RemoteClient,
    question_units: UnitSeq,
    *,
    samples: int,
    temperature: float,
    top_p: float,
    request_id: str,
) -> List[Completion]:
    """Ask the generation endpoint for sampled completions, split into units
    by the endpoint's reported offsets."""
    from ..errors import NoGenerationEndpoint

    if client.config.generate_endpoint is None:
        raise NoGenerationEndpoint("client has no generation endpoint configured")
    payload = {
        "id": request_id,
        "question": list(unit_texts(question_units)),
        "samples": samples,
        "temperature": temperature,
        "top_p": top_p,
    }
    body = client._post(client.config.generate_endpoint, payload)
    completions = []
    for comp in body.get("completions", []):
        try:
            completions.append(
                Completion(
                    reasoning_units=_units_from_offsets(
                        comp["reasoning"], comp["reasoning_offsets"]
                    ),
                    answer_units=_units_from_offsets(comp["answer"], comp["answer_offsets"]),
                )
            )
        except KeyError as exc:
            raise BackendFailure(f"completion missing field {exc.args[0]!r}") from exc
    return completions
