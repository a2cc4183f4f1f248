"""Deterministic seeded toy transformer with attention access and a prefix cache.

An untrained 2-layer, 2-head, width-32 causal LM over a byte vocabulary
(256 bytes + BOS + SEP). Token units embed as the mean of their UTF-8
byte embeddings; a unit's log-prob is the sum of its bytes' log-probs
under the position's 258-way softmax, so every per-position distribution
is exactly normalized and all unit log-probs are <= 0.

Weights are drawn from a PCG64 generator seeded with the model seed, in
this order: byte_emb, pos_emb, then per layer w_q, w_k, w_v, w_o, w_mlp1,
w_mlp2, and finally w_out. Identical seeds give bit-identical outputs.

The prefix cache stores per-layer K/V rows, final hidden rows, and unit
log-probs for a scored prefix; re-scoring a sequence that shares the
first p positions performs exactly T - p fresh position evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import Objective, TokenUnit, unit_texts
from ..errors import SequenceTooLong, ValidationError
from .base import AttentionTensor, BackendDescriptor, Span

UnitSeq = Sequence[Union[TokenUnit, str]]

BOS = object()  # start-of-sequence marker, prepended internally
SEP = object()  # separator unit available to callers

_BOS_ID = 256
_SEP_ID = 257
_VOCAB = 258
_LN_EPS = 1e-5


def _layernorm(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS)


@dataclass
class PrefixCache:
    """Reusable per-position state for the first len(units)+1 positions."""

    units: Tuple[str, ...]
    kv: List[Tuple[np.ndarray, np.ndarray]]  # per layer: K, V of shape [p, H, dh]
    h_final: np.ndarray                      # [p, width]
    unit_logprobs: np.ndarray                # [len(units)]

    @property
    def positions(self) -> int:
        return len(self.units) + 1  # BOS occupies position 0

    def slice(self, n_units: int) -> "PrefixCache":
        p = n_units + 1
        return PrefixCache(
            units=self.units[:n_units],
            kv=[(k[:p], v[:p]) for k, v in self.kv],
            h_final=self.h_final[:p],
            unit_logprobs=self.unit_logprobs[:n_units],
        )


@dataclass(frozen=True)
class ForwardResult:
    unit_logprobs: Tuple[float, ...]
    attention: Optional[AttentionTensor]
    cache: Optional[PrefixCache]

    @property
    def total(self) -> float:
        acc = 0.0
        for v in self.unit_logprobs:
            acc += v
        return acc


@dataclass(frozen=True)
class ScanStats:
    fresh_evals: int
    cache_reuses: int
    base_evals: int


class ToyTransformer:
    LAYERS = 2
    HEADS = 2
    WIDTH = 32
    HEAD_DIM = 16
    MLP_HIDDEN = 128

    def __init__(self, seed: int, max_sequence: int = 512):
        self.seed = seed
        self.max_sequence = max_sequence
        rng = np.random.Generator(np.random.PCG64(seed))
        w, hid = self.WIDTH, self.MLP_HIDDEN
        self.byte_emb = rng.standard_normal((_VOCAB, w))
        self.pos_emb = rng.standard_normal((max_sequence, w))
        self.w_q, self.w_k, self.w_v, self.w_o = [], [], [], []
        self.w_m1, self.w_m2 = [], []
        for _ in range(self.LAYERS):
            scale = w ** -0.5
            self.w_q.append(rng.standard_normal((w, w)) * scale)
            self.w_k.append(rng.standard_normal((w, w)) * scale)
            self.w_v.append(rng.standard_normal((w, w)) * scale)
            self.w_o.append(rng.standard_normal((w, w)) * scale)
            self.w_m1.append(rng.standard_normal((w, hid)) * scale)
            self.w_m2.append(rng.standard_normal((hid, w)) * hid ** -0.5)
        self.w_out = rng.standard_normal((w, _VOCAB)) * w ** -0.5
        self.position_evals = 0  # total positions ever evaluated (diagnostic)

    # --- embedding and readout -------------------------------------------

    @staticmethod
    def _unit_ids(unit) -> List[int]:
        if unit is BOS:
            return [_BOS_ID]
        if unit is SEP:
            return [_SEP_ID]
        if isinstance(unit, TokenUnit):
            unit = unit.text
        if not isinstance(unit, str) or not unit:
            raise ValidationError(f"toy transformer units must be non-empty strings, got {unit!r}")
        return list(unit.encode("utf-8"))

    def _embed(self, units: Sequence, pos_offset: int) -> np.ndarray:
        rows = np.stack([self.byte_emb[self._unit_ids(u)].mean(axis=0) for u in units])
        return rows + self.pos_emb[pos_offset : pos_offset + len(units)]

    def _unit_logprobs_from_rows(self, rows: np.ndarray, units: Sequence) -> np.ndarray:
        """Log-prob of each unit from the hidden row preceding it."""
        logits = rows @ self.w_out
        m = logits.max(axis=-1, keepdims=True)
        lsm = logits - (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))
        out = np.empty(len(units), dtype=np.float64)
        for j, u in enumerate(units):
            acc = 0.0
            for b in self._unit_ids(u):
                acc += lsm[j, b]
            out[j] = acc
        return out

    def next_distribution(self, h_row: np.ndarray) -> np.ndarray:
        """The 258-way byte/sentinel distribution read from one hidden row."""
        z = h_row @ self.w_out
        e = np.exp(z - z.max())
        return e / e.sum()

    # --- transformer blocks ------------------------------------------------

    def _block_forward(
        self,
        x: np.ndarray,
        pos_offset: int,
        cache_kv: Optional[List[Tuple[np.ndarray, np.ndarray]]],
        want_attention: bool,
    ):
        k_len = x.shape[0]
        h = x
        new_kv = []
        attn_layers = [] if want_attention else None
        abs_pos = pos_offset + np.arange(k_len)
        for layer in range(self.LAYERS):
            ln1 = _layernorm(h)
            q = (ln1 @ self.w_q[layer]).reshape(k_len, self.HEADS, self.HEAD_DIM)
            k = (ln1 @ self.w_k[layer]).reshape(k_len, self.HEADS, self.HEAD_DIM)
            v = (ln1 @ self.w_v[layer]).reshape(k_len, self.HEADS, self.HEAD_DIM)
            if cache_kv is not None:
                k_all = np.concatenate([cache_kv[layer][0], k], axis=0)
                v_all = np.concatenate([cache_kv[layer][1], v], axis=0)
            else:
                k_all, v_all = k, v
            total = k_all.shape[0]
            logits = np.einsum("qhd,khd->hqk", q, k_all) / math.sqrt(self.HEAD_DIM)
            mask = np.arange(total)[None, :] > abs_pos[:, None]
            logits = np.where(mask[None, :, :], -np.inf, logits)
            m = logits.max(axis=-1, keepdims=True)
            e = np.exp(logits - m)
            attn = e / e.sum(axis=-1, keepdims=True)
            if want_attention:
                attn_layers.append(attn)
            ctx = np.einsum("hqk,khd->qhd", attn, v_all).reshape(k_len, self.WIDTH)
            h = h + ctx @ self.w_o[layer]
            ln2 = _layernorm(h)
            h = h + np.maximum(ln2 @ self.w_m1[layer], 0.0) @ self.w_m2[layer]
            new_kv.append((k, v))
        self.position_evals += k_len
        return _layernorm(h), new_kv, attn_layers

    # --- public scoring -----------------------------------------------------

    def forward(
        self,
        units: UnitSeq,
        prefix: Optional[PrefixCache] = None,
        want_attention: bool = False,
        build_cache: bool = False,
    ) -> ForwardResult:
        """Score a unit sequence; with a valid prefix only the tail is evaluated.

        Attention is only available on uncached calls (cached rows are not
        retained), and covers the internal sequence BOS + units.
        """
        units = tuple(u if u in (BOS, SEP) else t for u, t in zip(units, unit_texts(units)))
        T = len(units) + 1
        if T > self.max_sequence:
            raise SequenceTooLong(f"sequence of {T} positions exceeds max {self.max_sequence}")

        if prefix is not None:
            if want_attention:
                raise ValidationError("attention is unavailable on prefix-cached calls")
            p_units = len(prefix.units)
            if units[:p_units] != prefix.units:
                raise ValidationError("prefix cache does not match the scored sequence")
        else:
            p_units = -1  # BOS itself is fresh

        fresh_units = units[p_units:] if prefix is not None else (BOS,) + units
        pos_offset = p_units + 1 if prefix is not None else 0
        if prefix is not None and not fresh_units:
            return ForwardResult(
                unit_logprobs=tuple(prefix.unit_logprobs.tolist()),
                attention=None,
                cache=prefix if build_cache else None,
            )

        x = self._embed(fresh_units, pos_offset)
        h_f, new_kv, attn_layers = self._block_forward(
            x, pos_offset, prefix.kv if prefix is not None else None, want_attention
        )

        if prefix is not None:
            # Hidden rows that read out the fresh units: last cached row + fresh block.
            rows = np.concatenate([prefix.h_final[-1:], h_f[:-1]], axis=0)
            fresh_lp = self._unit_logprobs_from_rows(rows, fresh_units)
            unit_lp = np.concatenate([prefix.unit_logprobs, fresh_lp])
        else:
            unit_lp = self._unit_logprobs_from_rows(h_f[:-1], units) if len(units) else np.empty(0)

        attention = None
        if want_attention and attn_layers is not None:
            attention = AttentionTensor(np.stack(attn_layers))

        cache = None
        if build_cache:
            if prefix is not None:
                kv = [
                    (np.concatenate([ck, nk], axis=0), np.concatenate([cv, nv], axis=0))
                    for (ck, cv), (nk, nv) in zip(prefix.kv, new_kv)
                ]
                h_all = np.concatenate([prefix.h_final, h_f], axis=0)
            else:
                kv = new_kv
                h_all = h_f
            cache = PrefixCache(
                units=tuple(units), kv=kv, h_final=h_all, unit_logprobs=unit_lp
            )
        return ForwardResult(
            unit_logprobs=tuple(unit_lp.tolist()), attention=attention, cache=cache
        )

    def build_prefix(self, units: UnitSeq) -> PrefixCache:
        return self.forward(units, build_cache=True).cache


class ToyBackend:
    """LikelihoodBackend over a ToyTransformer.

    Scored sequences are laid out as BOS + context + target; the deletion
    scan shares the BOS + question + surviving-prefix cache across
    candidates, so candidate i costs exactly (n - i) + |answer| fresh
    position evaluations.
    """

    def __init__(self, model: ToyTransformer):
        self.model = model
        self.last_scan_stats: Optional[ScanStats] = None
        self._descriptor = BackendDescriptor(
            backend_id=f"toy-s{model.seed}-L{model.LAYERS}H{model.HEADS}W{model.WIDTH}",
            provides_attention=True,
            max_sequence=model.max_sequence,
            concurrency_safe=True,
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def target_logprobs(self, context: UnitSeq, target: UnitSeq) -> List[float]:
        if len(target) == 0:
            return []
        result = self.model.forward(tuple(unit_texts(context)) + tuple(unit_texts(target)))
        return list(result.unit_logprobs[len(context):])

    def scan_deletion_candidates(
        self,
        question: UnitSeq,
        reasoning_remaining: UnitSeq,
        answer: UnitSeq,
        objective: Objective,
    ) -> List[float]:
        q = tuple(unit_texts(question))
        r = tuple(unit_texts(reasoning_remaining))
        a = tuple(unit_texts(answer))
        n, a_len, q_len = len(r), len(a), len(q)

        evals_before = self.model.position_evals
        base = self.model.build_prefix(q + r)
        base_evals = self.model.position_evals - evals_before

        scores: List[float] = []
        fresh = 0
        for i in range(1, n + 1):
            prefix = base.slice(q_len + i - 1)
            tail = r[i:] + a
            before = self.model.position_evals
            result = self.model.forward(q + r[: i - 1] + tail, prefix=prefix)
            fresh += self.model.position_evals - before
            lps = result.unit_logprobs
            if objective is Objective.JOINT:
                acc = 0.0
                for v in lps[q_len:]:
                    acc += v
            else:
                acc = 0.0
                for v in lps[len(lps) - a_len:]:
                    acc += v
            scores.append(acc)
        self.last_scan_stats = ScanStats(
            fresh_evals=fresh, cache_reuses=n, base_evals=base_evals
        )
        return scores

    def attention_for_instance(self, question: UnitSeq, reasoning: UnitSeq, answer: UnitSeq):
        """Full-sequence attention plus the 1-based reasoning span within it."""
        q = tuple(unit_texts(question))
        r = tuple(unit_texts(reasoning))
        a = tuple(unit_texts(answer))
        result = self.model.forward(q + r + a, want_attention=True)
        span = Span(start=len(q) + 2, stop=len(q) + 1 + len(r))
        return result.attention, span
