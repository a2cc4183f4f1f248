"""Toy transformer: determinism, proper causal LM behavior, prefix cache."""

from __future__ import annotations

import numpy as np
import pytest

from prunekit.backends.toy import ScanStats, ToyBackend, ToyTransformer
from prunekit.core import Objective, units_from_texts
from prunekit.errors import SequenceTooLong, ValidationError
from prunekit.scoring import score_deletion_candidates

UNITS = ["The ", "sum ", "of ", "3 ", "and ", "4 ", "is ", "7."]


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        a = ToyTransformer(seed=3).forward(UNITS, want_attention=True)
        b = ToyTransformer(seed=3).forward(UNITS, want_attention=True)
        assert a.unit_logprobs == b.unit_logprobs
        assert np.array_equal(a.attention.values, b.attention.values)

    def test_different_seeds_differ(self):
        a = ToyTransformer(seed=3).forward(UNITS)
        b = ToyTransformer(seed=4).forward(UNITS)
        assert a.unit_logprobs != b.unit_logprobs


class TestProperCausalLM:
    def test_attention_rows_normalized_and_causal(self):
        att = ToyTransformer(seed=0).forward(UNITS, want_attention=True).attention
        sums = att.values.sum(axis=-1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-6
        T = att.length
        upper = np.triu(np.ones((T, T), dtype=bool), k=1)
        assert np.all(att.values[..., upper] == 0)

    def test_per_position_distribution_sums_to_one(self):
        lm = ToyTransformer(seed=0)
        cache = lm.forward(UNITS, build_cache=True).cache
        for row in cache.h_final:
            assert lm.next_distribution(row).sum() == pytest.approx(1.0, abs=1e-6)

    def test_logprobs_nonpositive(self):
        result = ToyTransformer(seed=0).forward(UNITS)
        assert all(v <= 0 for v in result.unit_logprobs)

    def test_prefix_logprobs_independent_of_suffix(self):
        lm = ToyTransformer(seed=2)
        short = lm.forward(UNITS[:4]).unit_logprobs
        longer = lm.forward(UNITS[:4] + ["unrelated suffix"]).unit_logprobs
        assert max(abs(a - b) for a, b in zip(short, longer[:4])) <= 1e-9

    def test_sequence_too_long(self):
        lm = ToyTransformer(seed=0, max_sequence=4)
        with pytest.raises(SequenceTooLong):
            lm.forward(UNITS)


class TestPrefixCache:
    def test_cached_matches_uncached_64_units(self):
        lm = ToyTransformer(seed=9)
        units = [chr(ord("a") + (i % 26)) for i in range(64)]  # byte-level sequence
        full = lm.forward(units)
        cache = lm.build_prefix(units[:32])
        cached = lm.forward(units, prefix=cache)
        diff = max(abs(a - b) for a, b in zip(full.unit_logprobs, cached.unit_logprobs))
        assert diff <= 1e-9
        assert abs(full.total - cached.total) <= 1e-9

    def test_fresh_eval_count_is_tail_only(self):
        lm = ToyTransformer(seed=9)
        cache = lm.build_prefix(UNITS[:5])
        before = lm.position_evals
        lm.forward(UNITS, prefix=cache)
        assert lm.position_evals - before == len(UNITS) - 5  # T - p exactly

    def test_stale_prefix_rejected(self):
        lm = ToyTransformer(seed=9)
        cache = lm.build_prefix(["x ", "y "])
        with pytest.raises(ValidationError):
            lm.forward(["x ", "z ", "w "], prefix=cache)

    def test_slice_matches_direct_build(self):
        lm = ToyTransformer(seed=9)
        whole = lm.build_prefix(UNITS)
        direct = lm.build_prefix(UNITS[:3])
        sliced = whole.slice(3)
        assert np.allclose(sliced.h_final, direct.h_final, atol=1e-12)
        for (ka, va), (kb, vb) in zip(sliced.kv, direct.kv):
            assert np.allclose(ka, kb, atol=1e-12)
            assert np.allclose(va, vb, atol=1e-12)


class TestDeletionScan:
    @pytest.mark.parametrize("objective", [Objective.JOINT, Objective.ANS])
    def test_scan_matches_generic_within_1e9(self, objective):
        backend = ToyBackend(ToyTransformer(seed=5))
        q = ["Why? "]
        r = units_from_texts([f"step{i} " for i in range(6)])
        a = ["done.", "!"]
        fast = score_deletion_candidates(backend, objective, q, r, a)
        generic = score_deletion_candidates(
            backend, objective, q, r, a, use_fast_path=False
        )
        assert max(abs(fast[i] - generic[i]) for i in fast) <= 1e-9

    def test_eval_count_invariant(self):
        backend = ToyBackend(ToyTransformer(seed=5))
        n, a_len = 10, 3
        q = ["q1 ", "q2 "]
        r = units_from_texts([f"r{i} " for i in range(n)])
        a = [f"a{i}" for i in range(a_len)]
        backend.scan_deletion_candidates(q, r, a, Objective.JOINT)
        stats = backend.last_scan_stats
        assert stats == ScanStats(
            fresh_evals=sum(n - i + a_len for i in range(1, n + 1)),
            cache_reuses=n,
            base_evals=1 + len(q) + n,
        )

    def test_attention_span_covers_reasoning(self):
        backend = ToyBackend(ToyTransformer(seed=5))
        attention, span = backend.attention_for_instance(["q "], ["r1 ", "r2 "], ["a"])
        # BOS + 1 question unit + 2 reasoning + 1 answer = 5 positions
        assert attention.length == 5
        assert (span.start, span.stop) == (3, 4)
