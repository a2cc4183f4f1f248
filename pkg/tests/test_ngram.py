"""N-gram model: fitting, smoothing, normalization, and the two scan kernels."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from prunekit.backends import _scan_cy_available
from prunekit.backends._scan_py import deletion_scan as deletion_scan_py
from prunekit.backends._scan_py import seq_logprobs as seq_logprobs_py
from prunekit.backends.ngram import NgramBackend, fit_ngram, ngram_logprob
from prunekit.core import Objective
from prunekit.errors import EmptyCorpus, ValidationError
from conftest import random_corpus


class TestFit:
    def test_unsmoothed_count_ratio(self):
        model = fit_ngram([["a", "a", "b"]], order=1, alpha=0.0)
        assert model.prob("a") == pytest.approx(2 / 3)
        assert model.prob("b") == pytest.approx(1 / 3)

    def test_large_alpha_approaches_uniform(self):
        model = fit_ngram([["a", "a", "b"]], order=1, alpha=1e9)
        # vocab {a, b} plus UNK: three-way uniform in the limit
        assert model.prob("a") == pytest.approx(1 / 3, abs=1e-6)
        assert model.prob("b") == pytest.approx(1 / 3, abs=1e-6)

    def test_order_out_of_range(self):
        with pytest.raises(ValidationError):
            fit_ngram([["a"]], order=4, alpha=0.5)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            fit_ngram([], order=1, alpha=0.5)
        with pytest.raises(EmptyCorpus):
            fit_ngram([[]], order=2, alpha=0.5)

    @pytest.mark.parametrize("order", [1, 2, 3])
    @pytest.mark.parametrize("alpha", [0.0, 0.25, 1.0])
    def test_conditionals_normalize(self, order, alpha):
        rng = random.Random(order * 17 + int(alpha * 4))
        corpus = random_corpus(rng, vocab_size=8, sequences=12, max_len=15)
        model = fit_ngram(corpus, order=order, alpha=alpha)
        for ctx in list(model.counts)[:20]:
            ctx_tail = tuple(c for c in ctx)
            total = sum(model.prob(v, ctx_tail) for v in model.vocab)
            unk = model.prob("never-seen-unit", ctx_tail)
            assert total + unk == pytest.approx(1.0, abs=1e-9)


class TestLogprob:
    def test_unigram_example(self):
        model = fit_ngram([["a", "a", "b", "b"]], order=1, alpha=0.0)
        lps = ngram_logprob(model, ["a", "a"])
        assert lps == pytest.approx([math.log(0.5), math.log(0.5)])

    def test_empty_sequence(self):
        model = fit_ngram([["a"]], order=1, alpha=0.5)
        assert ngram_logprob(model, []) == []

    def test_oov_scores_finite_with_smoothing(self):
        model = fit_ngram([["a", "b"]], order=2, alpha=0.5)
        lps = ngram_logprob(model, ["zzz", "a"])
        assert all(math.isfinite(v) for v in lps)

    def test_oov_is_minus_inf_unsmoothed(self):
        model = fit_ngram([["a", "b"]], order=1, alpha=0.0)
        assert ngram_logprob(model, ["zzz"]) == [-math.inf]


class TestKernels:
    def test_compiled_kernel_was_built(self):
        # the build environment has Cython; both paths must exist here
        assert _scan_cy_available()

    @pytest.mark.parametrize("order", [1, 2, 3])
    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    @pytest.mark.parametrize("joint", [True, False])
    def test_kernels_bitwise_identical(self, order, alpha, joint):
        from prunekit.backends import _scan_cy

        rng = random.Random(1000 * order + int(alpha * 10) + joint)
        corpus = random_corpus(rng, vocab_size=12, sequences=20, max_len=20)
        model = fit_ngram(corpus, order=order, alpha=alpha)
        vocab = list(model.vocab)
        q = model.encode([rng.choice(vocab) for _ in range(3)])
        r = model.encode([rng.choice(vocab) for _ in range(10)] + ["OOV"])
        a = model.encode([rng.choice(vocab) for _ in range(2)])
        assert np.array_equal(
            seq_logprobs_py(model.tables, np.concatenate([q, r, a])),
            _scan_cy.seq_logprobs(model.tables, np.concatenate([q, r, a])),
        )
        assert np.array_equal(
            deletion_scan_py(model.tables, q, r, a, joint),
            _scan_cy.deletion_scan(model.tables, q, r, a, joint),
        )

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_scan_matches_generic_backend_path(self, order):
        rng = random.Random(order)
        corpus = random_corpus(rng, vocab_size=10, sequences=15, max_len=18)
        model = fit_ngram(corpus, order=order, alpha=0.5)
        backend = NgramBackend(model)
        vocab = list(model.vocab)
        q = [rng.choice(vocab) for _ in range(2)]
        r = [rng.choice(vocab) for _ in range(8)]
        a = [rng.choice(vocab) for _ in range(2)]
        for obj in (Objective.JOINT, Objective.ANS):
            fast = backend.scan_deletion_candidates(q, r, a, obj)
            for i in range(len(r)):
                remaining = r[:i] + r[i + 1 :]
                if obj is Objective.JOINT:
                    context, target = q, remaining + a
                else:
                    context, target = q + remaining, a
                generic = sum(backend.target_logprobs(context, target))
                assert fast[i] == generic  # bitwise: same lookups, same order
