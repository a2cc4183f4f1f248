"""Greedy pruning: worked examples, oracle checks, brute-force agreement."""

from __future__ import annotations

import random
from collections import Counter

import pytest

from prunekit.backends.ngram import NgramBackend, fit_ngram
from prunekit.core import (
    KeepFraction,
    Objective,
    PruneTrace,
    StepRecord,
    keep_set_at,
)
from prunekit.errors import BackendFailure, TooLarge, UnsupportedTrace, ValidationError
from prunekit.pruning import (
    GreedyConfig,
    brute_force_subset,
    greedy_prune,
    load_checkpoint,
    stepwise_oracle_check,
)
from conftest import mk_instance, random_corpus, random_instance


def greedy_cfg(objective=Objective.JOINT, rho_min="0.1", **kw):
    return GreedyConfig(objective=objective, rho_min=KeepFraction.parse(rho_min), **kw)


class TestWorkedExamples:
    def test_joint_removes_least_probable_first(self, abc_backend):
        # unigram p(a)=.5 p(b)=.25 p(c)=.125: c goes first, then b; a survives
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="1/3"))
        assert trace.ranks == (2, None, 1)

    def test_ans_objective_ties_break_low_index(self, abc_backend):
        # context-free answer score is deletion-invariant: all candidates tie
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(Objective.ANS, rho_min="1/3"))
        assert trace.ranks == (1, 2, None)

    def test_rho_one_removes_nothing(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="1.0"))
        assert trace.ranks == (None, None, None)

    def test_rank_count_matches_rho_min(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c", "d", "a"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="0.4"))
        assigned = [r for r in trace.ranks if r is not None]
        assert sorted(assigned) == [1, 2, 3]  # n - ceil(0.4 * 5) = 3


class TestFastPathParity:
    @pytest.mark.parametrize("order", [1, 2])
    @pytest.mark.parametrize("objective", [Objective.JOINT, Objective.ANS])
    def test_fast_and_generic_traces_identical(self, order, objective):
        rng = random.Random(order * 7 + (objective is Objective.ANS))
        corpus = random_corpus(rng, vocab_size=10, sequences=20)
        backend = NgramBackend(fit_ngram(corpus, order=order, alpha=0.5))
        for k in range(5):
            inst = random_instance(rng, f"i{k}", vocab_size=10, max_n=12)
            cfg_fast = greedy_cfg(objective, rho_min="0.2", record_steps=True)
            cfg_slow = greedy_cfg(
                objective, rho_min="0.2", record_steps=True, use_fast_path=False
            )
            fast = greedy_prune(backend, inst, cfg_fast)
            slow = greedy_prune(backend, inst, cfg_slow)
            assert fast.ranks == slow.ranks
            for sf, ss in zip(fast.steps, slow.steps):
                assert sf.candidate_scores == ss.candidate_scores  # bitwise


class TestOracleCheck:
    def test_valid_trace_has_zero_violations(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c", "d"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="0.25", record_steps=True))
        report = stepwise_oracle_check(trace, abc_backend, inst)
        assert report.ok and report.steps_checked == 3

    def test_swapped_ranks_detected(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c", "d"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="0.25", record_steps=True))
        # swap the removals of the first two steps: first scan no longer removes the max
        s0, s1 = trace.steps[0], trace.steps[1]
        mutated_steps = (
            StepRecord(s0.step, s0.candidate_scores, s1.removed),
            StepRecord(s1.step, s1.candidate_scores, s0.removed),
        ) + trace.steps[2:]
        mutated = PruneTrace(
            instance_id=trace.instance_id,
            objective=trace.objective,
            n=trace.n,
            rho_min=trace.rho_min,
            ranks=trace.ranks,
            steps=mutated_steps,
        )
        report = stepwise_oracle_check(mutated, abc_backend, inst)
        assert not report.ok
        assert report.violations[0].step == s0.step

    def test_trace_without_steps_unsupported(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="0.5"))
        with pytest.raises(UnsupportedTrace):
            stepwise_oracle_check(trace, abc_backend, inst)


class TestBruteForce:
    def test_singleton_keeps_most_probable(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        keep, _ = brute_force_subset(abc_backend, inst, Objective.JOINT, m=1)
        assert keep.kept == (2,)

    def test_m_equals_n(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        keep, total = brute_force_subset(abc_backend, inst, Objective.JOINT, m=3)
        assert keep.kept == (1, 2, 3)
        from prunekit.scoring import objective_score

        full = objective_score(abc_backend, Objective.JOINT, (), inst.reasoning, inst.answer)
        assert total == pytest.approx(full.total)

    def test_combinatorial_guard(self, abc_backend):
        inst = mk_instance(reasoning=tuple("ab" * 9), answer=("a",))
        with pytest.raises(TooLarge):
            brute_force_subset(abc_backend, inst, Objective.JOINT, m=2)

    def test_greedy_never_beats_brute_force(self):
        rng = random.Random(13)
        corpus = random_corpus(rng, vocab_size=8, sequences=15)
        backend = NgramBackend(fit_ngram(corpus, order=2, alpha=0.5))
        from prunekit.core import apply_keep
        from prunekit.scoring import objective_score

        for k in range(8):
            inst = random_instance(rng, f"i{k}", vocab_size=8, max_n=9)
            m = max(1, inst.n // 2)
            rho = KeepFraction(__import__("fractions").Fraction(m, inst.n))
            trace = greedy_prune(backend, inst, GreedyConfig(rho_min=rho))
            kept_units = apply_keep(inst.reasoning, keep_set_at(trace, rho))
            greedy_total = objective_score(
                backend, Objective.JOINT, inst.question, kept_units, inst.answer
            ).total
            _, best_total = brute_force_subset(backend, inst, Objective.JOINT, m)
            assert greedy_total <= best_total + 1e-12


class TestUnigramClosedForm:
    def test_greedy_matches_brute_force_when_probs_distinct(self):
        # distinct per-token probabilities: greedy and exhaustive search agree
        rng = random.Random(99)
        counts = {f"t{i}": i + 1 for i in range(12)}  # distinct counts = distinct probs
        corpus = [[tok for tok, c in counts.items() for _ in range(c)]]
        backend = NgramBackend(fit_ngram(corpus, order=1, alpha=0.0))
        tokens = list(counts)
        for trial in range(5):
            n = rng.randint(2, 8)
            reasoning = tuple(rng.sample(tokens, n))
            inst = mk_instance(inst_id=f"u{trial}", reasoning=reasoning, answer=("t1",))
            for m in range(1, n + 1):
                rho = KeepFraction(__import__("fractions").Fraction(m, n))
                trace = greedy_prune(backend, inst, GreedyConfig(rho_min=rho))
                keep, _ = brute_force_subset(backend, inst, Objective.JOINT, m)
                assert keep_set_at(trace, rho).kept == keep.kept


class TestMultiTokenPerStep:
    def test_k_block_refinement_on_unigram(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c", "d", "b", "c"), answer=("a",))
        one = greedy_prune(
            abc_backend, inst, greedy_cfg(rho_min="1/3", k_per_step=1, record_steps=True)
        )
        blocked = greedy_prune(
            abc_backend, inst, greedy_cfg(rho_min="1/3", k_per_step=2, record_steps=True)
        )
        single_order = one.removal_order
        for block_start, step in enumerate(blocked.steps):
            lo = 2 * block_start
            assert Counter(step.removed) == Counter(single_order[lo : lo + 2])

    def test_final_step_removes_fewer(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c"), answer=("a",))
        trace = greedy_prune(
            abc_backend, inst, greedy_cfg(rho_min="1/3", k_per_step=5, record_steps=True)
        )
        assert len(trace.steps) == 1
        assert len(trace.steps[0].removed) == 2  # capped at n - m

    def test_consecutive_ranks_across_blocks(self, abc_backend):
        inst = mk_instance(reasoning=("b", "a", "c", "d", "b"), answer=("a",))
        trace = greedy_prune(abc_backend, inst, greedy_cfg(rho_min="0.2", k_per_step=2))
        assigned = sorted(r for r in trace.ranks if r is not None)
        assert assigned == [1, 2, 3, 4]


class FlakyBackend:
    """Fails on the k-th candidate evaluation, then recovers."""

    def __init__(self, inner, fail_at: int):
        self.inner = inner
        self.calls = 0
        self.fail_at = fail_at

    @property
    def descriptor(self):
        return self.inner.descriptor

    def target_logprobs(self, context, target):
        self.calls += 1
        if self.calls == self.fail_at:
            raise BackendFailure("synthetic outage", retryable=True)
        return self.inner.target_logprobs(context, target)


class TestResume:
    def test_checkpoint_and_resume_match_uninterrupted(self, abc_backend, tmp_path):
        inst = mk_instance(reasoning=("b", "a", "c", "d", "b", "c"), answer=("a",))
        cfg = greedy_cfg(rho_min="1/3", record_steps=True, use_fast_path=False)
        reference = greedy_prune(abc_backend, inst, cfg)

        flaky = FlakyBackend(abc_backend, fail_at=9)
        ckpt = tmp_path / "partial.json"
        with pytest.raises(BackendFailure):
            greedy_prune(flaky, inst, cfg, checkpoint_path=ckpt)
        assert ckpt.exists()
        state = load_checkpoint(ckpt)
        assert state["resume"] is True
        resumed = greedy_prune(abc_backend, inst, cfg, resume_from=state)
        assert resumed.ranks == reference.ranks
        assert len(resumed.steps) == len(reference.steps)

    def test_resume_rejects_other_instance(self, abc_backend, tmp_path):
        inst = mk_instance(reasoning=("b", "a", "c", "d"), answer=("a",))
        other = mk_instance(inst_id="other", reasoning=("b", "a", "c", "d"), answer=("a",))
        cfg = greedy_cfg(rho_min="0.5", record_steps=True, use_fast_path=False)
        flaky = FlakyBackend(abc_backend, fail_at=2)
        ckpt = tmp_path / "partial.json"
        with pytest.raises(BackendFailure):
            greedy_prune(flaky, inst, cfg, checkpoint_path=ckpt)
        with pytest.raises(ValidationError):
            greedy_prune(abc_backend, other, cfg, resume_from=load_checkpoint(ckpt))


class TestDominance:
    def test_greedy_beats_uniform_on_average(self):
        from prunekit.baselines import prune_by_ranks, uniform_ranks
        from prunekit.core import apply_keep
        from prunekit.scoring import objective_score

        rng = random.Random(7)
        corpus = random_corpus(rng, vocab_size=12, sequences=30)
        backend = NgramBackend(fit_ngram(corpus, order=2, alpha=0.5))
        rho = KeepFraction.parse("0.4")
        greedy_sum = uniform_sum = 0.0
        for k in range(25):
            inst = random_instance(rng, f"d{k}", vocab_size=12, max_n=14)
            trace = greedy_prune(backend, inst, GreedyConfig(rho_min=KeepFraction.parse("0.1")))
            gkeep = keep_set_at(trace, rho)
            ukeep = prune_by_ranks(uniform_ranks(inst.n, seed=k), rho)
            assert len(gkeep) == len(ukeep)
            greedy_sum += objective_score(
                backend, Objective.JOINT, inst.question,
                apply_keep(inst.reasoning, gkeep), inst.answer,
            ).total
            uniform_sum += objective_score(
                backend, Objective.JOINT, inst.question,
                apply_keep(inst.reasoning, ukeep), inst.answer,
            ).total
        assert greedy_sum > uniform_sum
