"""Core domain types: validation, exact keep-fraction arithmetic, traces."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from prunekit.core import (
    Instance,
    KeepFraction,
    KeepSet,
    Objective,
    PruneTrace,
    apply_keep,
    instance_from_json,
    instance_to_json,
    keep_set_at,
    trace_from_json,
    trace_to_json,
    units_from_texts,
    validate_instance,
)
from prunekit.errors import (
    EmptyAnswer,
    EmptyReasoning,
    LengthMismatch,
    RhoBelowTrace,
    ValidationError,
)
from conftest import mk_instance


class TestValidateInstance:
    def test_well_formed_passes_through(self):
        inst = mk_instance(reasoning=("a", "b", "c"), answer=("x",))
        assert validate_instance(inst) is inst

    def test_empty_reasoning(self):
        inst = Instance(id="i", question=(), reasoning=(), answer=units_from_texts(["x"]))
        with pytest.raises(EmptyReasoning):
            validate_instance(inst)

    def test_empty_answer(self):
        inst = Instance(id="i", question=(), reasoning=units_from_texts(["a"]), answer=())
        with pytest.raises(EmptyAnswer):
            validate_instance(inst)

    def test_non_contiguous_indices(self):
        units = units_from_texts(["a", "b"])
        broken = (units[0], units[1].__class__(text="b", index=5))
        inst = Instance(id="i", question=(), reasoning=broken, answer=units_from_texts(["x"]))
        with pytest.raises(ValidationError):
            validate_instance(inst)

    def test_empty_unit_text_rejected(self):
        with pytest.raises(ValidationError):
            units_from_texts([""])


class TestKeepFraction:
    def test_ceil_on_exact_rationals(self):
        assert KeepFraction.parse("0.5").retained_length(5) == 3
        # 0.3 * 10 must be exactly 3, not a float-noise 3.0000000000004 ceil'd to 4
        assert KeepFraction.parse("0.3").retained_length(10) == 3
        assert KeepFraction.parse(0.3).retained_length(10) == 3
        assert KeepFraction.parse("1.0").retained_length(7) == 7

    def test_bounds(self):
        with pytest.raises(ValidationError):
            KeepFraction.parse("0")
        with pytest.raises(ValidationError):
            KeepFraction.parse("1.5")

    @given(st.integers(1, 10), st.integers(1, 200))
    def test_retained_length_always_in_range(self, tenths, n):
        rho = KeepFraction.parse(f"0.{tenths}" if tenths < 10 else "1.0")
        m = rho.retained_length(n)
        assert 1 <= m <= n
        assert m == math.ceil(tenths / 10 * n) or tenths == 10


def trace_of(ranks, rho_min="0.1", n=None, objective=Objective.JOINT):
    n = n if n is not None else len(ranks)
    return PruneTrace(
        instance_id="i1",
        objective=objective,
        n=n,
        rho_min=KeepFraction.parse(rho_min),
        ranks=tuple(ranks),
    )


class TestKeepSetAt:
    def test_worked_example(self):
        # removal order 3, 1, 4; stopping after n - m = 2 removals keeps {2, 4, 5}
        trace = trace_of([2, None, 1, 3, None], rho_min="0.4")
        keep = keep_set_at(trace, "0.6")
        assert keep.kept == (2, 4, 5)
        assert len(keep) == 3

    def test_rho_one_keeps_everything(self):
        trace = trace_of([2, None, 1, 3, None], rho_min="0.4")
        assert keep_set_at(trace, "1.0").kept == (1, 2, 3, 4, 5)

    def test_ceil_of_half(self):
        trace = trace_of([2, None, 1, 3, None], rho_min="0.4")
        assert len(keep_set_at(trace, "0.5")) == 3

    def test_below_rho_min_rejected(self):
        trace = trace_of([2, None, 1, 3, None], rho_min="0.4")
        with pytest.raises(RhoBelowTrace):
            keep_set_at(trace, "0.2")

    @given(st.integers(1, 40), st.data())
    def test_size_and_monotonicity(self, n, data):
        removable = data.draw(st.integers(0, n - 1))
        order = data.draw(st.permutations(range(1, n + 1)))
        ranks = [None] * n
        for step, idx in enumerate(order[:removable], start=1):
            ranks[idx - 1] = step
        trace = PruneTrace(
            instance_id="p",
            objective=Objective.JOINT,
            n=n,
            rho_min=KeepFraction(__import__("fractions").Fraction(n - removable, n)),
            ranks=tuple(ranks),
        )
        grid = [KeepFraction.parse(s) for s in ("0.1", "0.3", "0.5", "0.7", "0.9", "1.0")]
        grid = [r for r in grid if not r < trace.rho_min]
        previous = None
        for rho in sorted(grid, key=lambda r: r.rho):
            keep = keep_set_at(trace, rho)
            assert len(keep) == rho.retained_length(n)
            if previous is not None:
                assert set(previous.kept) <= set(keep.kept)
            previous = keep


class TestApplyKeep:
    def test_subsequence(self):
        r = units_from_texts(["a", "b", "c"])
        assert [u.text for u in apply_keep(r, KeepSet(kept=(1, 3), n=3))] == ["a", "c"]

    def test_identity(self):
        r = units_from_texts(["a", "b", "c"])
        assert apply_keep(r, KeepSet(kept=(1, 2, 3), n=3)) == r

    def test_empty(self):
        r = units_from_texts(["a", "b", "c"])
        assert apply_keep(r, KeepSet(kept=(), n=3)) == ()

    def test_length_mismatch(self):
        r = units_from_texts(["a", "b"])
        with pytest.raises(LengthMismatch):
            apply_keep(r, KeepSet(kept=(1,), n=3))


class TestSerialization:
    def test_instance_round_trip(self):
        inst = mk_instance(
            question=("Q1 ", "Q2 "), reasoning=("a ", "b "), answer=("x",), meta={"k": "v"}
        )
        assert instance_from_json(instance_to_json(inst)) == inst

    def test_trace_round_trip_preserves_keep_sets(self):
        trace = trace_of([2, None, 1, 3, None], rho_min="0.4")
        back = trace_from_json(trace_to_json(trace))
        for rho in ("0.4", "0.5", "0.6", "0.8", "1.0"):
            assert keep_set_at(back, rho).kept == keep_set_at(trace, rho).kept

    def test_ranks_must_be_consecutive(self):
        with pytest.raises(ValidationError):
            trace_of([1, 3, None], rho_min="0.4")

    def test_unremoved_count_must_match_rho_min(self):
        with pytest.raises(ValidationError):
            PruneTrace(
                instance_id="i",
                objective=Objective.JOINT,
                n=4,
                rho_min=KeepFraction.parse("1.0"),
                ranks=(1, None, None, None),
            )
