import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import gamma, state, values_of
from test_abstract_domain import bvtype

from ifcp4.abstract_domain import HIGH, LOW, BvType, Interval, Slice, full_type, single
from ifcp4.interp import ConcState, eval_in
from ifcp4.lang_ast import Bits, Cmp, Const, LSlice, LVar, SliceE, Unop, Var
from ifcp4.state_types import (
    first_label_violation,
    gamma_lub,
    gamma_types_state,
    gamma_update,
    intersects,
    is_empty,
    join,
    join_set,
    low_equiv,
    refine,
    refine_not,
    render_gamma,
)

CMPS = ["==", "!=", "<", "<=", ">", ">="]


def states_of(g):
    names = [k for k, _ in g.items()]
    for combo in itertools.product(*(values_of(t) for _, t in g.items())):
        yield ConcState({k: Bits(g.g[k].width, v) for k, v in zip(names, combo)})


def test_update_whole_and_slice():
    g = gamma(x=single(0, 15, LOW, 4))
    g2 = gamma_update(g, LSlice(LVar("x"), 2, 1), single(3, None, HIGH, 2))
    assert render_gamma(g2) == "{x ↦ *^L_1 · [3]^H_2 · *^L_1}"
    g3 = gamma_update(g2, LVar("x"), single(5, None, LOW, 4))
    assert render_gamma(g3) == "{x ↦ [5]^L_4}"
    with pytest.raises(ValueError):
        gamma_update(g, LVar("x"), single(0, None, LOW, 3))


@settings(max_examples=300, deadline=None)
@given(bvtype(max_width=4), bvtype(max_width=4), st.sampled_from(CMPS), st.booleans(), st.data())
def test_refine_keeps_every_satisfying_state(tx, ty, op, negate, data):
    if tx.width != ty.width:
        ty = BvType((Slice(Interval.full(tx.width), LOW, tx.width),))
    g = gamma(x=tx, y=ty)
    use_const = data.draw(st.booleans())
    right = Const(Bits(tx.width, data.draw(st.integers(0, (1 << tx.width) - 1)))) if use_const else Var("y")
    pred = Cmp(op, Var("x"), right)
    r = refine_not(g, pred) if negate else refine(g, pred)
    assert [k for k, _ in r.items()] == ["x", "y"]
    for m in states_of(g):
        holds = eval_in(m.g, {}, pred).value == 1
        if holds != negate:
            assert gamma_types_state(r, m)
    # labels and slicing never change
    assert all(a.bit_labels() == b.bit_labels() for (_, a), (_, b) in zip(g.items(), r.items()))


def test_refine_on_slice_and_lognot():
    g = gamma(x=full_type(8))
    r = refine(g, Cmp("==", SliceE(Var("x"), 7, 4), Const(Bits(4, 12))))
    assert render_gamma(r) == "{x ↦ [12]^L_4 · *^L_4}"
    r = refine(gamma(b=full_type(1)), Unop("lognot", Var("b")))
    assert render_gamma(r) == "{b ↦ [0]^L_1}"


def test_refine_to_empty():
    g = gamma(x=single(2, 5, LOW, 4))
    assert is_empty(refine(g, Cmp(">", Var("x"), Const(Bits(4, 9)))))


def test_join_takes_labels_from_both():
    a = gamma(x=BvType((Slice(Interval(1, 1), LOW, 2), Slice(Interval(0, 3), LOW, 2))))
    b = gamma(x=BvType((Slice(Interval(0, 0), LOW, 3), Slice(Interval(0, 1), HIGH, 1))))
    j = join(a, b)
    assert render_gamma(j) == "{x ↦ [1]^L_2 · *^H_2}"


@settings(max_examples=200, deadline=None)
@given(st.lists(bvtype(max_width=3).filter(lambda t: t.width == 3), min_size=1, max_size=4))
def test_join_set_gives_common_labels(ts):
    out = join_set([gamma(x=t) for t in ts])
    high = [max(bits) for bits in zip(*(t.bit_labels() for t in ts))]
    for g, t in zip(out, ts):
        got = g.g["x"]
        # slicing and intervals are kept; a slice is HIGH iff one of its bits is HIGH anywhere
        assert [(s.interval, s.width) for s in got.slices] == [(s.interval, s.width) for s in t.slices]
        for h, l, s in got.spans():
            assert s.label == max(high[l:h + 1])


@settings(max_examples=300, deadline=None)
@given(bvtype(max_width=4), bvtype(max_width=4))
def test_intersects_is_sound(t1, t2):
    if t1.width != t2.width:
        return
    common = set(values_of(t1)) & set(values_of(t2))
    if common:
        assert intersects(gamma(x=t1), gamma(x=t2))


def test_lub_and_label_violation():
    lo, hi = gamma(x=full_type(4)), gamma(x=full_type(4, HIGH))
    assert gamma_lub(lo, hi) == hi
    assert first_label_violation(hi, lo) == "x"
    assert first_label_violation(lo, hi) is None
    assert first_label_violation(hi, [(LSlice(LVar("x"), 1, 0), full_type(2, HIGH))]) is None


def test_low_equivalence_uses_low_bits_only():
    g = gamma(x=BvType((Slice(Interval(0, 3), HIGH, 2), Slice(Interval(0, 3), LOW, 2))))
    a = ConcState(state(x=(4, 0b0101)))
    b = ConcState(state(x=(4, 0b1101)))
    c = ConcState(state(x=(4, 0b1100)))
    assert low_equiv(a, b, g) and not low_equiv(a, c, g)
