import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import values_of

from ifcp4.abstract_domain import (
    EMPTY,
    HIGH,
    LOW,
    BvType,
    Interval,
    MarshaledArithmetic,
    Slice,
    interval_binop,
    interval_unop,
    lub,
    project,
    range_hull,
    reslice,
    type_binop,
    type_leq,
    type_slice,
    values_included,
)
from ifcp4.interp import eval_binop, eval_cmp, eval_unop
from ifcp4.lang_ast import Bits

ARITH = ["+", "-", "&", "|", "^"]
CMP = ["==", "!=", "<", "<=", ">", ">="]


@st.composite
def interval(draw, width):
    top = (1 << width) - 1
    lo = draw(st.integers(0, top))
    return Interval(lo, draw(st.integers(lo, top)))


@st.composite
def bvtype(draw, max_width=6):
    width = draw(st.integers(1, max_width))
    cuts = sorted(draw(st.sets(st.integers(1, width - 1), max_size=3))) if width > 1 else []
    bounds = [width] + cuts[::-1] + [0]
    slices = []
    for hi, lo in zip(bounds, bounds[1:]):
        w = hi - lo
        slices.append(Slice(draw(interval(w)), draw(st.sampled_from([LOW, HIGH])), w))
    return BvType(tuple(slices))


def test_labels():
    assert LOW.leq(HIGH) and not HIGH.leq(LOW)
    assert lub([]) == LOW and lub([LOW, HIGH]) == HIGH
    assert str(HIGH) == "H"


def test_interval_basics():
    assert EMPTY.is_empty and Interval(2, 2).is_singleton
    assert Interval(1, 3).hull(Interval(6, 7)) == Interval(1, 7)
    assert Interval(2, 4).subset(Interval(0, 4)) and not Interval(2, 5).subset(Interval(0, 4))
    assert Interval(0, 15).render(4) == "*"


@settings(max_examples=400, deadline=None)
@given(st.integers(1, 8).flatmap(lambda w: st.tuples(st.just(w), interval(w))), st.data())
def test_project_is_the_exact_hull_or_full(wi, data):
    w, iv = wi
    lo = data.draw(st.integers(0, w - 1))
    pw = data.draw(st.integers(1, w - lo))
    image = {(v >> lo) & ((1 << pw) - 1) for v in range(iv.lo, iv.hi + 1)}
    got = project(iv, lo, pw)
    assert image <= set(range(got.lo, got.hi + 1))
    if got != Interval.full(pw):
        assert (got.lo, got.hi) == (min(image), max(image))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5).flatmap(lambda w: st.tuples(st.just(w), interval(w), interval(w))), st.sampled_from(ARITH + CMP))
def test_binop_sound(wab, op):
    w, a, b = wab
    got = interval_binop(op, a, b, w)
    run = eval_cmp if op in CMP else eval_binop
    for x in range(a.lo, a.hi + 1):
        for y in range(b.lo, b.hi + 1):
            assert run(op, Bits(w, x), Bits(w, y)).value in got


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda w: st.tuples(st.just(w), interval(w))), st.sampled_from(["neg", "bitnot", "lognot"]))
def test_unop_sound(wa, op):
    w, a = wa
    got = interval_unop(op, a, w)
    for x in range(a.lo, a.hi + 1):
        assert eval_unop(op, Bits(w, x)).value in got


def test_binop_precision():
    assert interval_binop("+", Interval(1, 3), Interval(2, 2), 4) == Interval(3, 5)
    assert interval_binop("+", Interval(14, 15), Interval(1, 1), 4) == Interval.full(4)
    assert interval_binop("-", Interval(1, 10), Interval(1, 1), 8) == Interval(0, 9)
    assert interval_binop("<", Interval(0, 3), Interval(4, 9), 4) == Interval.single(1)
    assert interval_binop("&", Interval(12, 12), Interval(10, 10), 4) == Interval.single(8)


@settings(max_examples=300, deadline=None)
@given(bvtype(), st.data())
def test_range_hull_attained(t, data):
    vals = values_of(t)
    hi = data.draw(st.integers(0, t.width - 1))
    lo = data.draw(st.integers(0, hi))
    got = range_hull(t, hi, lo)
    if not vals:
        assert got.is_empty
        return
    parts = [(v >> lo) & ((1 << (hi - lo + 1)) - 1) for v in vals]
    assert (got.lo, got.hi) == (min(parts), max(parts))


@settings(max_examples=300, deadline=None)
@given(bvtype(), st.data())
def test_type_slice_sound(t, data):
    hi = data.draw(st.integers(0, t.width - 1))
    lo = data.draw(st.integers(0, hi))
    s = type_slice(t, hi, lo)
    assert s.width == hi - lo + 1
    labels = t.bit_labels()[lo:hi + 1]
    for v in values_of(t):
        part = (v >> lo) & ((1 << s.width) - 1)
        assert values_of(BvType(s.slices)).count(part) == 1
    # a slice never lowers a bit's label
    assert all(a >= b for a, b in zip(s.bit_labels(), labels))


@settings(max_examples=300, deadline=None)
@given(bvtype(max_width=5), bvtype(max_width=5))
def test_values_included_matches_sets(t1, t2):
    if t1.width != t2.width:
        with pytest.raises(ValueError):
            type_leq(t1, t2)
        return
    assert values_included(t1, t2) == set(values_of(t1)).issubset(values_of(t2))


@settings(max_examples=200, deadline=None)
@given(bvtype(), st.sets(st.integers(1, 5)))
def test_reslice_keeps_labels_and_over_approximates(t, cuts):
    r = reslice(t, {c for c in cuts if c < t.width})
    assert r.bit_labels() == t.bit_labels()
    assert set(values_of(t)) <= set(values_of(r))


def test_marshaled_arithmetic_is_refused():
    two = BvType((Slice(Interval(0, 1), LOW, 1), Slice(Interval(0, 1), HIGH, 1)))
    with pytest.raises(MarshaledArithmetic):
        type_binop("+", two, two)


def test_type_binop_label():
    a = BvType((Slice(Interval(1, 2), LOW, 4),))
    b = BvType((Slice(Interval(3, 3), HIGH, 4),))
    assert type_binop("+", a, b).render() == "[4,5]^H_4"
    assert type_binop("<", a, b).render() == "[1]^H_1"
