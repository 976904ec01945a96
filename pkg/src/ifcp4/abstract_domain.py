"""Sliced bitvector types: intervals, labels, slices and their transfer functions.

A ``BvType`` is a tuple of slices, most significant first. Each slice
carries an unsigned interval, a security label and a width. Bit ranges are
inclusive ``[hi:lo]`` with bit 0 the least significant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Union

from .lang_ast import Bits, Record, Value


class AnalysisError(Exception):
    """Raised when a program cannot be typed (not a security verdict)."""


class MarshaledArithmetic(AnalysisError):
    pass


class Label(enum.IntEnum):
    LOW = 0
    HIGH = 1

    def __str__(self) -> str:
        return "L" if self is Label.LOW else "H"

    def __or__(self, other: "Label") -> "Label":
        return Label(max(self, other))

    def leq(self, other: "Label") -> bool:
        return self <= other


LOW, HIGH = Label.LOW, Label.HIGH


def lub(labels: Iterable[Label]) -> Label:
    return reduce(lambda a, b: a | b, labels, LOW)


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class Interval:
    """Closed unsigned interval; ``lo > hi`` encodes the empty interval."""

    lo: int
    hi: int

    @staticmethod
    def full(width: int) -> "Interval":
        return Interval(0, (1 << width) - 1)

    @staticmethod
    def single(v: int) -> "Interval":
        return Interval(v, v)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def is_full(self, width: int) -> bool:
        return self.lo == 0 and self.hi == (1 << width) - 1

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    def __and__(self, other: "Interval") -> "Interval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else EMPTY

    def hull(self, other: "Interval") -> "Interval":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def subset(self, other: "Interval") -> bool:
        return self.is_empty or (other.lo <= self.lo and self.hi <= other.hi)

    def size(self) -> int:
        return 0 if self.is_empty else self.hi - self.lo + 1

    def render(self, width: int) -> str:
        if self.is_empty:
            return "[]"
        if self.is_full(width):
            return "*"
        if self.is_singleton:
            return f"[{self.lo}]"
        return f"[{self.lo},{self.hi}]"


EMPTY = Interval(1, 0)


def project(iv: Interval, lo: int, width: int) -> Interval:
    """Interval hull of ``{(v >> lo) mod 2^width : v in iv}``.

    The hull is exact when the image does not wrap; a wrapping image contains
    both 0 and 2^width-1 so its hull is the full interval.
    """
    if iv.is_empty:
        return EMPTY
    qa, qb = iv.lo >> lo, iv.hi >> lo
    if qb - qa + 1 >= (1 << width):
        return Interval.full(width)
    mask = (1 << width) - 1
    ra, rb = qa & mask, qb & mask
    if ra <= rb:
        return Interval(ra, rb)
    return Interval.full(width)


def interval_binop(op: str, a: Interval, b: Interval, width: int) -> Interval:
    """Sound interval image of ``a op b`` at the given operand width.

    Comparison results are 1-bit intervals.
    """
    if a.is_empty or b.is_empty:
        raise ValueError("interval transfer on an empty interval")
    top = (1 << width) - 1
    if op == "+":
        lo, hi = a.lo + b.lo, a.hi + b.hi
        return Interval(lo, hi) if hi <= top else Interval.full(width)
    if op == "-":
        lo, hi = a.lo - b.hi, a.hi - b.lo
        return Interval(lo, hi) if lo >= 0 else Interval.full(width)
    if op in ("&", "|", "^"):
        if a.is_singleton and b.is_singleton:
            return Interval.single(_bitop(op, a.lo, b.lo))
        return Interval.full(width)
    return _cmp_interval(op, a, b)


def _bitop(op: str, x: int, y: int) -> int:
    return x & y if op == "&" else x | y if op == "|" else x ^ y


def _cmp_interval(op: str, a: Interval, b: Interval) -> Interval:
    if op == "==":
        if a.is_singleton and b.is_singleton and a.lo == b.lo:
            return Interval.single(1)
        dec = None if not (a & b).is_empty else 0
    elif op == "!=":
        r = _cmp_interval("==", a, b)
        return Interval(1 - r.hi, 1 - r.lo)
    elif op == "<":
        dec = 1 if a.hi < b.lo else 0 if a.lo >= b.hi else None
    elif op == "<=":
        dec = 1 if a.hi <= b.lo else 0 if a.lo > b.hi else None
    elif op == ">":
        return _cmp_interval("<", b, a)
    elif op == ">=":
        return _cmp_interval("<=", b, a)
    else:
        raise ValueError(f"unknown operator {op}")
    return Interval(0, 1) if dec is None else Interval.single(dec)


def interval_unop(op: str, a: Interval, width: int) -> Interval:
    if a.is_empty:
        raise ValueError("interval transfer on an empty interval")
    if not a.is_singleton:
        return Interval(0, 1) if op == "lognot" else Interval.full(width)
    v = a.lo
    if op == "neg":
        return Interval.single((-v) & ((1 << width) - 1))
    if op == "bitnot":
        return Interval.single(~v & ((1 << width) - 1))
    if op == "lognot":
        return Interval.single(1 if v == 0 else 0)
    raise ValueError(f"unknown operator {op}")


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Slice:
    interval: Interval
    label: Label
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("slice width must be positive")
        if not self.interval.is_empty and not (0 <= self.interval.lo and self.interval.hi < (1 << self.width)):
            raise ValueError(f"interval {self.interval} out of range for width {self.width}")

    def render(self) -> str:
        return f"{self.interval.render(self.width)}^{self.label}_{self.width}"


@dataclass(frozen=True)
class BvType:
    slices: tuple[Slice, ...]

    def __post_init__(self):
        if not self.slices:
            raise ValueError("a bitvector type needs at least one slice")

    @property
    def width(self) -> int:
        return sum(s.width for s in self.slices)

    @property
    def is_empty(self) -> bool:
        return any(s.interval.is_empty for s in self.slices)

    def spans(self) -> list[tuple[int, int, Slice]]:
        """(hi, lo, slice) for each slice, most significant first."""
        out, top = [], self.width
        for s in self.slices:
            out.append((top - 1, top - s.width, s))
            top -= s.width
        return out

    def bit_labels(self) -> list[Label]:
        """Label of every bit, indexed from the least significant bit."""
        out: list[Label] = []
        for s in reversed(self.slices):
            out.extend([s.label] * s.width)
        return out

    def render(self) -> str:
        return " · ".join(s.render() for s in self.slices)


@dataclass(frozen=True)
class RecType:
    fields: tuple[tuple[str, "Type"], ...]

    def get(self, name: str) -> "Type":
        for n, t in self.fields:
            if n == name:
                return t
        raise KeyError(name)


Type = Union[BvType, RecType]


def bv(*slices: Slice) -> BvType:
    return BvType(tuple(slices))


def single(lo: int, hi: int | None, label: Label, width: int) -> BvType:
    """One-slice type; ``hi=None`` means a singleton."""
    return BvType((Slice(Interval(lo, lo if hi is None else hi), label, width),))


def full_type(width: int, label: Label = LOW) -> BvType:
    return BvType((Slice(Interval.full(width), label, width),))


def const_type(v: Value) -> Type:
    if isinstance(v, Bits):
        return BvType((Slice(Interval.single(v.value), LOW, v.width),))
    return RecType(tuple((n, const_type(x)) for n, x in v.fields))


def lbl(t: Type) -> Label:
    if isinstance(t, BvType):
        return lub(s.label for s in t.slices)
    return lub(lbl(x) for _, x in t.fields)


def raise_to(t: Type, label: Label) -> Type:
    if label == LOW:
        return t
    if isinstance(t, BvType):
        return BvType(tuple(Slice(s.interval, s.label | label, s.width) for s in t.slices))
    return RecType(tuple((n, raise_to(x, label)) for n, x in t.fields))


def type_width(t: Type) -> int:
    if isinstance(t, BvType):
        return t.width
    return sum(type_width(x) for _, x in t.fields)


def value_has_type(v: Value, t: Type) -> bool:
    if isinstance(t, RecType):
        if not isinstance(v, Record) or [n for n, _ in v.fields] != [n for n, _ in t.fields]:
            raise ValueError("record shape mismatch")
        return all(value_has_type(x, tx) for (_, x), (_, tx) in zip(v.fields, t.fields))
    if not isinstance(v, Bits) or v.width != t.width:
        raise ValueError(f"width mismatch: value {v} vs type of width {t.width}")
    return bits_have_type(v.value, t)


def bits_have_type(n: int, t: BvType) -> bool:
    for hi, lo, s in t.spans():
        if ((n >> lo) & ((1 << s.width) - 1)) not in s.interval:
            return False
    return True


def _single_slice(t: BvType) -> Slice:
    if len(t.slices) != 1:
        raise MarshaledArithmetic(f"arithmetic on marshaled value of type {t.render()}")
    return t.slices[0]


def type_binop(op: str, t1: BvType, t2: BvType) -> BvType:
    if t1.width != t2.width:
        raise AnalysisError(f"operand widths differ: {t1.width} vs {t2.width}")
    a, b = _single_slice(t1), _single_slice(t2)
    label = a.label | b.label
    width = 1 if op in ("==", "!=", "<", "<=", ">", ">=") else a.width
    if a.interval.is_empty or b.interval.is_empty:
        # only reachable while traversing an empty state at HIGH pc
        return BvType((Slice(EMPTY, label, width),))
    return BvType((Slice(interval_binop(op, a.interval, b.interval, a.width), label, width),))


def type_unop(op: str, t: BvType) -> BvType:
    a = _single_slice(t)
    width = 1 if op == "lognot" else a.width
    if a.interval.is_empty:
        return BvType((Slice(EMPTY, a.label, width),))
    return BvType((Slice(interval_unop(op, a.interval, a.width), a.label, width),))


def type_slice(t: BvType, hi: int, lo: int) -> BvType:
    if not 0 <= lo <= hi < t.width:
        raise AnalysisError(f"slice [{hi}:{lo}] out of range for width {t.width}")
    spans = t.spans()
    tops = {h for h, _, _ in spans}
    bots = {l for _, l, _ in spans}
    if hi in tops and lo in bots:
        return BvType(tuple(s for h, l, s in spans if l >= lo and h <= hi))
    label = lub(s.label for h, l, s in spans if l <= hi and h >= lo)
    return BvType((Slice(Interval.full(hi - lo + 1), label, hi - lo + 1),))


def range_hull(t: BvType, hi: int, lo: int) -> Interval:
    """Hull of the values of bits ``[hi:lo]`` over all values of ``t``.

    Exact in the sense that both endpoints are attained, because each slice
    contributes independently and the projection hulls are attained.
    """
    lo_v = hi_v = 0
    for h, l, s in t.spans():
        a, b = max(l, lo), min(h, hi)
        if a > b:
            continue
        part = project(s.interval, a - l, b - a + 1)
        if part.is_empty:
            return EMPTY
        shift = a - lo
        lo_v |= part.lo << shift
        hi_v |= part.hi << shift
    return Interval(lo_v, hi_v)


def type_leq(t1: Type, t2: Type) -> bool:
    """Every value of ``t1`` is a value of ``t2`` and ``lbl(t1) ⊑ lbl(t2)``."""
    if type_width(t1) != type_width(t2):
        raise ValueError("width mismatch")
    if not lbl(t1).leq(lbl(t2)):
        return False
    return values_included(t1, t2)


def values_included(t1: Type, t2: Type) -> bool:
    if isinstance(t1, RecType) or isinstance(t2, RecType):
        if not (isinstance(t1, RecType) and isinstance(t2, RecType)):
            raise ValueError("shape mismatch")
        return all(values_included(a, b) for (_, a), (_, b) in zip(t1.fields, t2.fields))
    if t1.is_empty:
        return True
    return all(range_hull(t1, h, l).subset(s.interval) for h, l, s in t2.spans())


def split_slice(s: Slice, cuts: list[int]) -> list[Slice]:
    """Cut a slice at the given bit positions (relative, exclusive lower bounds).

    ``cuts`` are positions p meaning a boundary between bit p and p-1; the
    pieces get projected intervals and keep the label.
    """
    bounds = sorted({c for c in cuts if 0 < c < s.width} | {0, s.width}, reverse=True)
    out = []
    for top, bot in zip(bounds, bounds[1:]):
        out.append(Slice(project(s.interval, bot, top - bot), s.label, top - bot))
    return out


def reslice(t: BvType, cuts: Iterable[int]) -> BvType:
    """Split ``t`` so that every absolute position in ``cuts`` is a boundary."""
    cuts = set(cuts)
    out: list[Slice] = []
    for h, l, s in t.spans():
        inner = [c - l for c in cuts if l < c <= h]
        out.extend(split_slice(s, inner) if inner else [s])
    return BvType(tuple(out))


def boundaries(t: BvType) -> set[int]:
    return {l for _, l, _ in t.spans()} | {t.width}
