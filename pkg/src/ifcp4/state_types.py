"""State types: maps from variable leaves to sliced bitvector types.

A ``StateType`` keeps two flat dictionaries (globals and locals) from dotted
leaf paths to ``BvType``. Record-typed lvalues address every leaf under
their prefix. All operations return fresh objects.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .abstract_domain import (
    EMPTY,
    LOW,
    BvType,
    Interval,
    Label,
    RecType,
    Slice,
    Type,
    boundaries,
    lub,
    range_hull,
    raise_to,
    reslice,
    type_slice,
    bits_have_type,
)
from .lang_ast import (
    NEGATED,
    Binop,
    Bits,
    Cmp,
    Const,
    Expr,
    LValue,
    Unop,
    expr_to_lval,
    lval_path,
)


class StateType:
    __slots__ = ("g", "l", "_hash")

    def __init__(self, g: dict[str, BvType], l: dict[str, BvType] | None = None):
        self.g = g
        self.l = l if l is not None else {}
        self._hash = None

    def key(self):
        return (tuple(self.g.items()), tuple(self.l.items()))

    def __eq__(self, other):
        return isinstance(other, StateType) and self.key() == other.key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __repr__(self):
        return f"StateType({render_gamma(self)})"

    def items(self) -> Iterator[tuple[str, BvType]]:
        yield from self.g.items()
        yield from self.l.items()

    def scope_of(self, path: str) -> dict[str, BvType]:
        if path in self.l or _has_prefix(self.l, path):
            return self.l
        if path in self.g or _has_prefix(self.g, path):
            return self.g
        raise KeyError(f"unknown lvalue {path}")

    def with_scope(self, scope: dict[str, BvType], new: dict[str, BvType]) -> "StateType":
        return StateType(new, self.l) if scope is self.g else StateType(self.g, new)

    def with_locals(self, l: dict[str, BvType]) -> "StateType":
        return StateType(self.g, l)


def _has_prefix(d: dict, path: str) -> bool:
    p = path + "."
    return any(k.startswith(p) for k in d)


def _leaves_under(scope: dict[str, BvType], path: str) -> list[tuple[str, BvType]]:
    if path in scope:
        return [(path, scope[path])]
    p = path + "."
    return [(k, t) for k, t in scope.items() if k.startswith(p)]


def build_record(items: Sequence[tuple[str, BvType]], prefix: str) -> RecType:
    """Rebuild a record type from the flat leaves below ``prefix``."""
    groups: dict[str, list[tuple[str, BvType]]] = {}
    for path, t in items:
        rest = path[len(prefix) + 1:]
        head = rest.split(".", 1)[0]
        groups.setdefault(head, []).append((path, t))
    fields = []
    for head, sub in groups.items():
        full = f"{prefix}.{head}"
        if len(sub) == 1 and sub[0][0] == full:
            fields.append((head, sub[0][1]))
        else:
            fields.append((head, build_record(sub, full)))
    return RecType(tuple(fields))


def flatten_type(prefix: str, t: Type) -> dict[str, BvType]:
    if isinstance(t, BvType):
        return {prefix: t}
    out: dict[str, BvType] = {}
    for n, x in t.fields:
        out.update(flatten_type(f"{prefix}.{n}", x))
    return out


def is_empty(gamma: StateType) -> bool:
    return any(t.is_empty for _, t in gamma.items())


def gamma_get(gamma: StateType, lv: LValue) -> Type:
    path, rng = lval_path(lv)
    scope = gamma.scope_of(path)
    if path in scope:
        t = scope[path]
        return t if rng is None else type_slice(t, *rng)
    if rng is not None:
        raise ValueError(f"slice of a record lvalue {path}")
    return build_record(_leaves_under(scope, path), path)


def leaf_bits(gamma: StateType, lv: LValue) -> list[tuple[str, BvType, tuple[int, int]]]:
    """Resolve an lvalue to (leaf, leaf type, bit range) triples."""
    path, rng = lval_path(lv)
    scope = gamma.scope_of(path)
    if path in scope:
        t = scope[path]
        return [(path, t, rng if rng is not None else (t.width - 1, 0))]
    if rng is not None:
        raise ValueError(f"slice of a record lvalue {path}")
    return [(k, t, (t.width - 1, 0)) for k, t in _leaves_under(scope, path)]


def splice(t: BvType, hi: int, lo: int, new: BvType) -> BvType:
    """Replace bits ``[hi:lo]`` of ``t`` by ``new``, re-slicing the rest."""
    if new.width != hi - lo + 1:
        raise ValueError(f"width mismatch: writing {new.width} bits into [{hi}:{lo}]")
    if hi - lo + 1 == t.width:
        return new
    cut = reslice(t, {hi + 1, lo})
    above = [s for h, l, s in cut.spans() if l > hi]
    below = [s for h, l, s in cut.spans() if h < lo]
    return BvType(tuple(above) + new.slices + tuple(below))


def gamma_update(gamma: StateType, lv: LValue, t: Type) -> StateType:
    path, rng = lval_path(lv)
    scope = gamma.scope_of(path)
    new = dict(scope)
    if isinstance(t, RecType):
        if rng is not None:
            raise ValueError("record written into a slice")
        flat = flatten_type(path, t)
        old = [k for k, _ in _leaves_under(scope, path)]
        if list(flat) != old:
            raise ValueError(f"record shape mismatch when writing {path}")
        for k, x in flat.items():
            if x.width != scope[k].width:
                raise ValueError(f"width mismatch at {k}")
            new[k] = x
    else:
        if path not in scope:
            raise ValueError(f"bitvector written into record lvalue {path}")
        cur = scope[path]
        if rng is None:
            if t.width != cur.width:
                raise ValueError(f"width mismatch: {path} has {cur.width} bits, got {t.width}")
            new[path] = t
        else:
            new[path] = splice(cur, rng[0], rng[1], t)
    return gamma.with_scope(scope, new)


TypeMap = Sequence[tuple[LValue, Type]]


def gamma_concat(gamma: StateType, entries: TypeMap) -> StateType:
    """Right-biased override of ``gamma`` by the partial map ``entries``."""
    for lv, t in entries:
        gamma = gamma_update(gamma, lv, t)
    return gamma


def raise_entries(entries: TypeMap, label: Label) -> list[tuple[LValue, Type]]:
    return [(lv, raise_to(t, label)) for lv, t in entries]


# ---------------------------------------------------------------- refine


def refine(gamma: StateType, pred: Expr) -> StateType:
    """Over-approximate the states of ``gamma`` in which ``pred`` holds."""
    if isinstance(pred, Cmp):
        return _refine_cmp(gamma, pred.op, pred.left, pred.right)
    if isinstance(pred, Binop) and pred.op == "&":
        return refine(refine(gamma, pred.left), pred.right)
    if isinstance(pred, Unop) and pred.op == "lognot":
        return refine_not(gamma, pred.arg)
    if expr_to_lval(pred) is not None:
        return _refine_cmp(gamma, "==", pred, Const(Bits(1, 1)))
    return gamma


def refine_not(gamma: StateType, pred: Expr) -> StateType:
    """Refine with the negation of ``pred``."""
    if isinstance(pred, Cmp):
        return _refine_cmp(gamma, NEGATED[pred.op], pred.left, pred.right)
    if isinstance(pred, Binop) and pred.op == "|":
        return refine_not(refine_not(gamma, pred.left), pred.right)
    if isinstance(pred, Unop) and pred.op == "lognot":
        return refine(gamma, pred.arg)
    if expr_to_lval(pred) is not None:
        return _refine_cmp(gamma, "==", pred, Const(Bits(1, 0)))
    return gamma


_FLIP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _side_hull(gamma: StateType, e: Expr) -> Interval | None:
    if isinstance(e, Const):
        return Interval.single(e.value.value) if isinstance(e.value, Bits) else None
    lv = expr_to_lval(e)
    if lv is None:
        return None
    try:
        parts = leaf_bits(gamma, lv)
    except (KeyError, ValueError):
        return None
    if len(parts) != 1:
        return None
    _, t, (hi, lo) = parts[0]
    return range_hull(t, hi, lo)


def _allowed(op: str, other: Interval, cur: Interval, width: int) -> Interval | None:
    """Values x in ``cur`` for which ``x op y`` can hold for some y in ``other``."""
    top = (1 << width) - 1
    if other.is_empty:
        return EMPTY
    if op == "==":
        return other
    if op == "!=":
        if not other.is_singleton:
            return None
        c = other.lo
        if cur.is_singleton and cur.lo == c:
            return EMPTY
        if cur.lo == c:
            return Interval(c + 1, top)
        if cur.hi == c:
            return Interval(0, c - 1)
        return None
    if op == "<":
        return EMPTY if other.hi == 0 else Interval(0, other.hi - 1)
    if op == "<=":
        return Interval(0, other.hi)
    if op == ">":
        return EMPTY if other.lo == top else Interval(other.lo + 1, top)
    if op == ">=":
        return Interval(other.lo, top)
    raise ValueError(op)


def _refine_cmp(gamma: StateType, op: str, left: Expr, right: Expr) -> StateType:
    plans = []
    for lhs, rhs, o in ((left, right, op), (right, left, _FLIP[op])):
        lv = expr_to_lval(lhs)
        if lv is None:
            continue
        other = _side_hull(gamma, rhs)
        if other is None:
            continue
        plans.append((lv, o, other))
    for lv, o, other in plans:
        gamma = _constrain(gamma, lv, o, other)
    return gamma


def _constrain(gamma: StateType, lv: LValue, op: str, other: Interval) -> StateType:
    try:
        parts = leaf_bits(gamma, lv)
    except (KeyError, ValueError):
        return gamma
    if len(parts) != 1:
        return gamma
    path, t, (hi, lo) = parts[0]
    width = hi - lo + 1
    cut = reslice(t, {hi + 1, lo})
    spans = cut.spans()
    inside = [i for i, (h, l, _) in enumerate(spans) if lo <= l and h <= hi]
    slices = list(cut.slices)
    if len(inside) == 1:
        s = slices[inside[0]]
        allowed = _allowed(op, other, s.interval, width)
        if allowed is None:
            return gamma
        new_iv = s.interval & allowed
        if new_iv == s.interval:
            return gamma
        slices[inside[0]] = Slice(new_iv, s.label, s.width)
    elif op == "==" and other.is_singleton:
        changed = False
        for i in inside:
            _, l, s = spans[i]
            part = (other.lo >> (l - lo)) & ((1 << s.width) - 1)
            ns = Slice(s.interval & Interval.single(part), s.label, s.width)
            changed |= ns != s
            slices[i] = ns
        if not changed:
            return gamma
    else:
        return gamma
    new_t = BvType(tuple(slices))
    scope = gamma.scope_of(path)
    new = dict(scope)
    new[path] = new_t
    return gamma.with_scope(scope, new)


# ---------------------------------------------------------------- join and lub


def _check_shape(g1: StateType, g2: StateType):
    if list(g1.g) != list(g2.g) or list(g1.l) != list(g2.l):
        raise ValueError("state types have different shapes")
    for k, t in g1.items():
        t2 = g2.g[k] if k in g2.g else g2.l[k]
        if t.width != t2.width:
            raise ValueError(f"width mismatch at {k}")


def _join_leaf(t1: BvType, t2: BvType) -> BvType:
    labels2 = t2.bit_labels()
    out = []
    for h, l, s in t1.spans():
        out.append(Slice(s.interval, s.label | lub(labels2[l:h + 1]), s.width))
    return BvType(tuple(out))


def join(g1: StateType, g2: StateType) -> StateType:
    """Intervals and slicing of ``g1``; labels raised by every overlap in ``g2``."""
    _check_shape(g1, g2)
    return StateType(
        {k: _join_leaf(t, g2.g[k]) for k, t in g1.g.items()},
        {k: _join_leaf(t, g2.l[k]) for k, t in g1.l.items()},
    )


def join_set(gammas: Sequence[StateType]) -> list[StateType]:
    out = []
    for g in gammas:
        acc = g
        for other in gammas:
            acc = join(acc, other)
        out.append(acc)
    return out


def _lub_leaf(t1: BvType, t2: BvType) -> BvType:
    cuts = boundaries(t1) | boundaries(t2)
    r1, r2 = reslice(t1, cuts), reslice(t2, cuts)
    return BvType(tuple(Slice(a.interval.hull(b.interval), a.label | b.label, a.width) for a, b in zip(r1.slices, r2.slices)))


def gamma_lub(g1: StateType, g2: StateType) -> StateType:
    """Bitwise label lub; the interval hull is only a carrier."""
    _check_shape(g1, g2)
    return StateType(
        {k: _lub_leaf(t, g2.g[k]) for k, t in g1.g.items()},
        {k: _lub_leaf(t, g2.l[k]) for k, t in g1.l.items()},
    )


def gamma_restrictive_leq(g1: StateType, g2: StateType | TypeMap) -> bool:
    """Per bit, the label in ``g1`` is below the label in ``g2`` over ``g2``'s domain."""
    return first_label_violation(g1, g2) is None


def first_label_violation(g1: StateType, g2: StateType | TypeMap) -> str | None:
    if isinstance(g2, StateType):
        for k, t2 in g2.items():
            t1 = g1.g[k] if k in g1.g else g1.l[k]
            if any(a > b for a, b in zip(t1.bit_labels(), t2.bit_labels())):
                return k
        return None
    for lv, t in g2:
        flat = flatten_type("", t) if isinstance(t, RecType) else {"": t}
        parts = leaf_bits(g1, lv)
        if len(parts) != len(flat):
            raise ValueError("shape mismatch in partial state type")
        for (path, t1, (hi, lo)), t2 in zip(parts, flat.values()):
            labels1 = t1.bit_labels()[lo:hi + 1]
            if any(a > b for a, b in zip(labels1, t2.bit_labels())):
                return path
    return None


def intersects(g1: StateType, g2: StateType) -> bool:
    """False only if no state is typed by both (sound emptiness test)."""
    if is_empty(g1) or is_empty(g2):
        return False
    for k, t2 in g2.items():
        t1 = g1.g[k] if k in g1.g else g1.l[k]
        for h, l, s in t2.spans():
            if (range_hull(t1, h, l) & s.interval).is_empty:
                return False
        for h, l, s in t1.spans():
            if (range_hull(t2, h, l) & s.interval).is_empty:
                return False
    return True


# ---------------------------------------------------------------- concrete states


def gamma_types_state(gamma: StateType, m) -> bool:
    if set(m.g) != set(gamma.g) or set(m.l) != set(gamma.l):
        raise ValueError("state and state type have different shapes")
    if is_empty(gamma):
        return False
    for k, t in gamma.items():
        v = m.g[k] if k in m.g else m.l[k]
        if v.width != t.width:
            raise ValueError(f"width mismatch at {k}")
        if not bits_have_type(v.value, t):
            return False
    return True


def low_mask(t: BvType) -> int:
    mask = 0
    for h, l, s in t.spans():
        if s.label == LOW:
            mask |= ((1 << s.width) - 1) << l
    return mask


def low_equiv(m1, m2, gamma: StateType) -> bool:
    """Every LOW bit of ``gamma`` holds the same value in both states."""
    for k, t in gamma.items():
        a = m1.g[k] if k in m1.g else m1.l[k]
        b = m2.g[k] if k in m2.g else m2.l[k]
        if (a.value ^ b.value) & low_mask(t):
            return False
    return True


# ---------------------------------------------------------------- rendering


def render_gamma(gamma: StateType) -> str:
    body = ", ".join(f"{k} ↦ {t.render()}" for k, t in gamma.items())
    return "{" + body + "}"


def render_set(gammas: Iterable[StateType]) -> str:
    return "\n".join(render_gamma(g) for g in gammas)
