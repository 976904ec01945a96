"""Big-step concrete semantics.

States are flat: ``ConcState.g`` and ``ConcState.l`` map dotted leaf paths to
``Bits``. Record values are rebuilt on demand from the leaves under a prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .lang_ast import (
    Apply,
    Assign,
    Binop,
    Bits,
    Call,
    Cmp,
    Const,
    Expr,
    Field,
    If,
    LField,
    LValue,
    LVar,
    Program,
    Record,
    RecordE,
    Seq,
    Skip,
    SliceE,
    Stmt,
    Transition,
    Unop,
    Value,
    Var,
    expr_to_lval,
    leaves,
)


@dataclass
class ConcState:
    g: dict[str, Bits]
    l: dict[str, Bits] = field(default_factory=dict)

    def copy(self) -> "ConcState":
        return ConcState(dict(self.g), dict(self.l))

    def key(self):
        return (tuple(self.g.items()), tuple(self.l.items()))

    def __hash__(self):
        return hash(self.key())

    def render(self) -> str:
        return "\n".join(f"{k} = {v.value}" for k, v in list(self.g.items()) + list(self.l.items()))


class TableSem(Protocol):
    def lookup(self, keys: tuple[Bits, ...]) -> tuple[str, tuple[Value, ...]]: ...


# an extern stand-in maps (globals, copied-in locals) to new (globals, locals)
ExternSem = Callable[[dict[str, Bits], dict[str, Bits]], tuple[dict[str, Bits], dict[str, Bits]]]


@dataclass
class DynamicEnv:
    tables: dict[str, TableSem] = field(default_factory=dict)
    externs: dict[str, ExternSem] = field(default_factory=dict)


class RuntimeFault(Exception):
    """Program/state mismatch; never raised on validated inputs."""


# ---------------------------------------------------------------- values

def _mask(w: int) -> int:
    return (1 << w) - 1


def eval_binop(op: str, a: Bits, b: Bits) -> Bits:
    w = a.width
    if op == "+":
        return Bits(w, (a.value + b.value) & _mask(w))
    if op == "-":
        return Bits(w, (a.value - b.value) & _mask(w))
    if op == "&":
        return Bits(w, a.value & b.value)
    if op == "|":
        return Bits(w, a.value | b.value)
    if op == "^":
        return Bits(w, a.value ^ b.value)
    raise RuntimeFault(f"unknown operator {op}")


def eval_cmp(op: str, a: Bits, b: Bits) -> Bits:
    x, y = a.value, b.value
    r = {"==": x == y, "!=": x != y, "<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op]
    return Bits(1, int(r))


def eval_unop(op: str, a: Bits) -> Bits:
    if op == "neg":
        return Bits(a.width, (-a.value) & _mask(a.width))
    if op == "bitnot":
        return Bits(a.width, ~a.value & _mask(a.width))
    if op == "lognot":
        return Bits(1, int(a.value == 0))
    raise RuntimeFault(f"unknown operator {op}")


def _record_from(scope: dict[str, Bits], prefix: str) -> Record:
    p = prefix + "."
    items = [(k, v) for k, v in scope.items() if k.startswith(p)]
    if not items:
        raise RuntimeFault(f"unknown variable {prefix}")
    groups: dict[str, list[tuple[str, Bits]]] = {}
    for k, v in items:
        groups.setdefault(k[len(p):].split(".", 1)[0], []).append((k, v))
    fields = []
    for head, sub in groups.items():
        full = p + head
        fields.append((head, sub[0][1] if len(sub) == 1 and sub[0][0] == full else _record_from(dict(sub), full)))
    return Record(tuple(fields))


def flatten_value(prefix: str, v: Value) -> dict[str, Bits]:
    if isinstance(v, Bits):
        return {prefix: v}
    out: dict[str, Bits] = {}
    for n, x in v.fields:
        out.update(flatten_value(f"{prefix}.{n}", x))
    return out


def _path_of(e: Expr) -> str | None:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Field):
        base = _path_of(e.base)
        return None if base is None else f"{base}.{e.name}"
    return None


def read_path(g: dict[str, Bits], l: dict[str, Bits], path: str) -> Value:
    if path in l:
        return l[path]
    if path in g:
        return g[path]
    root = path.split(".", 1)[0]
    scope = l if any(k == root or k.startswith(root + ".") for k in l) else g
    return _record_from(scope, path)


def eval_in(g: dict[str, Bits], l: dict[str, Bits], e: Expr) -> Value:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Var, Field)):
        path = _path_of(e)
        if path is not None:
            return read_path(g, l, path)
        base = eval_in(g, l, e.base)
        if not isinstance(base, Record):
            raise RuntimeFault("field access on a bitvector")
        return base.get(e.name)
    if isinstance(e, Binop):
        return eval_binop(e.op, eval_in(g, l, e.left), eval_in(g, l, e.right))
    if isinstance(e, Cmp):
        return eval_cmp(e.op, eval_in(g, l, e.left), eval_in(g, l, e.right))
    if isinstance(e, Unop):
        return eval_unop(e.op, eval_in(g, l, e.arg))
    if isinstance(e, SliceE):
        base = eval_in(g, l, e.base)
        return base.slice(e.hi, e.lo)
    if isinstance(e, RecordE):
        # left to right; expressions have no side effects
        return Record(tuple((n, eval_in(g, l, x)) for n, x in e.fields))
    raise RuntimeFault(f"unknown expression {e!r}")


def eval_expr(m: ConcState, e: Expr) -> Value:
    return eval_in(m.g, m.l, e)


def _lval_target(lv: LValue) -> tuple[str, tuple[int, int] | None]:
    if isinstance(lv, LVar):
        return lv.name, None
    if isinstance(lv, LField):
        base, rng = _lval_target(lv.base)
        return f"{base}.{lv.name}", rng
    base, rng = _lval_target(lv.base)
    off = rng[1] if rng else 0
    return base, (lv.hi + off, lv.lo + off)


def write_lval(g: dict[str, Bits], l: dict[str, Bits], lv: LValue, v: Value) -> None:
    path, rng = _lval_target(lv)
    if path in l or path in g:
        scope = l if path in l else g
        if rng is None:
            if not isinstance(v, Bits) or v.width != scope[path].width:
                raise RuntimeFault(f"bad write to {path}")
            scope[path] = v
            return
        hi, lo = rng
        old = scope[path]
        m = _mask(hi - lo + 1) << lo
        scope[path] = Bits(old.width, (old.value & ~m) | (v.value << lo))
        return
    root = path.split(".", 1)[0]
    scope = l if any(k.startswith(root + ".") or k == root for k in l) else g
    for k, x in flatten_value(path, v).items():
        if k not in scope or scope[k].width != x.width:
            raise RuntimeFault(f"bad record write to {k}")
        scope[k] = x


# ---------------------------------------------------------------- statements


class Machine:
    """Executes statements of one program against a dynamic environment."""

    def __init__(self, prog: Program, env: DynamicEnv):
        self.prog = prog
        self.env = env

    def run(self, s: Stmt, g: dict[str, Bits], l: dict[str, Bits]) -> dict[str, Bits]:
        """Execute ``s``; globals mutate in place, the (possibly new) locals are returned."""
        if isinstance(s, Skip):
            return l
        if isinstance(s, Assign):
            write_lval(g, l, s.lhs, eval_in(g, l, s.rhs))
            return l
        if isinstance(s, Seq):
            l = self.run(s.first, g, l)
            return self.run(s.second, g, l)
        if isinstance(s, If):
            c = eval_in(g, l, s.cond)
            return self.run(s.then if c.value == 1 else s.orelse, g, l)
        if isinstance(s, Transition):
            v = eval_in(g, l, s.scrutinee)
            target = s.default
            for arm, st in s.arms:
                if arm.value == v.value:
                    target = st
                    break
            return self.run(self.prog.state_body(target), g, l)
        if isinstance(s, Call):
            return self._call(s, g, l)
        if isinstance(s, Apply):
            self._apply(s.table, g, l)
            return l
        raise RuntimeFault(f"unknown statement {s!r}")

    def _call(self, s: Call, g: dict[str, Bits], l: dict[str, Bits]) -> dict[str, Bits]:
        args = [eval_in(g, l, a) for a in s.args]
        if s.name in self.prog.funcs:
            decl = self.prog.funcs[s.name]
            callee = _copy_in(decl.params, args)
            callee = self.run(decl.body, g, callee)
        elif s.name in self.prog.externs:
            decl = self.prog.externs[s.name]
            callee = _copy_in(decl.params, args)
            new_g, callee = self.env.externs[s.name](dict(g), callee)
            g.clear()
            g.update(new_g)
        else:
            raise RuntimeFault(f"unknown callee {s.name}")
        for p, a in zip(decl.params, s.args):
            if p.direction.is_out:
                write_lval(g, l, expr_to_lval(a), read_path({}, callee, p.name))
        return l

    def _apply(self, table: str, g: dict[str, Bits], l: dict[str, Bits]) -> None:
        decl = self.prog.tables[table]
        keys = tuple(eval_in(g, l, k) for k in decl.keys)
        action, args = self.env.tables[table].lookup(keys)
        fn = self.prog.funcs[action]
        self.run(fn.body, g, _copy_in(fn.params, list(args)))


def _copy_in(params, args: Sequence[Value]) -> dict[str, Bits]:
    out: dict[str, Bits] = {}
    for p, v in zip(params, args):
        out.update(flatten_value(p.name, v))
    return out


def exec_stmt(prog: Program, env: DynamicEnv, m: ConcState, s: Stmt) -> ConcState:
    g, l = dict(m.g), dict(m.l)
    l = Machine(prog, env).run(s, g, l)
    return ConcState(g, l)


def run_pipeline(prog: Program, env: DynamicEnv, m: ConcState) -> ConcState:
    return exec_stmt(prog, env, m, prog.entry)


def zero_state(prog: Program) -> ConcState:
    return ConcState({k: Bits(w, 0) for k, w in prog.global_layout().items()})


def param_leaves(prog: Program, params) -> dict[str, int]:
    out: dict[str, int] = {}
    for p in params:
        out.update(leaves(p.name, prog.shape(p.type)))
    return out
