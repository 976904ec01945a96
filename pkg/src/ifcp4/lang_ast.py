"""Abstract syntax for mini-P4 programs.

Values, expressions, lvalues and statements are frozen dataclasses so they
can be hashed, compared and shared between analyses. A ``Program`` bundles
the declarations (types, globals, functions, actions, externs, tables,
parser states) with the entry statement.

Variables are stored flat at runtime and in state types: every bitvector
leaf of a record is addressed by its dotted path, e.g. ``hdr.ipv4.ecn``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Union

VALID = "$valid"
REJECTED = "$rejected"


# ---------------------------------------------------------------- values


@dataclass(frozen=True)
class Bits:
    width: int
    value: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"bitvector width must be positive, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value} does not fit in {self.width} bits")

    def slice(self, hi: int, lo: int) -> "Bits":
        return Bits(hi - lo + 1, (self.value >> lo) & ((1 << (hi - lo + 1)) - 1))


@dataclass(frozen=True)
class Record:
    fields: tuple[tuple[str, "Value"], ...]

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate record field in {names}")

    def get(self, name: str) -> "Value":
        for n, v in self.fields:
            if n == name:
                return v
        raise KeyError(name)


Value = Union[Bits, Record]


# ---------------------------------------------------------------- expressions

UNOPS = ("neg", "bitnot", "lognot")
BINOPS = ("+", "-", "&", "|", "^")
CMPOPS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Const:
    value: Value
    # printing hints only; they never affect equality
    sized: bool = field(default=True, compare=False)
    radix: str = field(default="dec", compare=False)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unop:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binop:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Field:
    base: "Expr"
    name: str


@dataclass(frozen=True)
class SliceE:
    base: "Expr"
    hi: int
    lo: int


@dataclass(frozen=True)
class RecordE:
    fields: tuple[tuple[str, "Expr"], ...]


Expr = Union[Const, Var, Unop, Binop, Cmp, Field, SliceE, RecordE]


def const(value: int, width: int) -> Const:
    return Const(Bits(width, value))


TRUE = Const(Bits(1, 1))
FALSE = Const(Bits(1, 0))


def conj(*preds: Expr) -> Expr:
    """Right-nested conjunction of 1-bit predicates; empty means true."""
    preds = tuple(preds)
    if not preds:
        return TRUE
    out = preds[-1]
    for p in reversed(preds[:-1]):
        out = Binop("&", p, out)
    return out


NEGATED = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


# ---------------------------------------------------------------- lvalues


@dataclass(frozen=True)
class LVar:
    name: str


@dataclass(frozen=True)
class LField:
    base: "LValue"
    name: str


@dataclass(frozen=True)
class LSlice:
    base: "LValue"
    hi: int
    lo: int


LValue = Union[LVar, LField, LSlice]


def lval_path(lv: LValue) -> tuple[str, tuple[int, int] | None]:
    """Split an lvalue into its dotted variable path and an optional bit range.

    Nested slices compose: ``x[7:2][3:1]`` addresses bits 5..3 of ``x``.
    """
    if isinstance(lv, LVar):
        return lv.name, None
    if isinstance(lv, LField):
        base, rng = lval_path(lv.base)
        if rng is not None:
            raise ValueError("field access on a slice")
        return f"{base}.{lv.name}", None
    base, rng = lval_path(lv.base)
    off = rng[1] if rng else 0
    return base, (lv.hi + off, lv.lo + off)


def lval_root(lv: LValue) -> str:
    while not isinstance(lv, LVar):
        lv = lv.base
    return lv.name


def expr_to_lval(e: Expr) -> LValue | None:
    if isinstance(e, Var):
        return LVar(e.name)
    if isinstance(e, Field):
        base = expr_to_lval(e.base)
        return None if base is None or isinstance(base, LSlice) else LField(base, e.name)
    if isinstance(e, SliceE):
        base = expr_to_lval(e.base)
        return None if base is None else LSlice(base, e.hi, e.lo)
    return None


def lval_to_expr(lv: LValue) -> Expr:
    if isinstance(lv, LVar):
        return Var(lv.name)
    if isinstance(lv, LField):
        return Field(lval_to_expr(lv.base), lv.name)
    return SliceE(lval_to_expr(lv.base), lv.hi, lv.lo)


def path_to_lval(path: str) -> LValue:
    parts = path.split(".")
    lv: LValue = LVar(parts[0])
    for p in parts[1:]:
        lv = LField(lv, p)
    return lv


# ---------------------------------------------------------------- statements


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    lhs: LValue
    rhs: Expr


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    orelse: "Stmt"


@dataclass(frozen=True)
class Apply:
    table: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Transition:
    scrutinee: Expr
    arms: tuple[tuple[Bits, str], ...]
    default: str


Stmt = Union[Skip, Assign, Seq, If, Apply, Call, Transition]

GOTO_SCRUTINEE = Const(Bits(1, 0))


def goto(state: str) -> Transition:
    """Unconditional ``transition st;``."""
    return Transition(GOTO_SCRUTINEE, (), state)


def seq(*stmts: Stmt) -> Stmt:
    """Right-nested sequence with nested sequences flattened (canonical form)."""
    flat: list[Stmt] = []
    for s in stmts:
        flat.extend(flatten_seq(s))
    if not flat:
        return Skip()
    out = flat[-1]
    for s in reversed(flat[:-1]):
        out = Seq(s, out)
    return out


def flatten_seq(s: Stmt) -> list[Stmt]:
    if isinstance(s, Seq):
        return flatten_seq(s.first) + flatten_seq(s.second)
    return [s]


# ---------------------------------------------------------------- declarations


class Direction(enum.Enum):
    IN = "in"
    OUT = "out"
    INOUT = "inout"
    NONE = "none"

    @property
    def is_out(self) -> bool:
        return self in (Direction.OUT, Direction.INOUT)


# a type reference is a bit width or the name of a declared header/struct
TypeRef = Union[int, str]


@dataclass(frozen=True)
class Param:
    name: str
    direction: Direction
    type: TypeRef


@dataclass(frozen=True)
class TypeDecl:
    name: str
    fields: tuple[tuple[str, TypeRef], ...]
    is_header: bool


@dataclass(frozen=True)
class GlobalDecl:
    name: str
    type: TypeRef


@dataclass(frozen=True)
class FuncDecl:
    name: str
    params: tuple[Param, ...]
    body: Stmt
    is_action: bool = False


@dataclass(frozen=True)
class ExternDecl:
    name: str
    params: tuple[Param, ...]


@dataclass(frozen=True)
class TableDecl:
    name: str
    keys: tuple[Expr, ...]
    actions: tuple[str, ...]


@dataclass(frozen=True)
class StateDecl:
    name: str
    body: Stmt


Decl = Union[TypeDecl, GlobalDecl, FuncDecl, ExternDecl, TableDecl, StateDecl]

# A shape is a bit width or an ordered tuple of (field, shape).
Shape = Union[int, tuple]


class Program:
    """Declarations plus entry statement; lookup tables are derived on construction."""

    def __init__(self, decls: tuple[Decl, ...] | list[Decl], entry: Stmt):
        self.decls = tuple(decls)
        self.entry = entry
        self.types: dict[str, TypeDecl] = {}
        self.globals: dict[str, TypeRef] = {}
        self.funcs: dict[str, FuncDecl] = {}
        self.externs: dict[str, ExternDecl] = {}
        self.tables: dict[str, TableDecl] = {}
        self.states: dict[str, Stmt] = {}
        self.duplicates: list[str] = []
        for d in self.decls:
            table, name = self._slot(d)
            if name in table:
                self.duplicates.append(name)
            table[name] = d.type if isinstance(d, GlobalDecl) else (d.body if isinstance(d, StateDecl) else d)
        if self.uses_reject() and REJECTED not in self.globals:
            self.globals[REJECTED] = 1

    def _slot(self, d: Decl):
        if isinstance(d, TypeDecl):
            return self.types, d.name
        if isinstance(d, GlobalDecl):
            return self.globals, d.name
        if isinstance(d, FuncDecl):
            return self.funcs, d.name
        if isinstance(d, ExternDecl):
            return self.externs, d.name
        if isinstance(d, TableDecl):
            return self.tables, d.name
        return self.states, d.name

    def __eq__(self, other):
        return isinstance(other, Program) and self.decls == other.decls and self.entry == other.entry

    def __hash__(self):
        return hash((self.decls, self.entry))

    def uses_reject(self) -> bool:
        bodies = [self.entry] + [d.body for d in self.decls if isinstance(d, (FuncDecl, StateDecl))]
        return any(
            isinstance(s, Transition) and ("reject" == s.default or any(t == "reject" for _, t in s.arms))
            for b in bodies
            for s in walk_stmts(b)
        )

    # -- shapes

    def shape(self, t: TypeRef) -> Shape:
        if isinstance(t, int):
            return t
        decl = self.types[t]
        fields = tuple((n, self.shape(ft)) for n, ft in decl.fields)
        if decl.is_header:
            fields = fields + ((VALID, 1),)
        return fields

    def state_body(self, name: str) -> Stmt:
        if name == "accept":
            return Skip()
        if name == "reject":
            return Assign(LVar(REJECTED), Const(Bits(1, 1)))
        return self.states[name]

    def global_layout(self) -> dict[str, int]:
        """Leaf path -> width for every global, in declaration order."""
        out: dict[str, int] = {}
        for name, t in self.globals.items():
            out.update(leaves(name, self.shape(t)))
        return out

    def header_prefixes(self) -> list[str]:
        """Dotted paths of every header-typed location among the globals."""
        out: list[str] = []

        def go(prefix: str, t: TypeRef):
            if isinstance(t, int):
                return
            decl = self.types[t]
            if decl.is_header:
                out.append(prefix)
            for n, ft in decl.fields:
                go(f"{prefix}.{n}", ft)

        for name, t in self.globals.items():
            go(name, t)
        return out


def leaves(prefix: str, shape: Shape) -> dict[str, int]:
    if isinstance(shape, int):
        return {prefix: shape}
    out: dict[str, int] = {}
    for n, s in shape:
        out.update(leaves(f"{prefix}.{n}", s))
    return out


def shape_width(shape: Shape) -> int:
    if isinstance(shape, int):
        return shape
    return sum(shape_width(s) for _, s in shape)


def sub_shape(shape: Shape, fields: list[str]) -> Shape:
    for f in fields:
        if isinstance(shape, int):
            raise KeyError(f)
        shape = dict(shape)[f]
    return shape


# ---------------------------------------------------------------- traversals


def walk_stmts(s: Stmt) -> Iterator[Stmt]:
    yield s
    if isinstance(s, Seq):
        yield from walk_stmts(s.first)
        yield from walk_stmts(s.second)
    elif isinstance(s, If):
        yield from walk_stmts(s.then)
        yield from walk_stmts(s.orelse)


def walk_exprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Unop):
        yield from walk_exprs(e.arg)
    elif isinstance(e, (Binop, Cmp)):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)
    elif isinstance(e, (Field, SliceE)):
        yield from walk_exprs(e.base)
    elif isinstance(e, RecordE):
        for _, x in e.fields:
            yield from walk_exprs(x)


def stmt_exprs(s: Stmt) -> Iterator[Expr]:
    """Top-level expressions appearing directly in a (non-compound) statement."""
    if isinstance(s, Assign):
        yield lval_to_expr(s.lhs)
        yield s.rhs
    elif isinstance(s, If):
        yield s.cond
    elif isinstance(s, Call):
        yield from s.args
    elif isinstance(s, Transition):
        yield s.scrutinee


def lvalues_of(s: Stmt) -> set[LValue]:
    """Every lvalue syntactically read or written by ``s``."""
    out: set[LValue] = set()

    def from_expr(e: Expr):
        lv = expr_to_lval(e)
        if lv is not None:
            out.add(lv)
            return
        if isinstance(e, Unop):
            from_expr(e.arg)
        elif isinstance(e, (Binop, Cmp)):
            from_expr(e.left)
            from_expr(e.right)
        elif isinstance(e, (Field, SliceE)):
            from_expr(e.base)
        elif isinstance(e, RecordE):
            for _, x in e.fields:
                from_expr(x)

    for st in walk_stmts(s):
        if isinstance(st, Assign):
            out.add(st.lhs)
            from_expr(st.rhs)
        else:
            for e in stmt_exprs(st):
                from_expr(e)
    return out


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Diagnostic:
    category: str
    message: str
    location: str

    def __str__(self) -> str:
        return f"{self.location}: {self.category}: {self.message}"


class _Invalid(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def expr_shape(prog: Program, scope: dict[str, Shape], e: Expr) -> Shape:
    """Shape of ``e`` under the variable shapes in ``scope``; raises on ill-formed input."""
    if isinstance(e, Const):
        return _value_shape(e.value)
    if isinstance(e, Var):
        if e.name not in scope:
            raise _Invalid("undeclared-name", f"unknown variable {e.name}")
        return scope[e.name]
    if isinstance(e, Field):
        base = expr_shape(prog, scope, e.base)
        if isinstance(base, int) or e.name not in dict(base):
            raise _Invalid("undeclared-name", f"no field {e.name}")
        return dict(base)[e.name]
    if isinstance(e, SliceE):
        base = expr_shape(prog, scope, e.base)
        if not isinstance(base, int):
            raise _Invalid("width-mismatch", "slice of a record")
        if not 0 <= e.lo <= e.hi < base:
            raise _Invalid("slice-out-of-bounds", f"[{e.hi}:{e.lo}] on a {base}-bit value")
        return e.hi - e.lo + 1
    if isinstance(e, Unop):
        if e.op not in UNOPS:
            raise _Invalid("width-mismatch", f"unknown operator {e.op}")
        w = expr_shape(prog, scope, e.arg)
        if not isinstance(w, int):
            raise _Invalid("width-mismatch", "operator applied to a record")
        return 1 if e.op == "lognot" else w
    if isinstance(e, (Binop, Cmp)):
        if e.op not in (BINOPS if isinstance(e, Binop) else CMPOPS):
            raise _Invalid("width-mismatch", f"unknown operator {e.op}")
        a = expr_shape(prog, scope, e.left)
        b = expr_shape(prog, scope, e.right)
        if not isinstance(a, int) or a != b:
            raise _Invalid("width-mismatch", f"operands of {e.op} have shapes {a} and {b}")
        return 1 if isinstance(e, Cmp) else a
    if isinstance(e, RecordE):
        names = [n for n, _ in e.fields]
        if len(set(names)) != len(names):
            raise _Invalid("width-mismatch", "duplicate record field")
        return tuple((n, expr_shape(prog, scope, x)) for n, x in e.fields)
    raise _Invalid("width-mismatch", f"unknown expression {e!r}")


def _value_shape(v: Value) -> Shape:
    if isinstance(v, Bits):
        return v.width
    return tuple((n, _value_shape(x)) for n, x in v.fields)


def validate_program(prog: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def report(loc: str, cat: str, msg: str):
        diags.append(Diagnostic(cat, msg, loc))

    for name in prog.duplicates:
        report(name, "duplicate-name", f"{name} declared more than once")
    spaces = [set(prog.funcs), set(prog.externs), set(prog.tables)]
    for i in range(3):
        for j in range(i + 1, 3):
            for n in sorted(spaces[i] & spaces[j]):
                report(n, "duplicate-name", f"{n} names two different kinds of declaration")

    # types
    def check_typeref(loc: str, t: TypeRef, seen=()):
        if isinstance(t, int):
            if t < 1:
                report(loc, "width-mismatch", f"bit<{t}> is not a valid width")
            return
        if t not in prog.types:
            report(loc, "undeclared-name", f"unknown type {t}")
            return
        if t in seen:
            report(loc, "recursion", f"type {t} contains itself")
            return
        for _, ft in prog.types[t].fields:
            check_typeref(loc, ft, seen + (t,))

    for d in prog.decls:
        if isinstance(d, TypeDecl):
            for _, ft in d.fields:
                check_typeref(d.name, ft)
        elif isinstance(d, GlobalDecl):
            check_typeref(d.name, d.type)
        elif isinstance(d, (FuncDecl, ExternDecl)):
            for p in d.params:
                check_typeref(d.name, p.type)
                if p.name in prog.globals:
                    report(d.name, "duplicate-name", f"parameter {p.name} shadows a global")
                if isinstance(d, FuncDecl) and d.is_action != (p.direction == Direction.NONE):
                    report(d.name, "bad-argument", f"parameter {p.name} has the wrong direction kind")
    if diags:
        return diags

    gscope = {n: prog.shape(t) for n, t in prog.globals.items()}

    def shape_or_report(loc, scope, e) -> Shape | None:
        try:
            return expr_shape(prog, scope, e)
        except _Invalid as exc:
            report(loc, exc.category, str(exc))
            return None

    def check_stmt(loc: str, scope: dict[str, Shape], s: Stmt):
        for st in walk_stmts(s):
            if isinstance(st, Assign):
                lhs = shape_or_report(loc, scope, lval_to_expr(st.lhs))
                rhs = shape_or_report(loc, scope, st.rhs)
                if lhs is not None and rhs is not None and lhs != rhs:
                    report(loc, "width-mismatch", f"assigning {rhs} to {lhs}")
            elif isinstance(st, If):
                c = shape_or_report(loc, scope, st.cond)
                if c is not None and c != 1:
                    report(loc, "width-mismatch", "condition must be 1 bit wide")
            elif isinstance(st, Apply):
                if st.table not in prog.tables:
                    report(loc, "undeclared-name", f"unknown table {st.table}")
            elif isinstance(st, Call):
                check_call(loc, scope, st)
            elif isinstance(st, Transition):
                w = shape_or_report(loc, scope, st.scrutinee)
                targets = [t for _, t in st.arms] + [st.default]
                for t in targets:
                    if t not in prog.states and t not in ("accept", "reject"):
                        report(loc, "undeclared-name", f"unknown parser state {t}")
                vals = [v.value for v, _ in st.arms]
                if len(set(vals)) != len(vals):
                    report(loc, "width-mismatch", "duplicate select value")
                if w is not None and any(v.width != w for v, _ in st.arms):
                    report(loc, "width-mismatch", "select value width differs from the scrutinee")

    def check_call(loc: str, scope, st: Call):
        decl = prog.funcs.get(st.name) or prog.externs.get(st.name)
        if decl is None:
            report(loc, "undeclared-name", f"unknown function {st.name}")
            return
        if len(st.args) != len(decl.params):
            report(loc, "bad-argument", f"{st.name} expects {len(decl.params)} arguments")
            return
        for p, a in zip(decl.params, st.args):
            sh = shape_or_report(loc, scope, a)
            if sh is not None and sh != prog.shape(p.type):
                report(loc, "width-mismatch", f"argument for {p.name} has shape {sh}")
            if p.direction.is_out and expr_to_lval(a) is None:
                report(loc, "bad-argument", f"argument for {p.direction.value} parameter {p.name} is not an lvalue")

    for d in prog.decls:
        if isinstance(d, FuncDecl):
            scope = dict(gscope)
            scope.update({p.name: prog.shape(p.type) for p in d.params})
            check_stmt(d.name, scope, d.body)
        elif isinstance(d, StateDecl):
            if d.name in ("accept", "reject"):
                report(d.name, "duplicate-name", "accept and reject are reserved")
            check_stmt(d.name, gscope, d.body)
        elif isinstance(d, TableDecl):
            for k in d.keys:
                sh = shape_or_report(d.name, gscope, k)
                if sh is not None and not isinstance(sh, int):
                    report(d.name, "width-mismatch", "table keys must be bitvectors")
            for a in d.actions:
                if a not in prog.funcs or not prog.funcs[a].is_action:
                    report(d.name, "undeclared-name", f"unknown action {a}")
    check_stmt("entry", gscope, prog.entry)

    # call graph must be acyclic
    edges: dict[str, set[str]] = {}

    def callees(s: Stmt) -> set[str]:
        out = set()
        for st in walk_stmts(s):
            if isinstance(st, Call) and st.name in prog.funcs:
                out.add("f:" + st.name)
            elif isinstance(st, Apply) and st.table in prog.tables:
                out.add("t:" + st.table)
            elif isinstance(st, Transition):
                out |= {"s:" + t for _, t in st.arms} | {"s:" + st.default}
        return out

    for n, f in prog.funcs.items():
        edges["f:" + n] = callees(f.body)
    for n, body in prog.states.items():
        edges["s:" + n] = callees(body)
    for n, t in prog.tables.items():
        edges["t:" + n] = {"f:" + a for a in t.actions}
    state: dict[str, int] = {}

    def dfs(node: str, stack: list[str]):
        state[node] = 1
        for nxt in sorted(edges.get(node, ())):
            if state.get(nxt) == 1:
                report(nxt[2:], "recursion", " -> ".join(x[2:] for x in stack + [node, nxt]))
            elif nxt not in state:
                dfs(nxt, stack + [node])
        state[node] = 2

    for node in sorted(edges):
        if node not in state:
            dfs(node, [])
    return diags
