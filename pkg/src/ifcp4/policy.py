"""Policies, contracts and the final security verdict."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

from .abstract_domain import (
    HIGH,
    LOW,
    AnalysisError,
    BvType,
    Interval,
    Slice,
    Type,
    lbl,
    lub,
    range_hull,
    type_width,
)
from .interp import eval_in
from .lang_ast import (
    REJECTED,
    VALID,
    Bits,
    Const,
    Diagnostic,
    Expr,
    LValue,
    Program,
    SliceE,
    Value,
    expr_shape,
    expr_to_lval,
    lval_path,
    lval_root,
    shape_width,
    _Invalid,
)
from .state_types import (
    StateType,
    first_label_violation,
    gamma_lub,
    intersects,
    is_empty,
    render_gamma,
)
from .typer import AnalyzerConfig, Typer

WARNING_CATEGORIES = frozenset({"non-exhaustive"})


# ---------------------------------------------------------------- policies


@dataclass(frozen=True)
class PolicyCase:
    name: str
    gamma: StateType


def make_case(prog: Program, name: str, entries: dict[str, BvType], is_input: bool) -> PolicyCase:
    """Total state type over the program globals.

    Unlisted leaves are full and LOW; in input cases the validity bits and
    the reject flag start at 0 (no header has been extracted yet).
    """
    layout = prog.global_layout()
    for path, t in entries.items():
        if path not in layout:
            raise ValueError(f"unknown lvalue {path}")
        if t.width != layout[path]:
            raise ValueError(f"{path} has {layout[path]} bits, the policy gives {t.width}")
    g: dict[str, BvType] = {}
    for path, w in layout.items():
        if path in entries:
            g[path] = entries[path]
        elif is_input and (path.endswith("." + VALID) or path == REJECTED):
            g[path] = BvType((Slice(Interval.single(0), LOW, w),))
        else:
            g[path] = BvType((Slice(Interval.full(w), LOW, w),))
    return PolicyCase(name, StateType(g))


# ---------------------------------------------------------------- contracts


@dataclass(frozen=True)
class TableRow:
    phi: Expr
    action: str
    argtypes: tuple[Type, ...]


@dataclass(frozen=True)
class TableContract:
    name: str
    keys: tuple[Expr, ...]
    rows: tuple[TableRow, ...]


@dataclass(frozen=True)
class ExternTuple:
    pre: tuple[tuple[LValue, Type], ...]
    phi: Expr
    post: tuple[tuple[LValue, Type], ...]


@dataclass(frozen=True)
class ExternImpl:
    """Executable stand-in: ``const`` writes a value inside each post type, ``copy`` copies src to dst."""

    kind: str = "const"
    src: LValue | None = None
    dst: LValue | None = None


@dataclass(frozen=True)
class ExternContract:
    name: str
    tuples: tuple[ExternTuple, ...]
    impl: ExternImpl = ExternImpl()


@dataclass(frozen=True)
class TableEntries:
    """Concrete control-plane rows: first guard that holds wins, else the default."""

    rows: tuple[tuple[Expr, str, tuple[Value, ...]], ...]
    default: tuple[str, tuple[Value, ...]]


@dataclass
class Contracts:
    tables: dict[str, TableContract] = field(default_factory=dict)
    externs: dict[str, ExternContract] = field(default_factory=dict)
    entries: dict[str, TableEntries] = field(default_factory=dict)


def substitute_keys(phi: Expr, keys: Sequence[Expr], values: Sequence[Bits]) -> Expr:
    """Replace every occurrence of a key expression by its value."""
    table = dict(zip(keys, values))

    def go(e: Expr) -> Expr:
        if e in table:
            return Const(table[e])
        if isinstance(e, SliceE):
            return SliceE(go(e.base), e.hi, e.lo)
        for attr in ("left", "right", "arg"):
            if hasattr(e, attr):
                e = replace(e, **{attr: go(getattr(e, attr))})
        return e

    return go(phi)


def eval_guard(phi: Expr, keys: Sequence[Expr], values: Sequence[Bits]) -> bool:
    return eval_in({}, {}, substitute_keys(phi, keys, values)).value == 1


def _mentions_only_keys(phi: Expr, keys: Sequence[Expr]) -> bool:
    stack = [phi]
    while stack:
        e = stack.pop()
        if e in keys:
            continue
        if expr_to_lval(e) is not None and not isinstance(e, SliceE):
            return False
        for attr in ("left", "right", "arg", "base"):
            if hasattr(e, attr):
                stack.append(getattr(e, attr))
    return True


def _type_shape_ok(prog: Program, param_type, t: Type) -> bool:
    return type_width(t) == shape_width(prog.shape(param_type))


def check_table_contract(c: TableContract, prog: Program, max_bits: int = 16) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    loc = f"table {c.name}"
    gscope = {n: prog.shape(t) for n, t in prog.globals.items()}
    for i, row in enumerate(c.rows):
        if row.action not in prog.funcs or not prog.funcs[row.action].is_action:
            diags.append(Diagnostic("undeclared-name", f"row {i}: unknown action {row.action}", loc))
            continue
        decl = prog.funcs[row.action]
        if len(row.argtypes) != len(decl.params):
            diags.append(Diagnostic("bad-argument", f"row {i}: {row.action} takes {len(decl.params)} arguments", loc))
            continue
        for p, t in zip(decl.params, row.argtypes):
            if not _type_shape_ok(prog, p.type, t):
                diags.append(Diagnostic("width-mismatch", f"row {i}: argument type for {p.name} has the wrong width", loc))
        try:
            if expr_shape(prog, gscope, row.phi) != 1:
                diags.append(Diagnostic("width-mismatch", f"row {i}: condition is not 1 bit wide", loc))
                continue
        except _Invalid as exc:
            diags.append(Diagnostic(exc.category, f"row {i}: {exc}", loc))
            continue
        if not _mentions_only_keys(row.phi, c.keys):
            diags.append(Diagnostic("bad-argument", f"row {i}: condition mentions something other than the keys", loc))
    if diags:
        return diags
    widths = [expr_shape(prog, gscope, k) for k in c.keys]
    if sum(widths) > max_bits:
        return diags
    for combo in itertools.product(*(range(1 << w) for w in widths)):
        values = [Bits(w, v) for w, v in zip(widths, combo)]
        if not any(eval_guard(r.phi, c.keys, values) for r in c.rows):
            shown = ", ".join(str(v.value) for v in values)
            diags.append(Diagnostic("non-exhaustive", f"no row matches key values ({shown})", loc))
            break
    return diags


def _overlaps(a: str, b: str) -> bool:
    return a == b or a.startswith(b + ".") or b.startswith(a + ".")


def check_extern_contract(c: ExternContract, prog: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    loc = f"extern {c.name}"
    if c.name not in prog.externs:
        return [Diagnostic("undeclared-name", f"unknown extern {c.name}", loc)]
    decl = prog.externs[c.name]
    if not c.tuples:
        diags.append(Diagnostic("bad-argument", "no cases: condition coverage impossible", loc))
    params = {p.name: p for p in decl.params}
    for i, tup in enumerate(c.tuples):
        for lv, _ in tup.pre + tup.post:
            root = lval_root(lv)
            if root not in prog.globals and root not in params:
                diags.append(Diagnostic("undeclared-name", f"case {i}: unknown variable {root}", loc))
        for lv, _ in tup.post:
            root = lval_root(lv)
            if root in params and not params[root].direction.is_out:
                diags.append(Diagnostic("bad-argument", f"case {i}: writes to {root}, which is not an out parameter", loc))
        # labels of the condition's variables, as bounded by the precondition;
        # variables the precondition does not mention may be HIGH
        cond_vars = [lval_path(lv)[0] for lv in _lvals(tup.phi)]
        labels = []
        for v in cond_vars:
            pre = [t for lv, t in tup.pre if _overlaps(lval_path(lv)[0], v)]
            labels.append(lub(lbl(t) for t in pre) if pre else HIGH)
        cond_label = lub(labels)
        post_min = min((min(s.label for s in _bv_slices(t)) for _, t in tup.post), default=HIGH)
        if not cond_label.leq(post_min):
            bad = next(v for v, l in zip(cond_vars, labels) if l == HIGH)
            diags.append(Diagnostic("bad-argument", f"case {i}: condition reads {bad}, which may be HIGH, but the effects include a LOW entry", loc))
    return diags


def _bv_slices(t: Type) -> list[Slice]:
    if isinstance(t, BvType):
        return list(t.slices)
    return [s for _, x in t.fields for s in _bv_slices(x)]


def _lvals(e: Expr) -> list[LValue]:
    out = []
    stack = [e]
    while stack:
        x = stack.pop()
        lv = expr_to_lval(x)
        if lv is not None:
            out.append(lv)
            continue
        for attr in ("left", "right", "arg", "base"):
            if hasattr(x, attr):
                stack.append(getattr(x, attr))
        if hasattr(x, "fields") and not isinstance(x, Const):
            stack.extend(v for _, v in x.fields)
    return out


def check_contracts(prog: Program, contracts: Contracts) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for name, t in contracts.tables.items():
        if name not in prog.tables:
            diags.append(Diagnostic("undeclared-name", f"unknown table {name}", f"table {name}"))
            continue
        diags.extend(check_table_contract(t, prog))
    for c in contracts.externs.values():
        diags.extend(check_extern_contract(c, prog))
    for name in prog.tables:
        if name not in contracts.tables:
            diags.append(Diagnostic("undeclared-name", f"table {name} has no contract", f"table {name}"))
    for name in prog.externs:
        if name not in contracts.externs:
            diags.append(Diagnostic("undeclared-name", f"extern {name} has no contract", f"extern {name}"))
    return diags


# ---------------------------------------------------------------- verdict


@dataclass(frozen=True)
class Witness:
    gamma1: StateType
    gamma2: StateType
    gamma_o: StateType
    leaf: str
    clause: int

    def render(self) -> str:
        why = "labels exceed the output case" if self.clause == 1 else "value may leave the output interval"
        return (
            f"leaf {self.leaf} ({why}, clause {self.clause})\n"
            f"  gamma1 = {render_gamma(self.gamma1)}\n"
            f"  gamma2 = {render_gamma(self.gamma2)}\n"
            f"  output = {render_gamma(self.gamma_o)}"
        )


def _clause2_leaf(g2: StateType, lub12: StateType, go: StateType) -> str | None:
    for k, to in go.items():
        t2 = g2.g[k] if k in g2.g else g2.l[k]
        labels = (lub12.g[k] if k in lub12.g else lub12.l[k]).bit_labels()
        for h, l, s in to.spans():
            if range_hull(t2, h, l).subset(s.interval):
                continue
            if all(x == LOW for x in labels[l:h + 1]):
                continue
            return k
    return None


def sufficient_condition(gammas: Sequence[StateType], outputs: Sequence[StateType]) -> Witness | None:
    """First pair of final state types and output case breaking the check, or None."""
    live = [g for g in gammas if not is_empty(g)]
    for go in outputs:
        hits = [intersects(g, go) for g in live]
        for i, g1 in enumerate(live):
            if not hits[i]:
                continue
            for j, g2 in enumerate(live):
                lub12 = gamma_lub(g1, g2)
                if hits[j]:
                    leaf = first_label_violation(lub12, go)
                    if leaf is not None:
                        return Witness(g1, g2, go, leaf, 1)
                leaf = _clause2_leaf(g2, lub12, go)
                if leaf is not None:
                    return Witness(g1, g2, go, leaf, 2)
    return None


@dataclass
class CaseResult:
    name: str
    gammas: list[StateType]
    witness: Witness | None = None
    output_case: str | None = None

    @property
    def secure(self) -> bool:
        return self.witness is None


@dataclass
class Verdict:
    cases: list[CaseResult] = field(default_factory=list)
    error: str | None = None

    @property
    def secure(self) -> bool:
        return self.error is None and all(c.secure for c in self.cases)

    @property
    def status(self) -> str:
        if self.error is not None:
            return "ERROR"
        return "SECURE" if self.secure else "INSECURE"

    def first_witness(self) -> tuple[CaseResult, Witness] | None:
        for c in self.cases:
            if c.witness is not None:
                return c, c.witness
        return None


def analyze(
    prog: Program,
    inputs: Sequence[PolicyCase],
    outputs: Sequence[PolicyCase],
    contracts: Contracts,
    config: AnalyzerConfig | None = None,
) -> Verdict:
    errors = [d for d in check_contracts(prog, contracts) if d.category not in WARNING_CATEGORIES]
    if errors:
        return Verdict(error="; ".join(str(d) for d in errors))
    typer = Typer(prog, contracts, config)
    verdict = Verdict()
    for case in inputs:
        try:
            gammas = typer.analyze_case(case.gamma)
        except AnalysisError as exc:
            return Verdict(cases=verdict.cases, error=f"{case.name}: {exc}")
        res = CaseResult(case.name, gammas)
        for out in outputs:
            w = sufficient_condition(gammas, [out.gamma])
            if w is not None:
                res.witness, res.output_case = w, out.name
                break
        verdict.cases.append(res)
    return verdict
