"""Path-sensitive security typing of statements.

``Typer.type_stmt(pc, gamma, s)`` returns the ordered list of final state
types (the set Γ, deduplicated, in first-seen order). Paths whose state type
is empty are pruned under a LOW context and traversed under a HIGH one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .abstract_domain import (
    LOW,
    AnalysisError,
    BvType,
    Label,
    RecType,
    Type,
    const_type,
    lbl,
    lub,
    raise_to,
    type_binop,
    type_slice,
    type_unop,
)
from .lang_ast import (
    Apply,
    Assign,
    Binop,
    Call,
    Cmp,
    Const,
    Expr,
    Field,
    FuncDecl,
    If,
    LVar,
    Param,
    Program,
    RecordE,
    Seq,
    Skip,
    SliceE,
    Stmt,
    Transition,
    Unop,
    Var,
    conj,
    expr_to_lval,
)
from .state_types import (
    StateType,
    first_label_violation,
    flatten_type,
    gamma_concat,
    gamma_get,
    gamma_update,
    is_empty,
    join_set,
    raise_entries,
    refine,
)

if TYPE_CHECKING:
    from .policy import Contracts


class GammaLimit(AnalysisError):
    """The number of state types on some path exceeded the configured cap."""


class ContractError(AnalysisError):
    """A contract is missing or its precondition does not hold at a call site."""


@dataclass(frozen=True)
class AnalyzerConfig:
    max_gammas: int = 4096
    # the switches below exist for mutation testing; all True is the analysis
    join_on_high: bool = True
    traverse_empty_high: bool = True
    raise_to_pc: bool = True


class _GammaSet:
    """Insertion-ordered set of state types with a size cap."""

    def __init__(self, cap: int):
        self.cap = cap
        self.items: dict[StateType, None] = {}

    def add_all(self, gammas: Iterable[StateType]) -> None:
        for g in gammas:
            self.items[g] = None
        if len(self.items) > self.cap:
            raise GammaLimit(f"more than {self.cap} state types")

    def to_list(self) -> list[StateType]:
        return list(self.items)


def _dedup(gammas: Iterable[StateType]) -> list[StateType]:
    return list(dict.fromkeys(gammas))


# ---------------------------------------------------------------- expressions


def type_expr(gamma: StateType, e: Expr) -> Type:
    if isinstance(e, Const):
        return const_type(e.value)
    lv = expr_to_lval(e)
    if lv is not None:
        return gamma_get(gamma, lv)
    if isinstance(e, Binop) or isinstance(e, Cmp):
        return type_binop(e.op, _bv(type_expr(gamma, e.left)), _bv(type_expr(gamma, e.right)))
    if isinstance(e, Unop):
        return type_unop(e.op, _bv(type_expr(gamma, e.arg)))
    if isinstance(e, SliceE):
        return type_slice(_bv(type_expr(gamma, e.base)), e.hi, e.lo)
    if isinstance(e, Field):
        base = type_expr(gamma, e.base)
        if not isinstance(base, RecType):
            raise AnalysisError(f"field {e.name} of a bitvector")
        return base.get(e.name)
    if isinstance(e, RecordE):
        return RecType(tuple((n, type_expr(gamma, x)) for n, x in e.fields))
    if isinstance(e, Var):
        raise AnalysisError(f"unknown variable {e.name}")
    raise AnalysisError(f"cannot type expression {e!r}")


def _bv(t: Type) -> BvType:
    if not isinstance(t, BvType):
        raise AnalysisError("record used as a bitvector operand")
    return t


def join_on_high(gammas: Sequence[StateType], label: Label, config: AnalyzerConfig | None = None) -> list[StateType]:
    """Label-join every element against all others when ``label`` is HIGH.

    Callers pass the branch context ``pc ⊔ ℓ``. Under a HIGH pc this joins the
    arms of LOW branches too; the enclosing HIGH branch would join them anyway,
    so whole-program results are unchanged, but every intermediate Γ typed at
    HIGH pc then frames the variables that some arm may modify.
    """
    if label == LOW or (config is not None and not config.join_on_high):
        return list(gammas)
    return _dedup(join_set(gammas))


# ---------------------------------------------------------------- statements


class Typer:
    def __init__(self, prog: Program, contracts: "Contracts", config: AnalyzerConfig | None = None):
        self.prog = prog
        self.contracts = contracts
        self.config = config or AnalyzerConfig()

    def _set(self) -> _GammaSet:
        return _GammaSet(self.config.max_gammas)

    def type_stmt(self, pc: Label, gamma: StateType, s: Stmt) -> list[StateType]:
        if is_empty(gamma) and (pc == LOW or not self.config.traverse_empty_high):
            return []
        if isinstance(s, Skip):
            return [gamma]
        if isinstance(s, Assign):
            t = type_expr(gamma, s.rhs)
            if self.config.raise_to_pc:
                t = raise_to(t, pc)
            return [gamma_update(gamma, s.lhs, t)]
        if isinstance(s, Seq):
            out = self._set()
            for g in self.type_stmt(pc, gamma, s.first):
                out.add_all(self.type_stmt(pc, g, s.second))
            return out.to_list()
        if isinstance(s, If):
            label = lbl(type_expr(gamma, s.cond))
            inner = pc | label
            out = self._set()
            out.add_all(self.type_stmt(inner, refine(gamma, s.cond), s.then))
            out.add_all(self.type_stmt(inner, refine(gamma, Unop("lognot", s.cond)), s.orelse))
            return join_on_high(out.to_list(), inner, self.config)
        if isinstance(s, Transition):
            return self._transition(pc, gamma, s)
        if isinstance(s, Call):
            if s.name in self.prog.funcs:
                decl = self.prog.funcs[s.name]
                argtypes = [type_expr(gamma, a) for a in s.args]
                return self.t_call(pc, decl, argtypes, gamma, s.args)
            if s.name in self.prog.externs:
                return self._extern(pc, gamma, s)
            raise AnalysisError(f"unknown callee {s.name}")
        if isinstance(s, Apply):
            return self._apply(pc, gamma, s.table)
        raise AnalysisError(f"cannot type statement {s!r}")

    def _transition(self, pc: Label, gamma: StateType, s: Transition) -> list[StateType]:
        label = lbl(type_expr(gamma, s.scrutinee))
        inner = pc | label
        out = self._set()
        misses: list[Expr] = []
        for v, st in s.arms:
            hit = Cmp("==", s.scrutinee, Const(v))
            out.add_all(self.type_stmt(inner, refine(gamma, conj(hit, *misses)), self.prog.state_body(st)))
            misses.append(Cmp("!=", s.scrutinee, Const(v)))
        out.add_all(self.type_stmt(inner, refine(gamma, conj(*misses)), self.prog.state_body(s.default)))
        return join_on_high(out.to_list(), inner, self.config)

    def t_call(
        self,
        pc: Label,
        decl: FuncDecl,
        argtypes: Sequence[Type],
        gamma: StateType,
        args: Sequence[Expr] | None,
    ) -> list[StateType]:
        """Copy in ``argtypes``, type the body, copy out the out-capable parameters.

        ``args`` is None for actions invoked by a table (no copy-out).
        """
        callee = StateType(gamma.g, _param_locals(decl.params, argtypes))
        out = self._set()
        for g in self.type_stmt(pc, callee, decl.body):
            out.add_all([self._copy_out(gamma, g, decl.params, args)])
        return out.to_list()

    def _copy_out(self, caller: StateType, final: StateType, params: Sequence[Param], args) -> StateType:
        res = StateType(final.g, caller.l)
        if args is None:
            return res
        for p, a in zip(params, args):
            if not p.direction.is_out:
                continue
            lv = expr_to_lval(a)
            if lv is None:
                raise AnalysisError(f"argument for {p.name} is not an lvalue")
            res = gamma_update(res, lv, gamma_get(final, LVar(p.name)))
        return res

    def _apply(self, pc: Label, gamma: StateType, name: str) -> list[StateType]:
        decl = self.prog.tables[name]
        contract = self.contracts.tables.get(name)
        if contract is None:
            raise ContractError(f"no contract for table {name}")
        label = lub(lbl(type_expr(gamma, k)) for k in decl.keys)
        inner = pc | label
        out = self._set()
        for row in contract.rows:
            action = self.prog.funcs[row.action]
            out.add_all(self.t_call(inner, action, row.argtypes, refine(gamma, row.phi), None))
        return join_on_high(out.to_list(), inner, self.config)

    def _extern(self, pc: Label, gamma: StateType, s: Call) -> list[StateType]:
        decl = self.prog.externs[s.name]
        contract = self.contracts.externs.get(s.name)
        if contract is None:
            raise ContractError(f"no contract for extern {s.name}")
        argtypes = [type_expr(gamma, a) for a in s.args]
        callee = StateType(gamma.g, _param_locals(decl.params, argtypes))
        for i, tup in enumerate(contract.tuples):
            bad = first_label_violation(callee, tup.pre)
            if bad is not None:
                raise ContractError(f"{s.name}: call site violates the precondition of case {i} at {bad}")
        out = self._set()
        for tup in contract.tuples:
            g = refine(callee, tup.phi)
            # an unsatisfiable case is dropped only under a LOW context
            if is_empty(g) and pc == LOW:
                continue
            g = gamma_concat(g, raise_entries(tup.post, pc))
            out.add_all([self._copy_out(gamma, g, decl.params, s.args)])
        return out.to_list()

    def analyze_case(self, gamma_in: StateType) -> list[StateType]:
        return self.type_stmt(LOW, gamma_in, self.prog.entry)


def _param_locals(params: Sequence[Param], argtypes: Sequence[Type]) -> dict[str, BvType]:
    out: dict[str, BvType] = {}
    for p, t in zip(params, argtypes):
        out.update(flatten_type(p.name, t))
    return out


def analyze_case(
    prog: Program, contracts: "Contracts", gamma_in: StateType, config: AnalyzerConfig | None = None
) -> list[StateType]:
    return Typer(prog, contracts, config).analyze_case(gamma_in)


__all__ = [
    "AnalyzerConfig",
    "ContractError",
    "GammaLimit",
    "Typer",
    "analyze_case",
    "join_on_high",
    "type_expr",
]
