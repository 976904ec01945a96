"""Brute-force noninterference checking and differential testing of the analyzer.

States typed by an input case are enumerated group by group: a group fixes
every LOW bit and ranges over the HIGH bits, so two states are low
equivalent exactly when they share a group. Tables and externs are replaced
by seeded stand-ins built from their contracts, once per environment, so
that the two environments of a pair agree on everything LOW.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .abstract_domain import (
    HIGH,
    LOW,
    BvType,
    Interval,
    Slice,
    Type,
    bits_have_type,
    full_type,
)
from .interp import DynamicEnv, Machine, eval_in, read_path, write_lval
from .lang_ast import (
    Apply,
    Assign,
    Binop,
    Bits,
    Call,
    Cmp,
    Const,
    Direction,
    Expr,
    ExternDecl,
    FuncDecl,
    GlobalDecl,
    If,
    LSlice,
    LValue,
    LVar,
    Param,
    Program,
    Record,
    Skip,
    SliceE,
    StateDecl,
    Stmt,
    TableDecl,
    Transition,
    Unop,
    Value,
    Var,
    expr_shape,
    goto,
    lval_to_expr,
    lval_path,
    seq,
    validate_program,
)
from .policy import (
    Contracts,
    ExternContract,
    ExternTuple,
    PolicyCase,
    TableContract,
    TableRow,
    analyze,
    eval_guard,
)
from .state_types import StateType, low_mask
from .typer import AnalyzerConfig


class BudgetExceeded(Exception):
    pass


class ContractViolation(Exception):
    """A concrete stand-in run fell outside its contract (no matching row or case)."""


@dataclass(frozen=True)
class OracleConfig:
    # budget: at most 2**max_bits enumerated states per input case
    max_bits: int = 12
    max_programs: int = 500
    seed: int = 0
    env_pairs: int = 3

    def __post_init__(self):
        if self.max_bits > 20:
            raise ValueError("max_bits is capped at 20")


# ---------------------------------------------------------------- state enumeration


def _slice_parts(t: BvType, want) -> list[list[int]]:
    """Per-slice lists of shifted values for the slices whose label satisfies ``want``."""
    parts = []
    for h, l, s in t.spans():
        if want(s.label):
            parts.append([v << l for v in range(s.interval.lo, s.interval.hi + 1)])
    return parts


def _leaf_values(parts: list[list[int]]) -> list[int]:
    return [sum(c) for c in itertools.product(*parts)]


def state_count(gamma: StateType) -> int:
    n = 1
    for _, t in gamma.items():
        for s in t.slices:
            n *= s.interval.size()
    return n


def _check_budget(gamma: StateType, max_bits: int) -> None:
    if state_count(gamma) > 1 << max_bits:
        raise BudgetExceeded(f"{state_count(gamma)} states exceed the budget of 2^{max_bits}")


def low_groups(gamma: StateType) -> tuple[list[str], list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Leaf names, LOW parts per group, HIGH parts per member; a state is their bitwise or."""
    names = [k for k, _ in gamma.items()]
    types = [t for _, t in gamma.items()]
    lows = [_leaf_values(_slice_parts(t, lambda x: x == LOW)) for t in types]
    highs = [_leaf_values(_slice_parts(t, lambda x: x == HIGH)) for t in types]
    return names, list(itertools.product(*lows)), list(itertools.product(*highs))


def enumerate_states(gamma: StateType, max_bits: int = 20) -> Iterator[dict[str, Bits]]:
    """Every global state typed by ``gamma``, in a deterministic order."""
    _check_budget(gamma, max_bits)
    names, groups, members = low_groups(gamma)
    widths = [t.width for _, t in gamma.items()]
    for lo in groups:
        for hi in members:
            yield {n: Bits(w, a | b) for n, w, a, b in zip(names, widths, lo, hi)}


# ---------------------------------------------------------------- environments


def _pick(rng: random.Random, iv: Interval) -> int:
    return rng.randint(iv.lo, iv.hi)


def _sample(t: BvType, low_rng: random.Random, high_rngs: Sequence[random.Random], env: int) -> Bits:
    """A value of ``t``; LOW slices agree across environments, HIGH slices differ when they can."""
    v = 0
    for h, l, s in t.spans():
        if s.interval.is_empty:
            raise ContractViolation("empty interval in a contract type")
        if s.label == LOW:
            x = _pick(low_rng, s.interval)
        else:
            picks = [_pick(r, s.interval) for r in high_rngs]
            x = picks[env]
            if env == 1 and x == picks[0] and s.interval.size() > 1:
                x = s.interval.lo + (x - s.interval.lo + 1) % s.interval.size()
        v |= x << l
    return Bits(t.width, v)


def _sample_type(prog: Program, t: Type, rngs, env: int) -> Value:
    if isinstance(t, BvType):
        return _sample(t, rngs[0], rngs[1:], env)
    return Record(tuple((n, _sample_type(prog, x, rngs, env)) for n, x in t.fields))


class ContractTable:
    """Table stand-in: the first contract row whose condition holds, arguments drawn from its types."""

    def __init__(self, prog: Program, contract: TableContract, seed: int, env: int):
        self.prog = prog
        self.contract = contract
        self.seed = seed
        self.env = env

    def lookup(self, keys: tuple[Bits, ...]):
        for i, row in enumerate(self.contract.rows):
            if eval_guard(row.phi, self.contract.keys, keys):
                tag = f"{self.seed}|{self.contract.name}|{i}|{[k.value for k in keys]}"
                rngs = [random.Random(f"{tag}|low")] + [random.Random(f"{tag}|high{e}") for e in (0, 1)]
                return row.action, tuple(_sample_type(self.prog, t, rngs, self.env) for t in row.argtypes)
        raise ContractViolation(f"no row of {self.contract.name} matches keys {[k.value for k in keys]}")


class EntryTable:
    """Table stand-in from explicit control-plane entries."""

    def __init__(self, keys: Sequence[Expr], entries):
        self.keys = tuple(keys)
        self.entries = entries

    def lookup(self, keys: tuple[Bits, ...]):
        for guard, action, args in self.entries.rows:
            if eval_guard(guard, self.keys, keys):
                return action, args
        return self.entries.default


def _entries_typed(entries: Sequence[tuple[LValue, Type]], g: dict, l: dict) -> LValue | None:
    for lv, t in entries:
        path, rng = lval_path(lv)
        v = read_path(g, l, path)
        if isinstance(v, Bits):
            if rng is not None:
                v = v.slice(*rng)
            if not bits_have_type(v.value, t):
                return lv
    return None


def _cond_holds(phi: Expr, g: dict, l: dict) -> bool:
    return eval_in(g, l, phi).value == 1


class ExternStandIn:
    """Executable extern built from its contract.

    ``const`` writes, for the first case whose condition holds, a value of
    each effect type (LOW slices shared across environments). ``copy`` copies
    one lvalue to another. Either way the run is checked against the
    contract: the result must be typed by the matching case's effects and
    nothing outside their domain may change.
    """

    def __init__(self, prog: Program, contract: ExternContract, seed: int, env: int):
        self.prog = prog
        self.contract = contract
        self.seed = seed
        self.env = env

    def __call__(self, g: dict[str, Bits], l: dict[str, Bits]):
        before_g, before_l = dict(g), dict(l)
        for i, tup in enumerate(self.contract.tuples):
            if not _cond_holds(tup.phi, g, l):
                continue
            impl = self.contract.impl
            if impl.kind == "copy":
                write_lval(g, l, impl.dst, eval_in(g, l, lval_to_expr(impl.src)))
            else:
                for j, (lv, t) in enumerate(tup.post):
                    tag = f"{self.seed}|{self.contract.name}|{i}|{j}"
                    rngs = [random.Random(f"{tag}|low")] + [random.Random(f"{tag}|high{e}") for e in (0, 1)]
                    write_lval(g, l, lv, _sample_type(self.prog, t, rngs, self.env))
            bad = _entries_typed(tup.post, g, l)
            if bad is not None:
                raise ContractViolation(f"{self.contract.name}: result leaves the effect type at {lval_path(bad)[0]}")
            allowed = {lval_path(lv)[0] for lv, _ in tup.post}
            for scope, before in ((g, before_g), (l, before_l)):
                for k, v in scope.items():
                    if v != before[k] and not any(k == a or k.startswith(a + ".") for a in allowed):
                        raise ContractViolation(f"{self.contract.name}: modifies {k} outside its effects")
            return g, l
        raise ContractViolation(f"{self.contract.name}: no case condition holds")


@dataclass(frozen=True)
class EnvPair:
    seed: int
    e1: DynamicEnv
    e2: DynamicEnv


def instantiate_env(prog: Program, contracts: Contracts, seed: int, env: int) -> DynamicEnv:
    tables = {n: ContractTable(prog, c, seed, env) for n, c in contracts.tables.items()}
    externs = {n: ExternStandIn(prog, c, seed, env) for n, c in contracts.externs.items()}
    return DynamicEnv(tables, externs)


def instantiate_env_pair(prog: Program, contracts: Contracts, seed: int) -> EnvPair:
    return EnvPair(seed, instantiate_env(prog, contracts, seed, 0), instantiate_env(prog, contracts, seed, 1))


def envs_indistinguishable(prog: Program, contracts: Contracts, pair: EnvPair, samples: int = 64) -> bool:
    """Direct check of table indistinguishability on sampled key values.

    Same action for the same keys, and every argument bit that is LOW in the
    row's argument type equal in both environments.
    """
    rng = random.Random(pair.seed)
    for name, c in contracts.tables.items():
        widths = [_key_width(prog, k) for k in c.keys]
        for _ in range(samples):
            keys = tuple(Bits(w, rng.randrange(1 << w)) for w in widths)
            try:
                a1, v1 = pair.e1.tables[name].lookup(keys)
                a2, v2 = pair.e2.tables[name].lookup(keys)
            except ContractViolation:
                continue
            if a1 != a2:
                return False
            row = next(r for r in c.rows if eval_guard(r.phi, c.keys, keys))
            for t, x, y in zip(row.argtypes, v1, v2):
                if isinstance(t, BvType) and (x.value ^ y.value) & low_mask(t):
                    return False
    return True


def _key_width(prog: Program, k: Expr) -> int:
    return expr_shape(prog, {n: prog.shape(t) for n, t in prog.globals.items()}, k)


# ---------------------------------------------------------------- the oracle


@dataclass
class Counterexample:
    m1: dict[str, Bits]
    m2: dict[str, Bits]
    out1: dict[str, Bits]
    out2: dict[str, Bits]
    env_seed: int | None
    clause: str  # "typing" or "equality"

    def render(self) -> str:
        def show(m):
            return ", ".join(f"{k}={v.value}" for k, v in m.items())

        env = "" if self.env_seed is None else f" (environment seed {self.env_seed})"
        return (
            f"violated clause: {self.clause}{env}\n"
            f"  m1 = {show(self.m1)}\n  m2 = {show(self.m2)}\n"
            f"  m1' = {show(self.out1)}\n  m2' = {show(self.out2)}"
        )

    def replay(self, prog: Program, contracts: Contracts, gamma_o: StateType) -> bool:
        """Re-run both executions and confirm the violation."""
        if self.env_seed is None:
            e1 = e2 = DynamicEnv()
        else:
            pair = instantiate_env_pair(prog, contracts, self.env_seed)
            e1, e2 = pair.e1, pair.e2
        o1 = _run(prog, e1, self.m1)
        o2 = _run(prog, e2, self.m2)
        if not _typed(gamma_o, o1):
            return False
        if not _typed(gamma_o, o2):
            return True
        return _low_key(gamma_o, o1) != _low_key(gamma_o, o2)


def _run(prog: Program, env: DynamicEnv, m: dict[str, Bits]) -> dict[str, Bits]:
    g = dict(m)
    Machine(prog, env).run(prog.entry, g, {})
    return g


def _typed(gamma: StateType, g: dict[str, Bits]) -> bool:
    return all(bits_have_type(g[k].value, t) for k, t in gamma.g.items())


def _low_key(gamma: StateType, g: dict[str, Bits]) -> tuple[int, ...]:
    return tuple(g[k].value & low_mask(t) for k, t in gamma.g.items())


def _needs_envs(prog: Program) -> bool:
    return bool(prog.tables or prog.externs)


def noninterference_oracle(
    prog: Program,
    gamma_i: StateType,
    gamma_o: StateType,
    contracts: Contracts | None = None,
    config: OracleConfig | None = None,
) -> Counterexample | None:
    """First violation of noninterference for one input and one output case, or None."""
    config = config or OracleConfig()
    contracts = contracts or Contracts()
    _check_budget(gamma_i, config.max_bits)
    names, groups, members = low_groups(gamma_i)
    widths = [t.width for _, t in gamma_i.items()]
    if _needs_envs(prog):
        pairs = [(config.seed + k, instantiate_env_pair(prog, contracts, config.seed + k)) for k in range(config.env_pairs)]
    else:
        pairs = [(None, None)]
    out_leaves = list(gamma_o.g.items())
    masks = [low_mask(t) for _, t in out_leaves]

    def observe(g):
        for (k, t) in out_leaves:
            if not bits_have_type(g[k].value, t):
                return None
        return tuple(g[k].value & m for (k, _), m in zip(out_leaves, masks))

    for seed, pair in pairs:
        e1 = DynamicEnv() if pair is None else pair.e1
        e2 = e1 if pair is None else pair.e2
        m1_run, m2_run = Machine(prog, e1), Machine(prog, e2)
        for lo in groups:
            states = [{n: Bits(w, a | b) for n, w, a, b in zip(names, widths, lo, hi)} for hi in members]
            outs1 = []
            for m in states:
                g = dict(m)
                m1_run.run(prog.entry, g, {})
                outs1.append(g)
            obs1 = [observe(g) for g in outs1]
            seen = [o for o in obs1 if o is not None]
            if not seen:
                continue
            if e2 is e1:
                outs2, obs2 = outs1, obs1
            else:
                outs2 = []
                for m in states:
                    g = dict(m)
                    m2_run.run(prog.entry, g, {})
                    outs2.append(g)
                obs2 = [observe(g) for g in outs2]
            target = seen[0]
            if all(o == target for o in seen) and all(o == target for o in obs2):
                continue
            i1 = next(i for i, o in enumerate(obs1) if o is not None)
            for j, o in enumerate(obs2):
                if o != obs1[i1]:
                    clause = "typing" if o is None else "equality"
                    return Counterexample(states[i1], states[j], outs1[i1], outs2[j], seed, clause)
            # every E2 observation equals obs1[i1]; some other E1 observation differs
            i2 = next(i for i, o in enumerate(obs1) if o is not None and o != obs1[i1])
            return Counterexample(states[i2], states[i1], outs1[i2], outs2[i1], seed, "equality")
    return None


def abstraction_violation(
    prog: Program,
    gamma_i: StateType,
    finals: Sequence[StateType],
    env: DynamicEnv,
    max_bits: int = 12,
) -> dict[str, Bits] | None:
    """An input state whose final state no analyzer output types, or None."""
    finals = list(finals)
    run = Machine(prog, env)
    for m in enumerate_states(gamma_i, max_bits):
        g = dict(m)
        run.run(prog.entry, g, {})
        if not any(_typed(f, g) for f in finals):
            return m
    return None


# ---------------------------------------------------------------- random programs


@dataclass(frozen=True)
class Limits:
    max_vars: int = 3
    max_width: int = 4
    max_bits: int = 12
    max_depth: int = 4


@dataclass
class RandomCase:
    prog: Program
    contracts: Contracts
    inputs: list[PolicyCase]
    outputs: list[PolicyCase]


class _Gen:
    def __init__(self, seed: int, limits: Limits):
        self.rng = random.Random(f"program|{seed}")
        self.limits = limits

    def widths(self) -> list[int]:
        r = self.rng
        n = r.randint(1, self.limits.max_vars)
        out: list[int] = []
        for _ in range(n):
            w = r.randint(1, self.limits.max_width)
            if sum(out) + w > self.limits.max_bits:
                break
            out.append(w)
        return out or [1]

    def const(self, w: int) -> Const:
        return Const(Bits(w, self.rng.randrange(1 << w)), sized=False)

    def operand(self, scope: dict[str, int], w: int) -> Expr:
        r = self.rng
        same = [n for n, x in scope.items() if x == w]
        wider = [n for n, x in scope.items() if x > w]
        choices = ["const"] + ["var"] * 3 * bool(same) + ["slice"] * bool(wider)
        c = r.choice(choices)
        if c == "var":
            return Var(r.choice(same))
        if c == "slice":
            n = r.choice(wider)
            lo = r.randint(0, scope[n] - w)
            return SliceE(Var(n), lo + w - 1, lo)
        return self.const(w)

    def expr(self, scope: dict[str, int], w: int, depth: int = 0) -> Expr:
        r = self.rng
        k = r.random()
        if depth >= 2 or k < 0.5:
            return self.operand(scope, w)
        if k < 0.85:
            op = r.choice(["+", "-", "&", "|", "^"])
            return Binop(op, self.expr(scope, w, depth + 1), self.expr(scope, w, depth + 1))
        return Unop(r.choice(["neg", "bitnot"]), self.expr(scope, w, depth + 1))

    def cond(self, scope: dict[str, int]) -> Expr:
        r = self.rng
        n = r.choice(list(scope))
        w = scope[n]
        if w == 1 and r.random() < 0.3:
            return Var(n)
        left: Expr = Var(n)
        if w > 1 and r.random() < 0.3:
            lo = r.randint(0, w - 1)
            hi = r.randint(lo, w - 1)
            left, w = SliceE(Var(n), hi, lo), hi - lo + 1
        op = r.choice(["==", "!=", "<", "<=", ">", ">="])
        c = Cmp(op, left, self.operand(scope, w))
        if r.random() < 0.15:
            return Unop("lognot", c)
        return c

    def lval(self, scope: dict[str, int]) -> tuple[LValue, int]:
        r = self.rng
        n = r.choice(list(scope))
        w = scope[n]
        if w > 1 and r.random() < 0.25:
            lo = r.randint(0, w - 1)
            hi = r.randint(lo, w - 1)
            return LSlice(LVar(n), hi, lo), hi - lo + 1
        return LVar(n), w

    def stmt(self, scope: dict[str, int], depth: int, calls: list) -> Stmt:
        r = self.rng
        kinds = ["assign"] * 4 + ["if"] * 2 * (depth < self.limits.max_depth) + ["seq"] * (depth < self.limits.max_depth)
        kinds += ["call"] * 2 * bool(calls)
        k = r.choice(kinds)
        if k == "assign":
            lv, w = self.lval(scope)
            return Assign(lv, self.expr(scope, w))
        if k == "if":
            orelse = self.stmt(scope, depth + 1, calls) if r.random() < 0.6 else Skip()
            return If(self.cond(scope), self.stmt(scope, depth + 1, calls), orelse)
        if k == "seq":
            return seq(self.stmt(scope, depth + 1, calls), self.stmt(scope, depth + 1, calls))
        return r.choice(calls)(scope)

    def label(self) -> object:
        return HIGH if self.rng.random() < 0.4 else LOW

    def interval(self, w: int) -> Interval:
        r = self.rng
        k = r.random()
        if k < 0.45:
            return Interval.full(w)
        a, b = sorted((r.randrange(1 << w), r.randrange(1 << w)))
        return Interval(a, b)

    def btype(self, w: int, split: bool = True) -> BvType:
        r = self.rng
        if split and w > 1 and r.random() < 0.15:
            cut = r.randint(1, w - 1)
            return BvType((
                Slice(self.interval(w - cut), self.label(), w - cut),
                Slice(self.interval(cut), self.label(), cut),
            ))
        return BvType((Slice(self.interval(w), self.label(), w),))


def random_program(seed: int, limits: Limits | None = None) -> RandomCase:
    """A validated random program with contracts and one input and one or two output cases."""
    limits = limits or Limits()
    gen = _Gen(seed, limits)
    r = gen.rng
    widths = gen.widths()
    gnames = [f"v{i}" for i in range(len(widths))]
    gscope = dict(zip(gnames, widths))
    decls: list = [GlobalDecl(n, w) for n, w in gscope.items()]
    contracts = Contracts()
    calls: list = []

    if r.random() < 0.35:
        n_params = r.randint(1, 2)
        params = []
        for i in range(n_params):
            w = r.choice(widths)
            params.append(Param(f"p{i}", r.choice([Direction.IN, Direction.INOUT, Direction.OUT]), w))
        fscope = dict(gscope)
        fscope.update({p.name: p.type for p in params})
        body = gen.stmt(fscope, 2, [])
        decls.append(FuncDecl("f", tuple(params), body))

        def call_f(scope, params=tuple(params)):
            args = []
            for p in params:
                cands = [n for n, w in scope.items() if w == p.type]
                if p.direction.is_out:
                    args.append(Var(r.choice(cands)) if cands else None)
                else:
                    args.append(gen.expr(scope, p.type))
            if any(a is None for a in args):
                return Skip()
            return Call("f", tuple(args))

        calls.append(call_f)

    if r.random() < 0.35:
        aw = r.choice(widths)
        target = r.choice([n for n in gnames if gscope[n] == aw])
        act_body = Assign(LVar(target), Var("d")) if r.random() < 0.7 else Assign(LVar(target), Binop("+", Var("d"), Var(target)))
        decls.append(FuncDecl("a", (Param("d", Direction.NONE, aw),), act_body, is_action=True))
        decls.append(FuncDecl("b", (), gen.stmt(gscope, 3, []), is_action=True))
        key = Var(r.choice(gnames))
        kw = gscope[key.name]
        decls.append(TableDecl("t", (key,), ("a", "b")))
        c = r.randrange(1 << kw)
        second = r.choice(["a", "b"])
        rows = (
            TableRow(Cmp("<=", key, Const(Bits(kw, c), sized=False)), "a", (gen.btype(aw, split=False),)),
            TableRow(
                Cmp(">", key, Const(Bits(kw, c), sized=False)),
                second,
                (gen.btype(aw, split=False),) if second == "a" else (),
            ),
        )
        contracts.tables["t"] = TableContract("t", (key,), rows)
        calls.append(lambda scope: Apply("t"))

    if r.random() < 0.3:
        ew = r.choice(widths)
        decls.append(ExternDecl("e", (Param("p", Direction.INOUT, ew),)))
        c = r.randrange(1 << ew)
        tuples = []
        # a guarded case; its effects may be LOW only if the guard reads LOW data
        guard_low = r.random() < 0.5
        pre = ((LVar("p"), full_type(ew, LOW)),) if guard_low else ()
        post_label = r.choice([LOW, HIGH]) if guard_low else HIGH
        tuples.append(ExternTuple(pre, Cmp("==", Var("p"), Const(Bits(ew, c), sized=False)),
                                  ((LVar("p"), BvType((Slice(gen.interval(ew), post_label, ew),))),)))
        tuples.append(ExternTuple(pre, Const(Bits(1, 1), radix="bool"),
                                  ((LVar("p"), BvType((Slice(gen.interval(ew), gen.label(), ew),))),)))
        contracts.externs["e"] = ExternContract("e", tuple(tuples))

        def call_e(scope, ew=ew):
            cands = [n for n, w in scope.items() if w == ew]
            return Call("e", (Var(r.choice(cands)),)) if cands else Skip()

        calls.append(call_e)

    body = gen.stmt(gscope, 0, calls)
    if r.random() < 0.25:
        sel = r.choice(gnames)
        sw = gscope[sel]
        arms = tuple((Bits(sw, v), "s1") for v in sorted(r.sample(range(1 << sw), min(2, 1 << sw)))[:1])
        decls.append(StateDecl("s0", seq(gen.stmt(gscope, 3, calls), Transition(Var(sel), arms, "accept"))))
        decls.append(StateDecl("s1", seq(gen.stmt(gscope, 3, calls), goto("accept"))))
        body = seq(goto("s0"), body)
    prog = Program(decls, body)
    diags = validate_program(prog)
    if diags:
        raise AssertionError(f"generator produced an invalid program: {diags}")

    gin = {n: gen.btype(w) for n, w in gscope.items()}

    def output_case(name: str) -> PolicyCase:
        # mostly reuse the input label per variable, so that secure programs are common
        # and the verdict hinges on the flows rather than on the policy mismatch
        if r.random() < 0.1:
            return PolicyCase(name, StateType({n: full_type(w, HIGH) for n, w in gscope.items()}))
        g = {}
        for n, w in gscope.items():
            k = r.random()
            if k < 0.6:
                g[n] = full_type(w, max(s.label for s in gin[n].slices))
            elif k < 0.75:
                g[n] = BvType((Slice(gen.interval(w), gen.label(), w),))
            else:
                g[n] = gen.btype(w)
        return PolicyCase(name, StateType(g))

    inputs = [PolicyCase("in", StateType(gin))]
    outputs = [output_case(f"out{i}") for i in range(r.randint(1, 2))]
    return RandomCase(prog, contracts, inputs, outputs)


# ---------------------------------------------------------------- differential testing


@dataclass
class ProgramResult:
    seed: int
    verdict: str
    oracle_ok: bool | None
    soundness_bug: bool = False
    abstraction_bug: bool = False
    note: str = ""


@dataclass
class DifferentialReport:
    results: list[ProgramResult] = field(default_factory=list)

    @property
    def soundness_violations(self) -> list[ProgramResult]:
        return [r for r in self.results if r.soundness_bug]

    @property
    def abstraction_violations(self) -> list[ProgramResult]:
        return [r for r in self.results if r.abstraction_bug]

    def count(self, verdict: str) -> int:
        return sum(r.verdict == verdict for r in self.results)

    @property
    def incomplete(self) -> int:
        return sum(r.verdict == "INSECURE" and r.oracle_ok for r in self.results)

    def summary(self) -> str:
        n = len(self.results)
        insecure = self.count("INSECURE")
        rate = self.incomplete / insecure if insecure else 0.0
        return (
            f"programs={n} secure={self.count('SECURE')} insecure={insecure} "
            f"errors={self.count('ERROR')} soundness_violations={len(self.soundness_violations)} "
            f"abstraction_violations={len(self.abstraction_violations)} "
            f"false_alarms={self.incomplete} ({rate:.1%} of insecure verdicts)"
        )


def check_one(seed: int, config: OracleConfig, analyzer: AnalyzerConfig | None = None) -> ProgramResult:
    case = random_program(seed)
    prog, contracts = case.prog, case.contracts
    verdict = analyze(prog, case.inputs, case.outputs, contracts, analyzer)
    if verdict.error is not None:
        return ProgramResult(seed, "ERROR", None, note=verdict.error)
    oracle_ok = True
    note = ""
    abstraction_bug = False
    try:
        for res, inp in zip(verdict.cases, case.inputs):
            for k in range(config.env_pairs if _needs_envs(prog) else 1):
                env = instantiate_env(prog, contracts, config.seed + k, 0) if _needs_envs(prog) else DynamicEnv()
                m = abstraction_violation(prog, inp.gamma, res.gammas, env, config.max_bits)
                if m is not None:
                    abstraction_bug = True
                    note = f"untyped final state from {', '.join(f'{k}={v.value}' for k, v in m.items())}"
            for out in case.outputs:
                cex = noninterference_oracle(prog, inp.gamma, out.gamma, contracts, config)
                if cex is not None:
                    oracle_ok = False
                    if verdict.secure:
                        note = cex.render()
                    break
    except ContractViolation as exc:
        return ProgramResult(seed, verdict.status, None, note=f"contract violated at run time: {exc}")
    return ProgramResult(
        seed,
        verdict.status,
        oracle_ok,
        soundness_bug=verdict.secure and not oracle_ok,
        abstraction_bug=abstraction_bug,
        note=note,
    )


def _check_star(args):
    return check_one(*args)


def differential_check(
    config: OracleConfig | None = None,
    analyzer: AnalyzerConfig | None = None,
    jobs: int = 1,
) -> DifferentialReport:
    config = config or OracleConfig()
    seeds = [config.seed * 100_003 + i for i in range(config.max_programs)]
    work = [(s, config, analyzer) for s in seeds]
    if jobs > 1:
        from multiprocessing import Pool

        with Pool(jobs) as pool:
            results = pool.map(_check_star, work, chunksize=8)
    else:
        results = [check_one(*w) for w in work]
    return DifferentialReport(results)
