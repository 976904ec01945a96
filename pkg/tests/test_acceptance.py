"""Acceptance criteria 1-9, one test each.

Every test records a PASS/FAIL line (printed in the terminal summary by
conftest.py) before asserting, so a red criterion still reports its numbers.
Run directly with ``python tests/test_acceptance.py`` for the lines alone.
"""

from __future__ import annotations

import itertools
import time

from support import intervals, load, one_slice_types, two_slice_types, values_of

from conftest import ACCEPTANCE
from ifcp4.abstract_domain import (
    HIGH,
    LOW,
    AnalysisError,
    BvType,
    Interval,
    Slice,
    bits_have_type,
    interval_binop,
    interval_unop,
    lbl,
    type_leq,
    type_slice,
)
from ifcp4.frontend import parse_policy, parse_program
from ifcp4.interp import Machine, eval_binop, eval_cmp, eval_in, eval_unop, write_lval
from ifcp4.lang_ast import (
    BINOPS,
    CMPOPS,
    Binop,
    Bits,
    Cmp,
    Const,
    LSlice,
    LVar,
    SliceE,
    Unop,
    Var,
)
from ifcp4.oracle import (
    ContractViolation,
    OracleConfig,
    differential_check,
    enumerate_states,
    instantiate_env,
    noninterference_oracle,
    random_program,
)
from ifcp4.policy import analyze
from ifcp4.state_types import (
    StateType,
    gamma_update,
    join,
    join_set,
    low_mask,
    refine,
    render_gamma,
)
from ifcp4.typer import AnalyzerConfig, Typer, type_expr


def report(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


# ---------------------------------------------------------------- 1-4: goldens


def test_criterion_1_example_state_type_operations():
    t0 = time.perf_counter()
    g = StateType({"x": BvType((Slice(Interval(2, 8), LOW, 4),))})
    updated = render_gamma(gamma_update(g, LSlice(LVar("x"), 3, 3), BvType((Slice(Interval(0, 0), HIGH, 1),))))
    refined = render_gamma(refine(g, Cmp("<", SliceE(Var("x"), 3, 3), Const(Bits(1, 1)))))
    other = StateType({"x": BvType((Slice(Interval(0, 1), HIGH, 1), Slice(Interval(0, 7), LOW, 3)))})
    joined = render_gamma(join(g, other))
    elapsed = time.perf_counter() - t0
    got = (updated, refined, joined)
    want = ("{x ↦ [0]^H_1 · *^L_3}", "{x ↦ [0]^L_1 · *^L_3}", "{x ↦ [2,8]^H_4}")
    ok = got == want and elapsed < 1.0
    report(1, ok, f"update/refine/join = {' ; '.join(got)} ({elapsed * 1000:.1f} ms)")
    assert ok


def test_criterion_2_call_copy_out():
    prog, ins, _, ctr = load("decrease.mp4", "decrease.pol")
    final = Typer(prog, ctr).analyze_case(ins[0].gamma)
    got = [render_gamma(g) for g in final]
    ok = got == ["{ttl ↦ [0,9]^L_8}"]
    report(2, ok, f"decrease(ttl) from [1,10]^L_8 gives {got}")
    assert ok


def test_criterion_3_table_example():
    prog, ins, _, ctr = load("table_example.mp4", "table_example.pol", None, "table_example.ctr")
    final = Typer(prog, ctr).analyze_case(ins[0].gamma)
    rows = [render_gamma(refine(ins[0].gamma, r.phi)) for r in ctr.tables["ipv4_lpm"].rows]
    nonempty = [r for r in rows if "[]" not in r]
    g = final[0] if final else None
    ok = (
        len(nonempty) == 1
        and len(final) == 1
        and g.g["standard_metadata.egress_spec"].render() == "[1,9]^L_9"
        and g.g["hdr.eth.dstAddr"].render() == "*^H_48"
    )
    report(3, ok, f"{len(nonempty)} non-empty row refinement, |Γ| = {len(final)}")
    assert ok


def _ecn_high_everywhere(policy: str, config: AnalyzerConfig | None = None) -> bool:
    prog, ins, _, ctr = load("cond.mp4", policy)
    final = Typer(prog, ctr, config).analyze_case(ins[0].gamma)
    return bool(final) and all(g.g["hdr.ipv4.ecn"].slices[0].label == HIGH for g in final)


def walkthrough(config: AnalyzerConfig | None = None) -> dict[str, bool]:
    """Every check of the congestion walkthrough; True means the expected outcome."""
    checks = {}
    for name, want, leaf in [
        ("congestion.mp4", "SECURE", None),
        ("congestion_buggy.mp4", "INSECURE", "hdr.ipv4.ecn"),
        ("congestion_covert.mp4", "INSECURE", "hdr.ipv4.ttl"),
    ]:
        prog, ins, outs, ctr = load(name, "in.pol", "out.pol", "congestion.ctr")
        v = analyze(prog, ins, outs, ctr, config)
        w = v.first_witness()
        checks[name] = v.status == want and (leaf is None or (w is not None and w[1].leaf == leaf))
    # the marking branch on a secret queue depth, with and without a reachable then-branch
    checks["cond: ecn HIGH in every final state type"] = _ecn_high_everywhere("cond.pol", config)
    checks["invalid_state: ecn HIGH in every final state type"] = _ecn_high_everywhere("invalid_state.pol", config)
    return checks


def test_criterion_4_congestion_walkthrough():
    t0 = time.perf_counter()
    checks = walkthrough()
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 10
    bad = [k for k, v in checks.items() if not v]
    report(4, ok, f"{len(checks) - len(bad)}/{len(checks)} checks in {elapsed:.2f} s" + (f"; failing: {bad}" if bad else ""))
    assert ok


# ---------------------------------------------------------------- 5: the oracle on the policy examples


def distinguish_cases() -> list[tuple[str, bool]]:
    """(body, interfering) per program; True when the oracle found a counterexample."""
    out = []
    for body in ["b = a;", "if (a <= 1024) { b = a; }", "b = a + 1000;"]:
        prog = parse_program(f"global bit<11> a; global bit<11> b; entry {{ {body} }}")
        gi = parse_policy("a : [0,256]^H\nb : *^L\n", prog, "input").inputs[0].gamma
        go = parse_policy("a : *^H\nb : [1025,*]^L\n", prog, "output").outputs[0].gamma
        cex = noninterference_oracle(prog, gi, go, config=OracleConfig(max_bits=20))
        if cex is not None:
            assert cex.replay(prog, None, go), "counterexample does not replay"
        out.append((body, cex is not None))
    return out


def test_criterion_5_policy_distinguish_oracle():
    t0 = time.perf_counter()
    got = distinguish_cases()
    elapsed = time.perf_counter() - t0
    want = [False, False, True]
    ok = [i for _, i in got] == want and elapsed < 30
    desc = ", ".join(f"`{b}` {'counterexample' if i else 'ok'}" for b, i in got)
    report(5, ok, f"{desc} ({elapsed:.1f} s at width 11)")
    assert ok


# ---------------------------------------------------------------- 6: expression transfer soundness


def transfer_violations(max_width: int = 4) -> tuple[int, int]:
    """(violations, checked) over every operator, interval pair and value pair."""
    bad = checked = 0
    for w in range(1, max_width + 1):
        ivs = list(intervals(w))
        for op in BINOPS + CMPOPS:
            ev = eval_cmp if op in CMPOPS else eval_binop
            table = [[ev(op, Bits(w, x), Bits(w, y)).value for y in range(1 << w)] for x in range(1 << w)]
            for a in ivs:
                rows = table[a.lo:a.hi + 1]
                for b in ivs:
                    r = interval_binop(op, a, b, w)
                    for row in rows:
                        for v in row[b.lo:b.hi + 1]:
                            checked += 1
                            bad += v not in r
        for op in ("neg", "bitnot", "lognot"):
            for a in ivs:
                r = interval_unop(op, a, w)
                for x in range(a.lo, a.hi + 1):
                    checked += 1
                    bad += eval_unop(op, Bits(w, x)).value not in r
    # sub-bitvectors of sliced types
    for w in range(1, max_width + 1):
        for t in itertools.chain(one_slice_types(w, (LOW,)), two_slice_types(w, (LOW,))):
            vals = values_of(t)
            for hi in range(w):
                for lo in range(hi + 1):
                    r = type_slice(t, hi, lo)
                    for v in vals:
                        checked += 1
                        bad += not bits_have_type((v >> lo) & ((1 << (hi - lo + 1)) - 1), r)
    return bad, checked


def low_determinism_violations(max_width: int = 4) -> tuple[int, int]:
    """LOW-typed expressions evaluate equally on low-equivalent states."""
    bad = checked = 0
    # sub-bitvectors: the only expressions whose label can be LOW over a partly HIGH variable
    for w in range(2, max_width + 1):
        for t in two_slice_types(w):
            g = StateType({"x": t})
            mask = low_mask(t)
            vals = values_of(t)
            for hi in range(w):
                for lo in range(hi + 1):
                    e = SliceE(Var("x"), hi, lo)
                    if lbl(type_expr(g, e)) != LOW:
                        continue
                    for v in vals:
                        ref = eval_in({"x": Bits(w, v)}, {}, e)
                        for v2 in range(1 << w):
                            if (v ^ v2) & mask:
                                continue
                            checked += 1
                            bad += eval_in({"x": Bits(w, v2)}, {}, e) != ref
    # operators over two variables with every label combination
    for w in range(1, 3):
        for lx, ly in itertools.product((LOW, HIGH), repeat=2):
            g = StateType({"x": BvType((Slice(Interval.full(w), lx, w),)), "y": BvType((Slice(Interval.full(w), ly, w),))})
            exprs = [Cmp(op, Var("x"), Var("y")) for op in CMPOPS]
            exprs += [Binop(op, Var("x"), Var("y")) for op in BINOPS] + [Unop("neg", Var("x"))]
            for e in exprs:
                if lbl(type_expr(g, e)) != LOW:
                    continue
                for x, y, x2, y2 in itertools.product(range(1 << w), repeat=4):
                    if (lx == LOW and x != x2) or (ly == LOW and y != y2):
                        continue
                    checked += 1
                    m1 = {"x": Bits(w, x), "y": Bits(w, y)}
                    m2 = {"x": Bits(w, x2), "y": Bits(w, y2)}
                    bad += eval_in(m1, {}, e) != eval_in(m2, {}, e)
    return bad, checked


def test_criterion_6_expression_transfer_soundness():
    t0 = time.perf_counter()
    bad1, n1 = transfer_violations()
    bad2, n2 = low_determinism_violations()
    elapsed = time.perf_counter() - t0
    ok = bad1 == 0 and bad2 == 0 and elapsed < 60
    report(6, ok, f"{bad1} interval violations in {n1} evaluations, {bad2} low-determinism violations in {n2} pairs ({elapsed:.1f} s)")
    assert ok


# ---------------------------------------------------------------- 7: differential soundness


def test_criterion_7_differential_soundness():
    t0 = time.perf_counter()
    rep = differential_check(OracleConfig(max_programs=500, env_pairs=3))
    elapsed = time.perf_counter() - t0
    ok = not rep.soundness_violations and not rep.abstraction_violations and elapsed < 300
    report(7, ok, f"{rep.summary()} ({elapsed:.1f} s)")
    assert ok


# ---------------------------------------------------------------- 8: mutation sensitivity

MUTATIONS = {
    "join_on_high": AnalyzerConfig(join_on_high=False),
    "traverse_empty_high": AnalyzerConfig(traverse_empty_high=False),
    "raise_to_pc": AnalyzerConfig(raise_to_pc=False),
}


def mutation_failures(config: AnalyzerConfig) -> dict[str, int]:
    """Failures per suite (4: walkthrough, 7: differential) under a mutated analyzer.

    Suites 5 and 6 exercise the oracle and the expression transfer functions,
    which no mutation touches, so they cannot fail and are not rerun.
    """
    suite4 = sum(not ok for ok in walkthrough(config).values())
    rep = differential_check(OracleConfig(max_programs=500, env_pairs=3), config)
    suite7 = len(rep.soundness_violations) + len(rep.abstraction_violations)
    return {"suite 4": suite4, "suite 7": suite7}


def test_criterion_8_mutation_sensitivity():
    results = {name: mutation_failures(cfg) for name, cfg in MUTATIONS.items()}
    ok = all(sum(r.values()) >= 1 for r in results.values())
    desc = "; ".join(f"no {n}: " + ", ".join(f"{k} {v}" for k, v in r.items()) for n, r in results.items())
    report(8, ok, f"failures per mutation: {desc}")
    assert ok


# ---------------------------------------------------------------- 9: property suites


def refine_typedness() -> tuple[int, int]:
    """A typed state satisfying a predicate stays typed by the refinement (and dually for ¬)."""
    bad = checked = 0
    for w in range(1, 5):
        for t in itertools.chain(one_slice_types(w, (LOW,)), two_slice_types(w, (LOW,))):
            g = StateType({"x": t})
            vals = values_of(t)
            for hi in range(w):
                for lo in range(hi + 1):
                    sub = Var("x") if (hi, lo) == (w - 1, 0) else SliceE(Var("x"), hi, lo)
                    sw = hi - lo + 1
                    for op in CMPOPS:
                        for c in range(1 << sw):
                            e = Cmp(op, sub, Const(Bits(sw, c)))
                            pos, neg = refine(g, e), refine(g, Unop("lognot", e))
                            for v in vals:
                                holds = eval_in({"x": Bits(w, v)}, {}, e).value == 1
                                checked += 1
                                bad += not bits_have_type(v, (pos if holds else neg).g["x"])
    # comparisons between two variables
    for w in range(1, 4):
        for a, b in itertools.product(one_slice_types(w, (LOW,)), repeat=2):
            g = StateType({"x": a, "y": b})
            for op in CMPOPS:
                e = Cmp(op, Var("x"), Var("y"))
                pos, neg = refine(g, e), refine(g, Unop("lognot", e))
                for x, y in itertools.product(values_of(a), values_of(b)):
                    m = {"x": Bits(w, x), "y": Bits(w, y)}
                    r = pos if eval_in(m, {}, e).value == 1 else neg
                    checked += 1
                    bad += not (bits_have_type(x, r.g["x"]) and bits_have_type(y, r.g["y"]))
    return bad, checked


def join_preserves_intervals() -> tuple[int, int]:
    """Each state typed by a member of Γ is typed by a member of join(Γ) that is above it."""
    bad = checked = 0
    types = [t for w in (3,) for t in itertools.chain(one_slice_types(w), two_slice_types(w))]
    for t1, t2 in itertools.product(types, repeat=2):
        g1, g2 = StateType({"x": t1}), StateType({"x": t2})
        joined = join_set([g1, g2])
        for g in (g1, g2):
            for v in values_of(g.g["x"])[:2]:
                checked += 1
                bad += not any(bits_have_type(v, j.g["x"]) and type_leq(g.g["x"], j.g["x"]) for j in joined)
    return bad, checked


def update_preserves_type() -> tuple[int, int]:
    """γ ⊢ m and v : τ imply γ[lval ↦ τ] ⊢ m[lval ↦ v], for whole variables and every sub-bitvector."""
    bad = checked = 0
    for w in range(1, 4):
        for t in itertools.chain(one_slice_types(w, (LOW,)), two_slice_types(w, (LOW,))):
            g = StateType({"x": t})
            vals = values_of(t)
            for hi in range(w):
                for lo in range(hi + 1):
                    lv = LVar("x") if (hi, lo) == (w - 1, 0) else LSlice(LVar("x"), hi, lo)
                    sw = hi - lo + 1
                    for tau in one_slice_types(sw, (LOW,)):
                        updated = gamma_update(g, lv, tau).g["x"]
                        for m in vals:
                            for v in range(tau.slices[0].interval.lo, tau.slices[0].interval.hi + 1):
                                gm, lm = {"x": Bits(w, m)}, {}
                                write_lval(gm, lm, lv, Bits(sw, v))
                                checked += 1
                                bad += not bits_have_type(gm["x"].value, updated)
    return bad, checked


def high_pc_properties(programs: int = 4000) -> dict[str, tuple[int, int]]:
    """Branch-on-high state preservation, label monotonicity and non-emptiness under a HIGH context."""
    counts = {"preservation": [0, 0], "monotonicity": [0, 0], "never empty": [0, 0]}
    for seed in range(programs):
        case = random_program(seed)
        prog, contracts = case.prog, case.contracts
        gin = case.inputs[0].gamma
        try:
            final = Typer(prog, contracts).type_stmt(HIGH, gin, prog.entry)
        except AnalysisError:
            continue
        counts["never empty"][1] += 1
        counts["never empty"][0] += not final
        for g in final:
            for k, t in gin.g.items():
                counts["monotonicity"][1] += 1
                low_after = low_mask(g.g[k])
                # every bit LOW afterwards was LOW before
                counts["monotonicity"][0] += bool(low_after & ~low_mask(t))
        env = instantiate_env(prog, contracts, seed, 0)
        run = Machine(prog, env)
        for m in itertools.islice(enumerate_states(gin), 16):
            after = dict(m)
            try:
                run.run(prog.entry, after, {})
            except ContractViolation:
                continue
            for g in final:
                counts["preservation"][1] += 1
                counts["preservation"][0] += any((m[k].value ^ after[k].value) & low_mask(t) for k, t in g.g.items())
    return {k: (v[0], v[1]) for k, v in counts.items()}


def test_criterion_9_property_suites():
    t0 = time.perf_counter()
    results = {
        "refine typedness": refine_typedness(),
        "join keeps intervals": join_preserves_intervals(),
        "update keeps type": update_preserves_type(),
    }
    results.update({f"HIGH pc {k}": v for k, v in high_pc_properties().items()})
    elapsed = time.perf_counter() - t0
    # non-emptiness is reported alongside; it is checked per program, not per state
    sized = [v for k, v in results.items() if k != "HIGH pc never empty"]
    ok = all(b == 0 for b, _ in results.values()) and all(n >= 10_000 for _, n in sized)
    desc = "; ".join(f"{k}: {b}/{n}" for k, (b, n) in results.items())
    report(9, ok, f"violations/cases: {desc} ({elapsed:.1f} s)")
    assert ok


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
