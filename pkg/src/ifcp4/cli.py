"""Command-line driver: ``ifcp4 check|interp|oracle|fuzz|fmt``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .frontend import (
    ParseError,
    ProgramError,
    parse_contracts,
    parse_policy,
    parse_program,
    parse_state,
    print_program,
    render_state,
)
from .interp import DynamicEnv, Machine, RuntimeFault
from .lang_ast import Program
from .oracle import (
    BudgetExceeded,
    ContractTable,
    ContractViolation,
    EntryTable,
    ExternStandIn,
    OracleConfig,
    differential_check,
    noninterference_oracle,
)
from .policy import Contracts, PolicyCase, Verdict, analyze
from .state_types import render_gamma
from .typer import AnalyzerConfig

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class Inputs:
    prog: Program
    inputs: list[PolicyCase]
    outputs: list[PolicyCase]
    contracts: Contracts


def _read(path: str | None, what: str) -> str:
    if path is None:
        raise UsageError(f"missing {what} file")
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path}: {exc.strerror}") from None


def _load(args, need_policies: bool = True) -> Inputs:
    prog = parse_program(_read(args.program, "program"))
    inputs: list[PolicyCase] = []
    outputs: list[PolicyCase] = []
    if need_policies:
        inputs = parse_policy(_read(args.policy_in, "input policy"), prog, "input").inputs
        outputs = parse_policy(_read(args.policy_out, "output policy"), prog, "output").outputs
        if not inputs:
            raise UsageError("the input policy has no cases")
    contracts = Contracts()
    if args.contracts is not None:
        contracts = parse_contracts(_read(args.contracts, "contract"), prog)
    elif need_policies and (prog.tables or prog.externs):
        raise UsageError("the program uses tables or externs; pass a contract file with -c")
    return Inputs(prog, inputs, outputs, contracts)


def _color(text: str, code: str) -> str:
    flag = os.environ.get("IFCP4_COLOR")
    on = flag == "1" if flag in ("0", "1") else sys.stdout.isatty()
    return f"\033[{code}m{text}\033[0m" if on else text


def _emit(args, record: dict, text: str) -> None:
    if args.format == "json-lines":
        print(json.dumps(record, ensure_ascii=False))
    else:
        print(text)


# ---------------------------------------------------------------- check


def _check_one(payload) -> Verdict:
    prog, case, outputs, contracts, config = payload
    return analyze(prog, [case], outputs, contracts, config)


def cmd_check(args) -> int:
    inp = _load(args)
    config = AnalyzerConfig(max_gammas=args.max_gammas)
    payloads = [(inp.prog, c, inp.outputs, inp.contracts, config) for c in inp.inputs]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            parts = list(pool.map(_check_one, payloads))
    else:
        parts = [_check_one(p) for p in payloads]
    verdict = Verdict()
    for part in parts:
        verdict.cases.extend(part.cases)
        if part.error is not None:
            verdict.error = part.error
            break

    for res in verdict.cases:
        status = "SECURE" if res.secure else "INSECURE"
        record = {"case": res.name, "status": status, "gammas": len(res.gammas)}
        text = f"case {res.name}: {status} ({len(res.gammas)} final state types)"
        if res.witness is not None:
            record.update(output_case=res.output_case, leaf=res.witness.leaf, clause=res.witness.clause)
            text += f"\n  output case {res.output_case}: " + res.witness.render().replace("\n", "\n  ")
        if args.emit_gammas:
            record["final"] = [render_gamma(g) for g in res.gammas]
            text += "".join(f"\n  {render_gamma(g)}" for g in res.gammas)
        _emit(args, record, text)

    if verdict.error is not None:
        _emit(args, {"status": "ERROR", "error": verdict.error}, f"error: {verdict.error}")
        return EXIT_ERROR
    found = verdict.first_witness()
    summary = {"status": verdict.status}
    if found is not None:
        summary["witness"] = found[1].leaf
    code = "32" if verdict.secure else "31"
    _emit(args, summary, _color(verdict.status, code) + (f" (witness {found[1].leaf})" if found else ""))
    return EXIT_OK if verdict.secure else EXIT_FAIL


# ---------------------------------------------------------------- interp


def concrete_env(prog: Program, contracts: Contracts, seed: int) -> DynamicEnv:
    """Tables use control-plane entries when given, else a stand-in drawn from the contract."""
    tables = {}
    for name, decl in prog.tables.items():
        if name in contracts.entries:
            tables[name] = EntryTable(decl.keys, contracts.entries[name])
        elif name in contracts.tables:
            tables[name] = ContractTable(prog, contracts.tables[name], seed, 0)
    externs = {n: ExternStandIn(prog, c, seed, 0) for n, c in contracts.externs.items()}
    return DynamicEnv(tables, externs)


def cmd_interp(args) -> int:
    inp = _load(args, need_policies=False)
    g = parse_state(_read(args.state, "state"), inp.prog) if args.state else parse_state("", inp.prog)
    missing = [n for n in list(inp.prog.tables) if n not in inp.contracts.entries and n not in inp.contracts.tables]
    missing += [n for n in inp.prog.externs if n not in inp.contracts.externs]
    env = concrete_env(inp.prog, inp.contracts, args.seed)
    try:
        Machine(inp.prog, env).run(inp.prog.entry, g, {})
    except KeyError as exc:
        if exc.args and exc.args[0] in missing:
            raise UsageError(f"no entries or contract for {exc.args[0]}") from None
        raise
    if args.format == "json-lines":
        print(json.dumps({k: v.value for k, v in g.items()}))
    else:
        sys.stdout.write(render_state(g))
    return EXIT_OK


# ---------------------------------------------------------------- oracle


def cmd_oracle(args) -> int:
    inp = _load(args)
    config = OracleConfig(max_bits=args.max_bits, seed=args.seed, env_pairs=args.env_pairs)
    for case in inp.inputs:
        for out in inp.outputs:
            cex = noninterference_oracle(inp.prog, case.gamma, out.gamma, inp.contracts, config)
            if cex is None:
                continue
            prefix = Path(args.cex)
            prefix.with_suffix(".m1.state").write_text(render_state(cex.m1))
            prefix.with_suffix(".m2.state").write_text(render_state(cex.m2))
            record = {
                "status": "COUNTEREXAMPLE",
                "input_case": case.name,
                "output_case": out.name,
                "clause": cex.clause,
                "env_seed": cex.env_seed,
                "m1": {k: v.value for k, v in cex.m1.items()},
                "m2": {k: v.value for k, v in cex.m2.items()},
            }
            text = (
                f"counterexample for input case {case.name}, output case {out.name}\n{cex.render()}\n"
                f"initial states written to {prefix.with_suffix('.m1.state')} and {prefix.with_suffix('.m2.state')}"
            )
            _emit(args, record, text)
            return EXIT_FAIL
    _emit(args, {"status": "OK"}, "OK: no counterexample")
    return EXIT_OK


# ---------------------------------------------------------------- fuzz and fmt


def cmd_fuzz(args) -> int:
    config = OracleConfig(max_bits=args.max_bits, max_programs=args.programs, seed=args.seed, env_pairs=args.env_pairs)
    report = differential_check(config, AnalyzerConfig(max_gammas=args.max_gammas), jobs=args.jobs)
    for r in report.soundness_violations + report.abstraction_violations:
        _emit(args, {"seed": r.seed, "verdict": r.verdict, "note": r.note}, f"seed {r.seed}: {r.verdict}\n{r.note}")
    _emit(
        args,
        {
            "programs": len(report.results),
            "secure": report.count("SECURE"),
            "insecure": report.count("INSECURE"),
            "errors": report.count("ERROR"),
            "soundness_violations": len(report.soundness_violations),
            "abstraction_violations": len(report.abstraction_violations),
            "false_alarms": report.incomplete,
        },
        report.summary(),
    )
    return EXIT_FAIL if report.soundness_violations or report.abstraction_violations else EXIT_OK


def cmd_fmt(args) -> int:
    prog = parse_program(_read(args.program, "program"))
    sys.stdout.write(print_program(prog))
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ifcp4", description="Information-flow analysis for mini-P4 programs.")
    sub = p.add_subparsers(dest="command", required=True)

    def files(sp, policies: bool = True):
        sp.add_argument("-p", "--program", required=True)
        if policies:
            sp.add_argument("-i", "--policy-in")
            sp.add_argument("-o", "--policy-out")
        sp.add_argument("-c", "--contracts")

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--max-gammas", type=int, default=4096)
        sp.add_argument("--format", choices=["text", "json-lines"], default="text")

    sp = sub.add_parser("check", help="analyze a program against input and output policies")
    files(sp)
    common(sp)
    sp.add_argument("--emit-gammas", action="store_true", help="print each input case's final state types")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("interp", help="run one concrete execution")
    files(sp, policies=False)
    common(sp)
    sp.add_argument("--state", help="initial state file (lvalue = value per line)")
    sp.set_defaults(func=cmd_interp)

    sp = sub.add_parser("oracle", help="search for a noninterference counterexample by enumeration")
    files(sp)
    common(sp)
    sp.add_argument("--max-bits", type=int, default=12)
    sp.add_argument("--env-pairs", type=int, default=3)
    sp.add_argument("--cex", default="counterexample", help="path prefix for counterexample state files")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("fuzz", help="differential test of the analyzer against the oracle")
    common(sp)
    sp.add_argument("--programs", type=int, default=500)
    sp.add_argument("--max-bits", type=int, default=12)
    sp.add_argument("--env-pairs", type=int, default=3)
    sp.set_defaults(func=cmd_fuzz)

    sp = sub.add_parser("fmt", help="pretty-print a program")
    sp.add_argument("-p", "--program", required=True)
    sp.set_defaults(func=cmd_fmt)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, ProgramError, BudgetExceeded, ContractViolation, RuntimeFault, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
