#!/usr/bin/env python3
"""Differential run of the analyzer against the enumeration oracle.

    python3 scripts/run_fuzz.py --programs 2000 --jobs 8
    python3 scripts/run_fuzz.py --mutation noraise

A mutation switches off one rule of the analyzer; a useful harness should
then report soundness violations.
"""

from __future__ import annotations

import argparse
import time

from ifcp4.oracle import OracleConfig, differential_check
from ifcp4.typer import AnalyzerConfig

MUTATIONS = {
    "none": AnalyzerConfig(),
    "nojoin": AnalyzerConfig(join_on_high=False),
    "noempty": AnalyzerConfig(traverse_empty_high=False),
    "noraise": AnalyzerConfig(raise_to_pc=False),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--programs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-bits", type=int, default=12)
    ap.add_argument("--env-pairs", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--mutation", choices=sorted(MUTATIONS), default="none")
    ap.add_argument("--show", type=int, default=3, help="violations to print in full")
    args = ap.parse_args()

    config = OracleConfig(args.max_bits, args.programs, args.seed, args.env_pairs)
    t0 = time.perf_counter()
    report = differential_check(config, MUTATIONS[args.mutation], jobs=args.jobs)
    bad = report.soundness_violations + report.abstraction_violations
    for r in bad[: args.show]:
        print(f"--- seed {r.seed} ({r.verdict})\n{r.note}")
    print(f"{args.mutation}: {report.summary()} [{time.perf_counter() - t0:.1f} s]")


if __name__ == "__main__":
    main()
