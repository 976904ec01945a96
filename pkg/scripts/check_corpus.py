#!/usr/bin/env python3
"""Analyze the three congestion-control variants in corpus/ and print verdicts."""

from pathlib import Path

from ifcp4.frontend import parse_contracts, parse_policy, parse_program
from ifcp4.policy import analyze

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def main() -> None:
    for name in ("congestion.mp4", "congestion_buggy.mp4", "congestion_covert.mp4"):
        prog = parse_program((CORPUS / name).read_text())
        ins = parse_policy((CORPUS / "in.pol").read_text(), prog, "input").inputs
        outs = parse_policy((CORPUS / "out.pol").read_text(), prog, "output").outputs
        ctr = parse_contracts((CORPUS / "congestion.ctr").read_text(), prog)
        v = analyze(prog, ins, outs, ctr)
        found = v.first_witness()
        print(f"{name:24} {v.status:9} {found[1].leaf if found else ''}")


if __name__ == "__main__":
    main()
