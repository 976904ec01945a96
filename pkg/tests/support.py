"""Shared helpers for the test suite: corpus loading and small state-type builders."""

from __future__ import annotations

import itertools
from pathlib import Path

from ifcp4.abstract_domain import HIGH, LOW, BvType, Interval, Slice, bits_have_type
from ifcp4.frontend import parse_contracts, parse_policy, parse_program
from ifcp4.lang_ast import Bits
from ifcp4.policy import Contracts
from ifcp4.state_types import StateType

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text()


def load(program: str, inputs: str | None = None, outputs: str | None = None, contracts: str | None = None):
    prog = parse_program(corpus_text(program))
    ins = parse_policy(corpus_text(inputs), prog, "input").inputs if inputs else []
    outs = parse_policy(corpus_text(outputs), prog, "output").outputs if outputs else []
    ctr = parse_contracts(corpus_text(contracts), prog) if contracts else Contracts()
    return prog, ins, outs, ctr


def intervals(width: int):
    """Every non-empty interval of the given width."""
    top = 1 << width
    for lo in range(top):
        for hi in range(lo, top):
            yield Interval(lo, hi)


def one_slice_types(width: int, labels=(LOW, HIGH)):
    for iv in intervals(width):
        for lab in labels:
            yield BvType((Slice(iv, lab, width),))


def two_slice_types(width: int, labels=(LOW, HIGH)):
    for cut in range(1, width):
        for a, b in itertools.product(intervals(width - cut), intervals(cut)):
            for la, lb in itertools.product(labels, repeat=2):
                yield BvType((Slice(a, la, width - cut), Slice(b, lb, cut)))


def values_of(t: BvType) -> list[int]:
    return [v for v in range(1 << t.width) if bits_have_type(v, t)]


def gamma(**leaves: BvType) -> StateType:
    return StateType(dict(leaves))


def state(**values: tuple[int, int]) -> dict[str, Bits]:
    """``state(x=(4, 3))`` is x = 3 at width 4."""
    return {k: Bits(w, v) for k, (w, v) in values.items()}
