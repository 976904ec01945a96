import pytest

from support import corpus_text, load

from ifcp4.frontend import parse_program
from ifcp4.interp import (
    ConcState,
    DynamicEnv,
    eval_binop,
    eval_cmp,
    eval_unop,
    run_pipeline,
    zero_state,
)
from ifcp4.lang_ast import REJECTED, Bits
from ifcp4.oracle import EntryTable


def run(src: str, **values: int) -> dict[str, int]:
    prog = parse_program(src)
    m = zero_state(prog)
    for k, v in values.items():
        m.g[k] = Bits(m.g[k].width, v)
    return {k: v.value for k, v in run_pipeline(prog, DynamicEnv(), m).g.items()}


@pytest.mark.parametrize(
    "op, a, b, r",
    [("+", 250, 10, 4), ("-", 3, 5, 254), ("&", 12, 10, 8), ("|", 12, 10, 14), ("^", 12, 10, 6)],
)
def test_binops_wrap(op, a, b, r):
    assert eval_binop(op, Bits(8, a), Bits(8, b)) == Bits(8, r)


def test_cmp_and_unops():
    assert eval_cmp("<", Bits(4, 3), Bits(4, 9)) == Bits(1, 1)
    assert eval_cmp(">=", Bits(4, 3), Bits(4, 9)) == Bits(1, 0)
    assert eval_unop("neg", Bits(4, 1)) == Bits(4, 15)
    assert eval_unop("bitnot", Bits(4, 5)) == Bits(4, 10)
    assert eval_unop("lognot", Bits(4, 0)) == Bits(1, 1)


def test_slice_write_preserves_other_bits():
    out = run("global bit<8> x; entry { x[5:2] = 4w0; }", x=0xFF)
    assert out["x"] == 0b11000011


def test_nested_slice_read():
    out = run("global bit<8> x; global bit<2> y; entry { y = x[6:2][1:0]; }", x=0b00110100)
    assert out["y"] == 0b01


def test_copy_in_copy_out():
    src = """
    global bit<4> x; global bit<4> y;
    function f(in bit<4> a, inout bit<4> b, out bit<4> c) { b = b + a; c = a; a = 0; }
    entry { f(x, y, x); }
    """
    out = run(src, x=3, y=4)
    assert out == {"x": 3, "y": 7}


def test_parser_states_and_reject():
    src = """
    global bit<4> x;
    state start { transition select (x) { 1 : accept; 2 : reject; default : s1; } }
    state s1 { x = 9; transition accept; }
    entry { transition start; }
    """
    assert run(src, x=1)[REJECTED] == 0
    assert run(src, x=2)[REJECTED] == 1
    assert run(src, x=0)["x"] == 9


class _Fixed:
    def lookup(self, keys):
        self.seen = keys
        return "ipv4_forward", (Bits(48, 0xAB), Bits(9, 5))


def test_table_apply_runs_the_chosen_action():
    prog, _, _, _ = load("table_example.mp4")
    m = zero_state(prog)
    m.g["hdr.ipv4.ttl"] = Bits(8, 64)
    m.g["hdr.ipv4.dstAddr"] = Bits(32, 0xC0A80001)
    m.g["hdr.eth.dstAddr"] = Bits(48, 7)
    table = _Fixed()
    out = run_pipeline(prog, DynamicEnv({"ipv4_lpm": table}), m)
    assert table.seen == (Bits(32, 0xC0A80001),)
    assert out.g["hdr.ipv4.ttl"].value == 63
    assert out.g["standard_metadata.egress_spec"].value == 5
    assert (out.g["hdr.eth.srcAddr"].value, out.g["hdr.eth.dstAddr"].value) == (7, 0xAB)


def test_control_plane_entries_pick_first_match():
    prog, _, _, ctr = load("congestion.mp4", contracts="congestion.ctr")
    table = EntryTable(prog.tables["ipv4_lpm"].keys, ctr.entries["ipv4_lpm"])
    action, args = table.lookup((Bits(32, 0x010203C0),))
    assert action == "ipv4_forward" and args[1] == Bits(9, 5)
    assert table.lookup((Bits(32, 0x010203A7),))[1][1] == Bits(9, 12)
    assert table.lookup((Bits(32, 0x01020304),)) == ("drop", ())


def test_concrete_state_is_hashable():
    prog = parse_program(corpus_text("decrease.mp4"))
    a, b = zero_state(prog), zero_state(prog)
    assert a == b and hash(a) == hash(b)
    assert isinstance(a.copy(), ConcState)
