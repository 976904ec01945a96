import pytest

from ifcp4.frontend import parse_program
from ifcp4.lang_ast import (
    REJECTED,
    Assign,
    Bits,
    Const,
    GlobalDecl,
    LField,
    LSlice,
    LVar,
    Program,
    Record,
    Seq,
    Skip,
    Var,
    expr_to_lval,
    flatten_seq,
    lval_path,
    lval_to_expr,
    seq,
    validate_program,
)


def test_bits_range_checked():
    assert Bits(4, 15).value == 15
    with pytest.raises(ValueError):
        Bits(4, 16)
    with pytest.raises(ValueError):
        Bits(0, 0)


def test_bits_slice():
    assert Bits(8, 0b10110100).slice(5, 2) == Bits(4, 0b1101)


def test_record_rejects_duplicate_fields():
    with pytest.raises(ValueError):
        Record((("a", Bits(1, 0)), ("a", Bits(1, 1))))


def test_seq_is_flat_and_right_nested():
    a, b, c = (Assign(LVar(n), Const(Bits(1, 0))) for n in "abc")
    s = seq(a, seq(b, c))
    assert isinstance(s, Seq) and isinstance(s.second, Seq)
    assert flatten_seq(s) == [a, b, c]
    assert seq() == Skip()


def test_lval_paths():
    lv = LSlice(LField(LField(LVar("hdr"), "ipv4"), "ttl"), 3, 0)
    assert lval_path(lv) == ("hdr.ipv4.ttl", (3, 0))
    assert expr_to_lval(lval_to_expr(lv)) == lv


def test_const_printing_hints_do_not_affect_equality():
    assert Const(Bits(8, 5), sized=True, radix="hex") == Const(Bits(8, 5), sized=False)


def test_reject_adds_flag_global():
    prog = parse_program("global bit<1> x; state start { transition reject; } entry { transition start; }")
    assert REJECTED in prog.globals


@pytest.mark.parametrize(
    "src, category",
    [
        ("global bit<4> x; entry { y = x; }", "undeclared-name"),
        ("global bit<4> x; global bit<2> y; entry { x = y; }", "width-mismatch"),
        ("global bit<4> x; global bit<4> x; entry { }", "duplicate-name"),
        ("global bit<4> x; function f(inout bit<4> a) { f(a); } entry { f(x); }", "recursion"),
        ("global bit<4> x; function f(inout bit<4> a) { } entry { f(x + 1); }", "bad-argument"),
    ],
)
def test_validation_categories(src, category):
    from ifcp4.frontend import ProgramError

    with pytest.raises(ProgramError) as err:
        parse_program(src)
    assert category in {d.category for d in err.value.diagnostics}


def test_validate_program_on_ast():
    prog = Program([GlobalDecl("x", 4)], Assign(LVar("x"), Var("x")))
    assert validate_program(prog) == []
