"""Text formats: mini-P4 programs, policy files, contract files, state files.

Programs are parsed by a small recursive-descent parser. Unsized integer
literals get their width from context (the other operand, the assignment
target, the parameter, the select scrutinee) in a second pass.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from .abstract_domain import HIGH, LOW, BvType, Interval, Slice, Type
from .lang_ast import (
    REJECTED,
    VALID,
    Apply,
    Assign,
    Binop,
    Bits,
    Call,
    Cmp,
    Const,
    Diagnostic,
    Direction,
    Expr,
    ExternDecl,
    Field,
    FuncDecl,
    GlobalDecl,
    If,
    LValue,
    Param,
    Program,
    RecordE,
    Seq,
    Shape,
    Skip,
    SliceE,
    StateDecl,
    Stmt,
    TableDecl,
    Transition,
    TypeDecl,
    Unop,
    Var,
    expr_to_lval,
    flatten_seq,
    lval_to_expr,
    seq,
    validate_program,
)
from .policy import (
    Contracts,
    ExternContract,
    ExternImpl,
    ExternTuple,
    PolicyCase,
    TableContract,
    TableEntries,
    TableRow,
    make_case,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class ProgramError(Exception):
    """A program parsed but failed validation."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


# ---------------------------------------------------------------- tokens

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<ip>\d+\.\d+\.\d+\.\d+)
  | (?P<num>\d+w(?:0x[0-9a-fA-F]+|0b[01]+|\d+)|0x[0-9a-fA-F]+|0b[01]+|\d+)
  | (?P<id>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||->|[{}()\[\];:,.<>=+\-&|^~!*])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), line, pos - line_start + 1))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# ---------------------------------------------------------------- literals


@dataclass(frozen=True)
class _Lit:
    """Unsized literal awaiting a width from its context."""

    value: int
    radix: str


def _parse_number(text: str) -> tuple[int | None, int, str]:
    """(width or None, value, radix) of a numeric token."""
    if "." in text:
        parts = [int(p) for p in text.split(".")]
        if any(p > 255 for p in parts):
            raise ValueError(f"bad dotted quad {text}")
        v = 0
        for p in parts:
            v = (v << 8) | p
        return 32, v, "ip"
    width = None
    m = re.fullmatch(r"(\d+)w(.*)", text)
    if m:
        width, text = int(m.group(1)), m.group(2)
    if text.startswith("0x"):
        return width, int(text, 16), "hex"
    if text.startswith("0b"):
        return width, int(text, 2), "bin"
    return width, int(text), "dec"


def format_number(v: int, width: int, radix: str) -> str:
    if radix == "hex":
        return f"0x{v:0{(width + 3) // 4}X}"
    if radix == "bin":
        return f"0b{v:0{width}b}"
    if radix == "ip" and width == 32:
        return ".".join(str((v >> s) & 255) for s in (24, 16, 8, 0))
    return str(v)


# ---------------------------------------------------------------- parser core


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected: str) -> ParseError:
        t = self.tok
        found = t.text or "end of input"
        return ParseError(f"expected {expected}, found {found!r}", t.line, t.col)

    def at(self, *texts: str) -> bool:
        return self.tok.kind != "eof" and self.tok.text in texts

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "id":
            raise self.error("identifier")
        t = self.tok.text
        self.i += 1
        return t

    def integer(self) -> int:
        if self.tok.kind != "num":
            raise self.error("integer")
        w, v, _ = _parse_number(self.tok.text)
        if w is not None:
            raise self.error("plain integer")
        self.i += 1
        return v

    # -- expressions, lowest precedence first

    def expr(self):
        return self._binary(0)

    _LEVELS = [("||",), ("&&",), ("==", "!=", "<", "<=", ">", ">="), ("|",), ("^",), ("&",), ("+", "-")]

    def _binary(self, level: int):
        if level == len(self._LEVELS):
            return self._unary()
        left = self._binary(level + 1)
        ops = self._LEVELS[level]
        while self.at(*ops):
            op = self.tok.text
            self.i += 1
            right = self._binary(level + 1)
            if op == "||":
                left = Binop("|", left, right)
            elif op == "&&":
                left = Binop("&", left, right)
            elif level == 2:
                left = Cmp(op, left, right)
                if self.at(*ops):
                    raise self.error("no chained comparison")
            else:
                left = Binop(op, left, right)
        return left

    def _unary(self):
        for sym, op in (("-", "neg"), ("~", "bitnot"), ("!", "lognot")):
            if self.accept(sym):
                return Unop(op, self._unary())
        return self._postfix(self._primary())

    def _postfix(self, e):
        while True:
            if self.at(".") and self.peek().text == "isValid" and self.peek(2).text == "(":
                self.i += 3
                self.expect(")")
                e = Cmp("==", Field(e, VALID), Const(Bits(1, 1), sized=False))
            elif self.accept("."):
                e = Field(e, self.ident())
            elif self.accept("["):
                hi = self.integer()
                self.expect(":")
                lo = self.integer()
                self.expect("]")
                e = SliceE(e, hi, lo)
            else:
                return e

    def _primary(self):
        t = self.tok
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind in ("num", "ip"):
            self.i += 1
            try:
                w, v, radix = _parse_number(t.text)
                if w is None:
                    return _Lit(v, radix)
                return Const(Bits(w, v), sized=radix != "ip", radix=radix)
            except ValueError as exc:
                raise ParseError(str(exc), t.line, t.col) from None
        if t.kind == "id" and t.text in ("true", "false"):
            self.i += 1
            return Const(Bits(1, int(t.text == "true")), radix="bool")
        if t.kind == "id":
            self.i += 1
            return Var(t.text)
        if self.accept("{"):
            fields = []
            while not self.accept("}"):
                n = self.ident()
                self.expect("=")
                fields.append((n, self.expr()))
                if not self.at("}"):
                    self.expect(",")
            return RecordE(tuple(fields))
        raise self.error("expression")


# ---------------------------------------------------------------- width inference


class _Resolver:
    """Assigns widths to unsized literals given the variable shapes in scope."""

    def __init__(self, scope: dict[str, Shape]):
        self.scope = scope

    def shape(self, e) -> Shape | None:
        if isinstance(e, _Lit):
            return None
        if isinstance(e, Const):
            return _value_shape(e.value)
        if isinstance(e, Var):
            # unknown names are reported by validation
            return self.scope.get(e.name)
        if isinstance(e, Field):
            base = self.shape(e.base)
            if isinstance(base, tuple) and e.name in dict(base):
                return dict(base)[e.name]
            return None
        if isinstance(e, SliceE):
            return e.hi - e.lo + 1
        if isinstance(e, Cmp):
            return 1
        if isinstance(e, Binop):
            return self.shape(e.left) or self.shape(e.right)
        if isinstance(e, Unop):
            return 1 if e.op == "lognot" else self.shape(e.arg)
        if isinstance(e, RecordE):
            parts = [(n, self.shape(x)) for n, x in e.fields]
            return None if any(s is None for _, s in parts) else tuple(parts)
        raise ParseError(f"unknown expression {e!r}")

    def fix(self, e, want: Shape | None = None) -> Expr:
        if isinstance(e, _Lit):
            if not isinstance(want, int):
                raise ParseError(f"cannot infer the width of literal {e.value}")
            if e.value >= 1 << want:
                raise ParseError(f"literal {e.value} does not fit in {want} bits")
            return Const(Bits(want, e.value), sized=False, radix=e.radix)
        if isinstance(e, (Const, Var)):
            return e
        if isinstance(e, Field):
            return Field(self.fix(e.base), e.name)
        if isinstance(e, SliceE):
            return SliceE(self.fix(e.base), e.hi, e.lo)
        if isinstance(e, Cmp):
            w = self.shape(e.left) or self.shape(e.right)
            return Cmp(e.op, self.fix(e.left, w), self.fix(e.right, w))
        if isinstance(e, Binop):
            w = self.shape(e.left) or self.shape(e.right) or want
            return Binop(e.op, self.fix(e.left, w), self.fix(e.right, w))
        if isinstance(e, Unop):
            w = 1 if e.op == "lognot" and self.shape(e.arg) is None else (self.shape(e.arg) or want)
            return Unop(e.op, self.fix(e.arg, w))
        if isinstance(e, RecordE):
            sub = dict(want) if isinstance(want, tuple) else {}
            return RecordE(tuple((n, self.fix(x, sub.get(n))) for n, x in e.fields))
        raise ParseError(f"unknown expression {e!r}")


def _value_shape(v) -> Shape:
    if isinstance(v, Bits):
        return v.width
    return tuple((n, _value_shape(x)) for n, x in v.fields)


# ---------------------------------------------------------------- programs


class _ProgramParser(_Parser):
    def program(self) -> tuple[list, list]:
        """Raw declarations (with unresolved literals) and the entry block."""
        decls: list = []
        entry = None
        if self.tok.kind == "eof":
            raise self.error("declaration")
        while self.tok.kind != "eof":
            kw = self.tok.text
            if kw in ("header", "struct"):
                self.i += 1
                name = self.ident()
                self.expect("{")
                fields = []
                while not self.accept("}"):
                    t = self.typeref()
                    fields.append((self.ident(), t))
                    self.expect(";")
                decls.append(TypeDecl(name, tuple(fields), kw == "header"))
            elif kw == "global":
                self.i += 1
                t = self.typeref()
                decls.append(GlobalDecl(self.ident(), t))
                self.expect(";")
            elif kw in ("function", "action"):
                self.i += 1
                name = self.ident()
                params = self.params(kw == "action")
                decls.append(("func", name, params, self.block(), kw == "action"))
            elif kw == "extern":
                self.i += 1
                name = self.ident()
                decls.append(ExternDecl(name, self.params(False)))
                self.expect(";")
            elif kw == "table":
                self.i += 1
                decls.append(self.table())
            elif kw == "state":
                self.i += 1
                name = self.ident()
                decls.append(("state", name, self.block()))
            elif kw == "entry":
                if entry is not None:
                    raise self.error("a single entry block")
                self.i += 1
                entry = self.block()
            else:
                raise self.error("declaration")
        if entry is None:
            raise ParseError("missing entry block", self.tok.line, self.tok.col)
        return decls, entry

    def typeref(self):
        if self.at("bit"):
            self.i += 1
            self.expect("<")
            w = self.integer()
            self.expect(">")
            return w
        return self.ident()

    def params(self, is_action: bool) -> tuple[Param, ...]:
        self.expect("(")
        out = []
        while not self.accept(")"):
            d = Direction.NONE
            if self.at("in", "out", "inout"):
                d = Direction(self.tok.text)
                self.i += 1
            elif not is_action:
                d = Direction.IN
            t = self.typeref()
            out.append(Param(self.ident(), d, t))
            if not self.at(")"):
                self.expect(",")
        return tuple(out)

    def table(self) -> TableDecl:
        name = self.ident()
        self.expect("{")
        self.expect("key")
        self.expect("=")
        self.expect("{")
        keys = []
        while not self.accept("}"):
            keys.append(self.expr())
            self.expect(";")
        self.expect("actions")
        self.expect("=")
        self.expect("{")
        actions = []
        while not self.accept("}"):
            actions.append(self.ident())
            self.expect(";")
        self.expect("}")
        return TableDecl(name, tuple(keys), tuple(actions))

    def block(self):
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            stmts.append(self.stmt())
        return seq(*stmts) if stmts else Skip()

    def stmt(self):
        if self.at("{"):
            return self.block()
        if self.accept("skip"):
            self.expect(";")
            return Skip()
        if self.accept("if"):
            self.expect("(")
            c = self.expr()
            self.expect(")")
            then = self.stmt()
            orelse = self.stmt() if self.accept("else") else Skip()
            return If(c, then, orelse)
        if self.accept("transition"):
            if self.accept("select"):
                self.expect("(")
                e = self.expr()
                self.expect(")")
                self.expect("{")
                arms, default = [], None
                while not self.accept("}"):
                    if self.accept("default"):
                        self.expect(":")
                        default = self.ident()
                    else:
                        v = self._primary()
                        self.expect(":")
                        arms.append((v, self.ident()))
                    self.expect(";")
                if default is None:
                    raise self.error("a default arm")
                return ("select", e, arms, default)
            st = self.ident()
            self.expect(";")
            return ("goto", st)
        if self.tok.kind == "id" and self.peek().text == "." and self.peek(2).text == "apply":
            name = self.ident()
            self.i += 2
            self.expect("(")
            self.expect(")")
            self.expect(";")
            return Apply(name)
        if self.tok.kind == "id" and self.peek().text == "(":
            name = self.ident()
            self.expect("(")
            args = []
            while not self.accept(")"):
                args.append(self.expr())
                if not self.at(")"):
                    self.expect(",")
            self.expect(";")
            return ("call", name, args)
        lhs = self._postfix(self._primary())
        lv = expr_to_lval(lhs)
        if lv is None:
            raise self.error("statement")
        self.expect("=")
        rhs = self.expr()
        self.expect(";")
        return ("assign", lv, rhs)


def _resolve_stmt(prog_sig: dict, scope: dict[str, Shape], s) -> Stmt:
    r = _Resolver(scope)
    if isinstance(s, tuple):
        kind = s[0]
        if kind == "assign":
            _, lv, rhs = s
            want = r.shape(lval_to_expr(lv))
            return Assign(lv, r.fix(rhs, want))
        if kind == "call":
            _, name, args = s
            params = prog_sig.get(name)
            if params is None or len(params) != len(args):
                return Call(name, tuple(r.fix(a, r.shape(a)) for a in args))
            return Call(name, tuple(r.fix(a, w) for a, w in zip(args, params)))
        if kind == "goto":
            return Transition(Const(Bits(1, 0)), (), s[1])
        if kind == "select":
            _, e, arms, default = s
            w = r.shape(e)
            out = []
            for v, st in arms:
                c = r.fix(v, w)
                if not isinstance(c, Const):
                    raise ParseError("select arms must be constants")
                out.append((c.value, st))
            return Transition(r.fix(e), tuple(out), default)
    if isinstance(s, Seq):
        return Seq(_resolve_stmt(prog_sig, scope, s.first), _resolve_stmt(prog_sig, scope, s.second))
    if isinstance(s, If):
        return If(
            r.fix(s.cond, 1),
            _resolve_stmt(prog_sig, scope, s.then),
            _resolve_stmt(prog_sig, scope, s.orelse),
        )
    return s


def parse_program(text: str, validate: bool = True) -> Program:
    """Parse and (by default) validate a program; raises ParseError or ProgramError."""
    raw, raw_entry = _ProgramParser(text).program()
    types = [d for d in raw if isinstance(d, TypeDecl)]
    shell = Program(types, Skip())
    try:
        gscope = {d.name: shell.shape(d.type) for d in raw if isinstance(d, GlobalDecl)}
    except KeyError as exc:
        raise ProgramError([Diagnostic("undeclared-name", f"unknown type {exc.args[0]}", "globals")]) from None
    sigs: dict[str, list[Shape]] = {}
    for d in raw:
        params = d[2] if isinstance(d, tuple) and d[0] == "func" else (d.params if isinstance(d, ExternDecl) else None)
        if params is not None:
            try:
                sigs[d[1] if isinstance(d, tuple) else d.name] = [shell.shape(p.type) for p in params]
            except KeyError as exc:
                raise ProgramError([Diagnostic("undeclared-name", f"unknown type {exc.args[0]}", "params")]) from None
    gscope.setdefault(REJECTED, 1)
    decls = []
    for d in raw:
        if isinstance(d, tuple) and d[0] == "func":
            _, name, params, body, is_action = d
            scope = dict(gscope)
            scope.update({p.name: shell.shape(p.type) for p in params})
            decls.append(FuncDecl(name, params, _resolve_stmt(sigs, scope, body), is_action))
        elif isinstance(d, tuple):
            decls.append(StateDecl(d[1], _resolve_stmt(sigs, gscope, d[2])))
        elif isinstance(d, TableDecl):
            r = _Resolver(gscope)
            decls.append(TableDecl(d.name, tuple(r.fix(k, r.shape(k)) for k in d.keys), d.actions))
        else:
            decls.append(d)
    entry = _resolve_stmt(sigs, gscope, raw_entry)
    prog = Program(decls, entry)
    if validate:
        diags = validate_program(prog)
        if diags:
            raise ProgramError(diags)
    return prog


# ---------------------------------------------------------------- printing

_PREC = {"||": 0, "&&": 1, "cmp": 2, "|": 3, "^": 4, "&": 5, "+": 6, "-": 6}


def _boolish(e: Expr) -> bool:
    if isinstance(e, Cmp):
        return True
    if isinstance(e, Unop) and e.op == "lognot":
        return True
    if isinstance(e, Binop) and e.op in ("&", "|"):
        return _boolish(e.left) and _boolish(e.right)
    return isinstance(e, Const) and e.radix == "bool"


def _op_text(e) -> tuple[str, int]:
    if isinstance(e, Cmp):
        return e.op, _PREC["cmp"]
    if e.op in ("&", "|") and _boolish(e):
        t = "&&" if e.op == "&" else "||"
        return t, _PREC[t]
    return e.op, _PREC[e.op]


def print_expr(e: Expr, ctx: int = -1) -> str:
    if isinstance(e, Const):
        return _print_const(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Cmp) and e.op == "==" and isinstance(e.left, Field) and e.left.name == VALID \
            and e.right == Const(Bits(1, 1)):
        return f"{print_expr(e.left.base, 99)}.isValid()"
    if isinstance(e, Field):
        return f"{print_expr(e.base, 99)}.{e.name}"
    if isinstance(e, SliceE):
        return f"{print_expr(e.base, 99)}[{e.hi}:{e.lo}]"
    if isinstance(e, Unop):
        sym = {"neg": "-", "bitnot": "~", "lognot": "!"}[e.op]
        return f"{sym}{print_expr(e.arg, 50)}"
    if isinstance(e, (Binop, Cmp)):
        text, prec = _op_text(e)
        # left-associative: the right operand needs strictly higher precedence
        s = f"{print_expr(e.left, prec)} {text} {print_expr(e.right, prec + 1)}"
        return f"({s})" if prec < ctx else s
    if isinstance(e, RecordE):
        return "{" + ", ".join(f"{n} = {print_expr(x)}" for n, x in e.fields) + "}"
    raise ValueError(f"cannot print {e!r}")


def _print_const(c: Const) -> str:
    v = c.value
    if not isinstance(v, Bits):
        return "{" + ", ".join(f"{n} = {_print_const(Const(x))}" for n, x in v.fields) + "}"
    if c.radix == "bool" and v.width == 1:
        return "true" if v.value else "false"
    body = format_number(v.value, v.width, c.radix)
    if c.radix == "ip" and v.width == 32:
        return body
    return body if not c.sized else f"{v.width}w{body}"


def print_lval(lv: LValue) -> str:
    return print_expr(lval_to_expr(lv))


def _print_type(t) -> str:
    return f"bit<{t}>" if isinstance(t, int) else t


def _print_params(params, is_action: bool) -> str:
    parts = []
    for p in params:
        d = "" if p.direction == Direction.NONE else f"{p.direction.value} "
        parts.append(f"{d}{_print_type(p.type)} {p.name}")
    return "(" + ", ".join(parts) + ")"


def _print_block(s: Stmt, indent: int) -> list[str]:
    if isinstance(s, Skip):
        return ["{}"]
    pad = "    " * (indent + 1)
    out = ["{"]
    for st in flatten_seq(s):
        for i, line in enumerate(_print_stmt(st, indent + 1)):
            out.append((pad if i == 0 else "") + line)
    out.append("    " * indent + "}")
    return out


def _print_stmt(s: Stmt, indent: int) -> list[str]:
    """Lines of ``s``; the first line carries no indentation, later lines are absolute."""
    pad = "    " * indent
    if isinstance(s, Skip):
        return ["skip;"]
    if isinstance(s, Assign):
        return [f"{print_lval(s.lhs)} = {print_expr(s.rhs)};"]
    if isinstance(s, Call):
        return [f"{s.name}(" + ", ".join(print_expr(a) for a in s.args) + ");"]
    if isinstance(s, Apply):
        return [f"{s.table}.apply();"]
    if isinstance(s, Transition):
        if not s.arms and s.scrutinee == Const(Bits(1, 0)):
            return [f"transition {s.default};"]
        lines = [f"transition select({print_expr(s.scrutinee)}) {{"]
        for v, st in s.arms:
            lines.append(f"{pad}    {_print_const(Const(v, sized=False, radix=_arm_radix(s, v)))}: {st};")
        lines.append(f"{pad}    default: {s.default};")
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, If):
        then = _print_block(s.then, indent)
        lines = [f"if ({print_expr(s.cond)}) " + then[0]] + then[1:]
        if not isinstance(s.orelse, Skip):
            other = _print_block(s.orelse, indent)
            lines[-1] += " else " + other[0]
            lines += other[1:]
        return lines
    if isinstance(s, Seq):
        return _print_block(s, indent)
    raise ValueError(f"cannot print {s!r}")


def _arm_radix(s: Transition, v: Bits) -> str:
    return "hex" if v.width >= 8 else "dec"


def print_program(prog: Program) -> str:
    out: list[str] = []
    for d in prog.decls:
        if isinstance(d, TypeDecl):
            out.append(f"{'header' if d.is_header else 'struct'} {d.name} {{")
            out += [f"    {_print_type(t)} {n};" for n, t in d.fields]
            out.append("}")
        elif isinstance(d, GlobalDecl):
            out.append(f"global {_print_type(d.type)} {d.name};")
        elif isinstance(d, FuncDecl):
            kw = "action" if d.is_action else "function"
            body = _print_block(d.body, 0)
            out.append(f"{kw} {d.name}{_print_params(d.params, d.is_action)} {body[0]}")
            out += body[1:]
        elif isinstance(d, ExternDecl):
            out.append(f"extern {d.name}{_print_params(d.params, False)};")
        elif isinstance(d, TableDecl):
            out.append(f"table {d.name} {{")
            out.append("    key = { " + " ".join(print_expr(k) + ";" for k in d.keys) + " }")
            out.append("    actions = { " + " ".join(a + ";" for a in d.actions) + " }")
            out.append("}")
        elif isinstance(d, StateDecl):
            body = _print_block(d.body, 0)
            out.append(f"state {d.name} {body[0]}")
            out += body[1:]
    body = _print_block(prog.entry, 0)
    out.append(f"entry {body[0]}")
    out += body[1:]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- slice-type syntax


_SLICE = re.compile(
    r"""\s*(?:
        \(\s*(?P<tiv>[^,()]+(?:,[^,()]+)?)\s*,\s*(?P<tlab>[LH])\s*\)
      | (?P<iv>\*|\[[^\]]*\]|⟨[^⟩]*⟩|[0-9.*]+)
        (?:\s*\^?\s*(?P<lab>[LH])(?![A-Za-z0-9]))?
        (?:\s*_\s*(?P<w>\d+))?
    )\s*""",
    re.VERBOSE,
)


def _bound(text: str) -> tuple[int, int]:
    """A bound; dotted quads with ``*`` bytes denote a range."""
    text = text.strip()
    if "." in text:
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad dotted quad {text}")
        lo = hi = 0
        for p in parts:
            a, b = (0, 255) if p == "*" else (int(p), int(p))
            if b > 255:
                raise ValueError(f"bad dotted quad {text}")
            lo, hi = (lo << 8) | a, (hi << 8) | b
        return lo, hi
    _, v, _ = _parse_number(text)
    return v, v


def _interval(text: str, width: int | None) -> Interval:
    text = text.strip()
    if text.startswith(("[", "⟨")):
        text = text[1:-1].strip()
    elif text.startswith("("):
        text = text[1:-1].strip()
    if text == "":
        return Interval(1, 0)
    top = None if width is None else (1 << width) - 1
    if text == "*":
        if top is None:
            raise ValueError("a full interval needs a width")
        return Interval(0, top)
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        lo, hi = _bound(parts[0])
    elif len(parts) == 2:
        lo = _bound(parts[0])[0]
        if parts[1] == "*":
            if top is None:
                raise ValueError("an open interval needs a width")
            hi = top
        else:
            hi = _bound(parts[1])[1]
    else:
        raise ValueError(f"bad interval {text!r}")
    if lo > hi:
        raise ValueError(f"interval bounds out of order: {lo} > {hi}")
    if top is not None and hi > top:
        raise ValueError(f"bound {hi} does not fit in {width} bits")
    return Interval(lo, hi)


def parse_type(text: str, width: int) -> BvType:
    """A sliced type like ``[0]^H_1 · *^L_3`` for a leaf of ``width`` bits."""
    pieces = [p.strip() for p in re.split(r"·|\s\|\s", text)]
    raw = []
    for p in pieces:
        m = _SLICE.fullmatch(p)
        if m is None:
            raise ValueError(f"bad slice {p.strip()!r}")
        if m.group("tiv") is not None:
            raw.append((m.group("tiv"), m.group("tlab"), None))
        else:
            raw.append((m.group("iv"), m.group("lab") or "L", m.group("w")))
    known = sum(int(w) for _, _, w in raw if w is not None)
    missing = [i for i, (_, _, w) in enumerate(raw) if w is None]
    if len(missing) > 1:
        raise ValueError("only one slice may omit its width")
    slices = []
    for i, (iv, lab, w) in enumerate(raw):
        sw = int(w) if w is not None else width - known
        if sw < 1:
            raise ValueError("slice widths do not tile the declared width")
        slices.append(Slice(_interval(iv, sw), HIGH if lab == "H" else LOW, sw))
    t = BvType(tuple(slices))
    if t.width != width:
        raise ValueError(f"slices cover {t.width} bits, the declared width is {width}")
    return t


# ---------------------------------------------------------------- policy files


@dataclass
class PolicyFile:
    inputs: list[PolicyCase]
    outputs: list[PolicyCase]


def _lines(text: str) -> Iterator[tuple[int, str]]:
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield n, line


_ENTRY_SEP = re.compile(r"\s*(?:↦|:(?!\d)|=(?!=))\s*")


def parse_policy(text: str, prog: Program, default_section: str = "input") -> PolicyFile:
    layout = prog.global_layout()
    sections: dict[str, list[tuple[str, dict[str, BvType]]]] = {"input": [], "output": []}
    section = default_section
    current: dict[str, BvType] | None = None

    for n, line in _lines(text):
        if line.startswith("["):
            name = line.strip("[] ")
            if name not in sections:
                raise ParseError(f"unknown section {name}", n, 1)
            section, current = name, None
            continue
        if line.startswith("case"):
            name = line[4:].strip() or f"case{len(sections[section]) + 1}"
            current = {}
            sections[section].append((name, current))
            continue
        m = re.match(r"([A-Za-z_$][\w$.]*)", line)
        if m is None:
            raise ParseError("expected an lvalue", n, 1)
        path, rest = m.group(1), line[m.end():]
        sep = _ENTRY_SEP.match(rest)
        if sep is None:
            raise ParseError("expected ':' after the lvalue", n, m.end() + 1)
        if path not in layout:
            raise ParseError(f"unknown lvalue {path}", n, 1)
        if current is None:
            current = {}
            sections[section].append((f"case{len(sections[section]) + 1}", current))
        if path in current:
            raise ParseError(f"{path} given twice in one case", n, 1)
        try:
            current[path] = parse_type(rest[sep.end():].rstrip(";"), layout[path])
        except ValueError as exc:
            raise ParseError(str(exc), n, 1) from None

    return PolicyFile(
        [make_case(prog, name, e, True) for name, e in sections["input"]],
        [make_case(prog, name, e, False) for name, e in sections["output"]],
    )


# ---------------------------------------------------------------- contract files


def _parse_expr(text: str, scope: dict[str, Shape], want: Shape | None = None) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("end of expression")
    return _Resolver(scope).fix(e, want if want is not None else _Resolver(scope).shape(e))


def _parse_lval(text: str, scope: dict[str, Shape]) -> tuple[LValue, Shape]:
    e = _parse_expr(text, scope)
    lv = expr_to_lval(e)
    if lv is None:
        raise ValueError(f"{text.strip()!r} is not an lvalue")
    return lv, _Resolver(scope).shape(e)


def _split_args(text: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch in "([⟨":
            depth += 1
        elif ch in ")]⟩":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return [a.strip() for a in out]


def _typemap(body: str, scope: dict[str, Shape]) -> tuple[tuple[LValue, Type], ...]:
    out = []
    for item in body.split(";"):
        item = item.strip()
        if not item:
            continue
        m = re.match(r"(.+?)\s*(?:↦|:(?!\d))\s*(.+)", item)
        if m is None:
            raise ValueError(f"bad entry {item!r}")
        lv, shape = _parse_lval(m.group(1), scope)
        if not isinstance(shape, int):
            raise ValueError(f"{m.group(1)} is not a bitvector")
        out.append((lv, parse_type(m.group(2), shape)))
    return tuple(out)


def parse_contracts(text: str, prog: Program) -> Contracts:
    gscope = {n: prog.shape(t) for n, t in prog.globals.items()}
    out = Contracts()
    section: tuple[str, str] | None = None
    rows: list[TableRow] = []
    keys: list[Expr] | None = None
    tuples: list[ExternTuple] = []
    impl = ExternImpl()
    entries: list = []
    default = None

    def flush():
        nonlocal rows, keys, tuples, impl, entries, default
        if section is None:
            return
        kind, name = section
        if kind == "table":
            decl = prog.tables[name]
            out.tables[name] = TableContract(name, tuple(keys) if keys else decl.keys, tuple(rows))
        elif kind == "extern":
            out.externs[name] = ExternContract(name, tuple(tuples), impl)
        else:
            if default is None:
                raise ParseError(f"entries for {name} need a default row")
            out.entries[name] = TableEntries(tuple(entries), default)
        rows, keys, tuples, impl, entries, default = [], None, [], ExternImpl(), [], None

    for n, line in _lines(text):
        try:
            m = re.fullmatch(r"\[\s*(table|extern|entries)\s+(\w+)\s*\]", line)
            if m:
                flush()
                kind, name = m.groups()
                known = prog.externs if kind == "extern" else prog.tables
                if name not in known:
                    raise ValueError(f"unknown {'extern' if kind == 'extern' else 'table'} {name}")
                section = (kind, name)
                continue
            if section is None:
                raise ValueError("entry outside a section")
            kind, name = section
            if kind == "table":
                if line.startswith("key "):
                    keys = (keys or []) + [_parse_expr(line[4:], gscope)]
                    continue
                m = re.fullmatch(r"row\s+(.+?)\s*->\s*(\w+)\s*\((.*)\)", line)
                if m is None:
                    raise ValueError("expected 'row <condition> -> action(types)'")
                phi = _parse_expr(m.group(1), gscope, 1)
                action = m.group(2)
                if action not in prog.funcs:
                    raise ValueError(f"unknown action {action}")
                params = prog.funcs[action].params
                args = _split_args(m.group(3))
                if len(args) != len(params):
                    raise ValueError(f"{action} takes {len(params)} arguments, got {len(args)}")
                types = []
                for p, a in zip(params, args):
                    w = prog.shape(p.type)
                    if not isinstance(w, int):
                        raise ValueError(f"parameter {p.name} is not a bitvector")
                    types.append(parse_type(a, w))
                rows.append(TableRow(phi, action, tuple(types)))
            elif kind == "extern":
                decl = prog.externs[name]
                scope = dict(gscope)
                scope.update({p.name: prog.shape(p.type) for p in decl.params})
                if line.startswith("impl"):
                    parts = line.split()
                    if parts[1:] == ["const"]:
                        impl = ExternImpl("const")
                    elif len(parts) == 4 and parts[1] == "copy":
                        impl = ExternImpl("copy", _parse_lval(parts[2], scope)[0], _parse_lval(parts[3], scope)[0])
                    else:
                        raise ValueError("expected 'impl const' or 'impl copy <src> <dst>'")
                    continue
                m = re.fullmatch(r"case\s+pre\s*\{(.*?)\}\s*when\s+(.+?)\s+post\s*\{(.*?)\}", line)
                if m is None:
                    raise ValueError("expected 'case pre { ... } when <condition> post { ... }'")
                tuples.append(
                    ExternTuple(_typemap(m.group(1), scope), _parse_expr(m.group(2), scope, 1), _typemap(m.group(3), scope))
                )
            else:
                decl = prog.tables[name]
                m = re.fullmatch(r"(.+?)\s*->\s*(\w+)\s*\((.*)\)", line)
                if m is None:
                    raise ValueError("expected '<guard> -> action(values)'")
                action = m.group(2)
                if action not in decl.actions:
                    raise ValueError(f"{action} is not an action of {name}")
                params = prog.funcs[action].params
                args = _split_args(m.group(3))
                if len(args) != len(params):
                    raise ValueError(f"{action} takes {len(params)} arguments, got {len(args)}")
                vals = tuple(_parse_expr(a, {}, prog.shape(p.type)).value for p, a in zip(params, args))
                if m.group(1).strip() == "default":
                    default = (action, vals)
                else:
                    entries.append((_parse_expr(m.group(1), gscope, 1), action, vals))
        except (ValueError, KeyError) as exc:
            raise ParseError(str(exc), n, 1) from None
        except ParseError as exc:
            raise ParseError(f"{exc}", n, 1) from None
    flush()
    return out


# ---------------------------------------------------------------- state files


def parse_state(text: str, prog: Program) -> dict[str, Bits]:
    """Initial globals from ``lval = value`` lines; unlisted leaves are zero."""
    layout = prog.global_layout()
    g = {k: Bits(w, 0) for k, w in layout.items()}
    for n, line in _lines(text):
        m = re.fullmatch(r"([A-Za-z_$][\w$.]*)\s*=\s*(\S+)", line)
        if m is None:
            raise ParseError("expected 'lvalue = value'", n, 1)
        path, val = m.groups()
        if path not in layout:
            raise ParseError(f"unknown lvalue {path}", n, 1)
        try:
            _, v, _ = _parse_number(val)
            g[path] = Bits(layout[path], v)
        except ValueError as exc:
            raise ParseError(str(exc), n, 1) from None
    return g


def render_state(g: dict[str, Bits]) -> str:
    return "".join(f"{k} = {v.value}\n" for k, v in g.items())


def normalize_ws(text: str) -> str:
    return re.sub(r"\s+", "", text)
