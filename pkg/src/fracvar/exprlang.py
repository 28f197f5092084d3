"""Expression language for Lagrangians, terminal costs and endpoint curves.

Grammar (EBNF, whitespace insensitive)::

    expr   = term  { ("+" | "-") term } ;
    term   = unary { ("*" | "/") unary } ;
    unary  = "-" unary | power ;
    power  = atom [ "^" unary ] ;            (* right associative *)
    atom   = NUMBER | VARIABLE | FUNCTION "(" expr ")" | "(" expr ")" ;
    NUMBER = digits [ "." digits ] [ ("e"|"E") ["+"|"-"] digits ] | "." digits ;

Variables are limited to ``t, x, dx, T, xT, phiT`` and functions to
``sin, cos, exp, log, sqrt, abs`` (plus ``sign``, which only appears as the
derivative of ``abs``; its value at 0 is defined to be 0).

``^`` binds tighter than unary minus and is right associative; ``+ - * /``
are left associative.  Parse errors carry the byte offset into the source
and the set of expected tokens.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "VARIABLES",
    "FUNCTIONS",
    "ExprError",
    "ParseError",
    "UnknownIdentifierError",
    "EvalError",
    "UnboundVariableError",
    "EvalDomainError",
    "parse",
    "evaluate",
    "evaluate_array",
    "differentiate",
    "to_source",
    "variables_of",
]

VARIABLES = frozenset({"t", "x", "dx", "T", "xT", "phiT"})
FUNCTIONS = frozenset({"sin", "cos", "exp", "log", "sqrt", "abs", "sign"})


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Bin, Call]


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error with the byte offset and the tokens that were expected."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        hint = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at byte offset {offset}{hint}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        ParseError.__init__(self, f"unknown identifier '{name}'", offset)


class EvalError(ExprError):
    def __init__(self, expr: "Expr", message: str):
        self.expr = expr
        super().__init__(f"{message} in {to_source(expr)}")


class UnboundVariableError(EvalError):
    def __init__(self, expr: "Expr", name: str):
        self.name = name
        EvalError.__init__(self, expr, f"unbound variable '{name}'")


class EvalDomainError(EvalError):
    pass


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: list[tuple[str, str, int]] = []  # (kind, text, char pos)
        pos = 0
        while pos < len(source):
            m = _TOKEN_RE.match(source, pos)
            if m is None:
                stripped = source[pos:].lstrip()
                if not stripped:
                    break
                bad_pos = len(source) - len(stripped)
                raise ParseError(
                    f"unexpected character {source[bad_pos]!r}",
                    _byte_offset(source, bad_pos),
                )
            if m.lastgroup == "num":
                self.tokens.append(("num", m.group("num"), m.start("num")))
            elif m.lastgroup == "ident":
                self.tokens.append(("ident", m.group("ident"), m.start("ident")))
            else:
                self.tokens.append(("op", m.group("op"), m.start("op")))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: tuple[str, ...]) -> ParseError:
        kind, text, pos = self.peek()
        what = "end of input" if kind == "end" else f"{text!r}"
        return ParseError(
            f"unexpected {what}", _byte_offset(self.source, pos), expected
        )

    def expect_op(self, op: str, expected: tuple[str, ...]) -> None:
        kind, text, _ = self.peek()
        if kind == "op" and text == op:
            self.advance()
            return
        raise self.fail(expected)

    # grammar rules -----------------------------------------------------

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = Bin(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = Bin(text, node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "ident":
            self.advance()
            if text in FUNCTIONS:
                self.expect_op("(", ("(",))
                arg = self.expr()
                self.expect_op(")", (")",))
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            raise UnknownIdentifierError(text, _byte_offset(self.source, pos))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")", (")",))
            return node
        raise self.fail(("number", "variable", "function", "("))


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree."""
    p = _Parser(source)
    node = p.expr()
    kind, text, pos = p.peek()
    if kind != "end":
        raise ParseError(
            f"trailing input {text!r}", _byte_offset(source, pos), ("end of input",)
        )
    return node


# ---------------------------------------------------------------------------
# evaluation

_UNARY_FNS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
}


def _eval(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(e, e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Bin):
        lv = _eval(e.lhs, env)
        rv = _eval(e.rhs, env)
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if e.op == "/":
            if rv == 0.0:
                raise EvalDomainError(e, "division by zero")
            return lv / rv
        # '^'
        try:
            return float(lv**rv)
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise EvalDomainError(e, f"invalid power: {exc}") from None
    if isinstance(e, Call):
        av = _eval(e.arg, env)
        if e.fn == "log":
            if av <= 0.0:
                raise EvalDomainError(e, f"log of non-positive value {av}")
            return math.log(av)
        if e.fn == "sqrt":
            if av < 0.0:
                raise EvalDomainError(e, f"sqrt of negative value {av}")
            return math.sqrt(av)
        if e.fn == "sign":
            return float((av > 0.0) - (av < 0.0))
        try:
            return _UNARY_FNS[e.fn](av)
        except OverflowError as exc:
            raise EvalDomainError(e, f"overflow: {exc}") from None
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate in IEEE double precision; a non-finite result is an error."""
    v = _eval(e, env)
    if not math.isfinite(v):
        raise EvalDomainError(e, f"non-finite result {v}")
    return v


def evaluate_array(e: Expr, env: Mapping[str, "np.ndarray | float"]):
    """Vectorized evaluation over numpy arrays, without domain checks.

    Invalid operations produce nan/inf silently; callers that need node
    diagnostics check finiteness of the result.
    """
    with np.errstate(all="ignore"):
        return _eval_array(e, env)


def _eval_array(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e, e.name) from None
    if isinstance(e, Neg):
        return -_eval_array(e.arg, env)
    if isinstance(e, Bin):
        lv = _eval_array(e.lhs, env)
        rv = _eval_array(e.rhs, env)
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if e.op == "/":
            return np.divide(lv, rv)
        return np.power(lv, rv)
    if isinstance(e, Call):
        av = _eval_array(e.arg, env)
        if e.fn == "sin":
            return np.sin(av)
        if e.fn == "cos":
            return np.cos(av)
        if e.fn == "exp":
            return np.exp(av)
        if e.fn == "log":
            return np.log(av)
        if e.fn == "sqrt":
            return np.sqrt(av)
        if e.fn == "abs":
            return np.abs(av)
        return np.sign(av)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# symbolic differentiation

def _num(v: float) -> Num:
    return Num(float(v))


def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Bin("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _num(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return _num(a.value / b.value)
    if _is_const(a, 0.0):
        return _num(0.0)
    if _is_const(b, 1.0):
        return a
    return Bin("/", a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return _num(1.0)
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return _num(float(a.value**b.value))
        except (ValueError, OverflowError, ZeroDivisionError):
            pass
    return Bin("^", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return _num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to ``var``.

    Literal arithmetic is constant-folded; a power with a non-literal
    exponent is rewritten as exp(exponent*log(base)) first.  ``abs``
    differentiates to ``sign`` (0 at 0 by convention).
    """
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")
    return _diff(e, var)


def _diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Num):
        return _num(0.0)
    if isinstance(e, Var):
        return _num(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        return _neg(_diff(e.arg, var))
    if isinstance(e, Bin):
        if e.op == "+":
            return _add(_diff(e.lhs, var), _diff(e.rhs, var))
        if e.op == "-":
            return _sub(_diff(e.lhs, var), _diff(e.rhs, var))
        if e.op == "*":
            return _add(
                _mul(_diff(e.lhs, var), e.rhs), _mul(e.lhs, _diff(e.rhs, var))
            )
        if e.op == "/":
            num = _sub(
                _mul(_diff(e.lhs, var), e.rhs), _mul(e.lhs, _diff(e.rhs, var))
            )
            return _div(num, _pow(e.rhs, _num(2.0)))
        # '^'
        if isinstance(e.rhs, Num):
            n = e.rhs.value
            return _mul(
                _mul(_num(n), _pow(e.lhs, _num(n - 1.0))), _diff(e.lhs, var)
            )
        rewritten = Call("exp", _mul(e.rhs, Call("log", e.lhs)))
        return _diff(rewritten, var)
    if isinstance(e, Call):
        da = _diff(e.arg, var)
        if e.fn == "sin":
            outer: Expr = Call("cos", e.arg)
        elif e.fn == "cos":
            outer = _neg(Call("sin", e.arg))
        elif e.fn == "exp":
            outer = Call("exp", e.arg)
        elif e.fn == "log":
            outer = _div(_num(1.0), e.arg)
        elif e.fn == "sqrt":
            outer = _div(_num(1.0), _mul(_num(2.0), Call("sqrt", e.arg)))
        elif e.fn == "abs":
            outer = Call("sign", e.arg)
        else:  # sign
            outer = _num(0.0)
        return _mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# printing / inspection

def to_source(e: Expr) -> str:
    """Canonical fully parenthesized form; reparses to a structurally equal tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, Bin):
        return f"({to_source(e.lhs)} {e.op} {to_source(e.rhs)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables_of(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Neg):
        return variables_of(e.arg)
    if isinstance(e, Bin):
        return variables_of(e.lhs) | variables_of(e.rhs)
    if isinstance(e, Call):
        return variables_of(e.arg)
    raise TypeError(f"not an expression node: {e!r}")
