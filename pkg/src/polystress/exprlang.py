"""A small arithmetic expression language evaluated in jet arithmetic.

Grammar (lowest to highest precedence)::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := atom ("^" exponent)?
    exponent := ["-"] INT | "(" ["-"] INT ")"
    atom     := NUMBER | "pi" | VAR | FUNC "(" expr ")" | "(" expr ")"

Variables are ``x1..x4`` (domain coordinates) and ``y1..y4`` (target
coordinates).  Exponents are integer literals so jet evaluation stays exact;
real powers go through ``exp``/``log``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import jets
from .errors import DomainError, ExprSyntaxError
from .jets import Jet

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
VARIABLES = tuple(f"x{i}" for i in range(1, 5)) + tuple(f"y{i}" for i in range(1, 5))


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call]

_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


# --------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte, text)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("eof", "", byte))
    return toks


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.offset, self.text)

    def eat(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.eat(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            if self.eat("+"):
                left = Add(left, self.term())
            elif self.eat("-"):
                left = Sub(left, self.term())
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            if self.eat("*"):
                left = Mul(left, self.unary())
            elif self.eat("/"):
                left = Div(left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        if self.eat("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.eat("^"):
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.eat("(")
        sign = -1 if self.eat("-") else 1
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.error("exponent must be an integer literal", tok)
        self.i += 1
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error(f"numeric literal {tok.text!r} overflows", tok)
            return Num(value)
        if tok.kind == "ident":
            self.i += 1
            name = tok.text
            if name == "pi":
                return Num(math.pi)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(name, arg)
            if name in VARIABLES:
                if name not in self.allowed:
                    raise self.error(f"variable {name!r} is not allowed here", tok)
                return Var(name)
            raise self.error(f"unknown identifier {name!r}", tok)
        if self.eat("("):
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise self.error(f"expected an operand, found {found!r}", tok)


def parse(text: str, allowed_vars: Sequence[str] = VARIABLES) -> Expr:
    """Parse ``text`` into an AST.  Raises :class:`ExprSyntaxError`."""
    return _Parser(text, frozenset(allowed_vars)).parse()


def to_text(e: Expr) -> str:
    """Canonical fully-parenthesized form; ``parse(to_text(e)) == e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)}^{e.exponent})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    return f"({to_text(e.left)}{_BINARY[type(e)]}{to_text(e.right)})"


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg,)):
        return variables(e.operand)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Call):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


# --------------------------------------------------------------------------
# symbolic differentiation

_ZERO = Num(0.0)
_ONE = Num(1.0)


def _s_add(a: Expr, b: Expr) -> Expr:
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return Add(a, b)


def _s_sub(a: Expr, b: Expr) -> Expr:
    if b == _ZERO:
        return a
    if a == _ZERO:
        return Neg(b)
    return Sub(a, b)


def _s_mul(a: Expr, b: Expr) -> Expr:
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return Mul(a, b)


def _s_div(a: Expr, b: Expr) -> Expr:
    if a == _ZERO:
        return _ZERO
    if b == _ONE:
        return a
    return Div(a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Partial derivative of ``e`` with respect to ``var``, lightly simplified."""
    if isinstance(e, Num):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.name == var else _ZERO
    if isinstance(e, Neg):
        d = differentiate(e.operand, var)
        return _ZERO if d == _ZERO else Neg(d)
    if isinstance(e, (Add, Sub)):
        dl, dr = differentiate(e.left, var), differentiate(e.right, var)
        return _s_add(dl, dr) if isinstance(e, Add) else _s_sub(dl, dr)
    if isinstance(e, Mul):
        return _s_add(_s_mul(differentiate(e.left, var), e.right), _s_mul(e.left, differentiate(e.right, var)))
    if isinstance(e, Div):
        dl, dr = differentiate(e.left, var), differentiate(e.right, var)
        return _s_sub(_s_div(dl, e.right), _s_div(_s_mul(e.left, dr), Pow(e.right, 2)))
    if isinstance(e, Pow):
        db = differentiate(e.base, var)
        if db == _ZERO or e.exponent == 0:
            return _ZERO
        inner = _ONE if e.exponent == 1 else Pow(e.base, e.exponent - 1)
        return _s_mul(_s_mul(Num(float(e.exponent)), inner), db)
    if isinstance(e, Call):
        da = differentiate(e.arg, var)
        if da == _ZERO:
            return _ZERO
        a = e.arg
        outer = {
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "exp": lambda: Call("exp", a),
            "log": lambda: Div(_ONE, a),
            "sqrt": lambda: Div(_ONE, Mul(Num(2.0), Call("sqrt", a))),
        }[e.func]()
        return _s_mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# evaluation


def _real_call(func: str, v):
    v = np.asarray(v, dtype=float)
    if func == "log" and np.any(v <= 0):
        raise DomainError("log of a non-positive number")
    if func == "sqrt" and np.any(v < 0):
        raise DomainError("sqrt of a negative number")
    return getattr(np, func)(v)


def _real_pow(base, n: int):
    base = np.asarray(base, dtype=float)
    if n < 0 and np.any(base == 0):
        raise DomainError("negative power of zero")
    return base**n


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate with variables bound to numbers or jets."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise KeyError(f"no value bound for variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, env)
    if isinstance(e, Pow):
        b = evaluate(e.base, env)
        return b**e.exponent if isinstance(b, Jet) else _real_pow(b, e.exponent)
    if isinstance(e, Call):
        a = evaluate(e.arg, env)
        return jets.ELEMENTARY[e.func](a) if isinstance(a, Jet) else _real_call(e.func, a)
    left = evaluate(e.left, env)
    right = evaluate(e.right, env)
    if isinstance(e, Add):
        return left + right
    if isinstance(e, Sub):
        return left - right
    if isinstance(e, Mul):
        return left * right
    if not isinstance(right, Jet) and np.any(np.asarray(right) == 0):
        raise DomainError("division by zero")
    return left / right


def as_jet(value, num_vars: int, order: int) -> Jet:
    """Promote a constant result (expression without variables) to a jet."""
    if isinstance(value, Jet):
        return value
    return jets.jet_constant(value, num_vars, order)


def eval_jet(e: Expr, point, order: int, allowed_vars: Sequence[str] | None = None) -> Jet:
    """Jet of ``e`` around ``point``; variable ``allowed_vars[i]`` is coordinate i.

    ``point`` may carry leading batch axes (last axis = coordinates).
    """
    point = np.asarray(point, dtype=float)
    if point.ndim == 0:
        point = point.reshape(1)
    if allowed_vars is None:
        allowed_vars = tuple(sorted(variables(e))) or ("x1",)
    if point.shape[-1] != len(allowed_vars):
        raise ValueError(
            f"point has {point.shape[-1]} coordinates but {len(allowed_vars)} variables are declared"
        )
    xs = jets.jet_variables(point, order)
    env = dict(zip(allowed_vars, xs))
    out = evaluate(e, env)
    if isinstance(out, Jet):
        return out
    return jets.jet_constant(np.broadcast_to(out, point.shape[:-1]), len(allowed_vars), order)


def eval_real(e: Expr, env: Mapping[str, object]):
    return evaluate(e, env)
