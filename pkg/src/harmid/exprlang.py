"""A small smooth-expression language for metric components and fields.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := number | ident | ident '(' expr ')' | '(' expr ')'

Unary minus binds looser than ``^``, so ``-x^2`` is ``-(x^2)``, while an
exponent may itself be negated (``x^-1``).  ``pi`` and ``e`` are built-in
constants.  Exponents must be constant expressions.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import jet as _jet
from .jet import Jet

__all__ = [
    "Number",
    "Var",
    "Const",
    "Unary",
    "Binary",
    "Call",
    "Expr",
    "ExprSyntaxError",
    "UnboundVariable",
    "FUNCTIONS",
    "parse",
    "format_expr",
    "eval_jet",
    "evaluate",
    "variables",
    "bind",
]

FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1}
CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # only "neg"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # add, sub, mul, div, pow
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Union[Number, Var, Const, Unary, Binary, Call]


class ExprSyntaxError(ValueError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnboundVariable(ValueError):
    def __init__(self, name: str, coords: Sequence[str]):
        super().__init__(f"variable {name!r} is not a chart coordinate {tuple(coords)}")
        self.name = name


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)
_BINOPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_SYMBOL = {v: k for k, v in _BINOPS.items()}


def _tokenize(text: str):
    tokens, pos = [], 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.peek()
        if kind != "op" or text != value:
            raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", off, {value})
        return self.take()

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off, {"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = _BINOPS[self.take()[1]]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = _BINOPS[self.take()[1]]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            at = self.peek()[2]
            exponent = self.unary()
            if variables(exponent):
                raise ExprSyntaxError("variable exponent under '^'", at)
            return Binary("pow", base, exponent)
        return base

    def primary(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Number(float(text))
        if kind == "id":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", off, set(FUNCTIONS))
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", off
                    )
                return Call(text, tuple(args))
            if text in CONSTANTS:
                return Const(text)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(
            f"unexpected {text or 'end of input'!r}", off, {"number", "identifier", "(", "-"}
        )


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


def _num(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_expr(node: Expr) -> str:
    """Fully parenthesized text; ``parse(format_expr(a)) == a``."""
    if isinstance(node, Number):
        if node.value < 0 or not math.isfinite(node.value):
            raise ValueError(f"literal {node.value!r} has no source form")
        return _num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Unary):
        return f"(-{format_expr(node.operand)})"
    if isinstance(node, Binary):
        return f"({format_expr(node.left)} {_SYMBOL[node.op]} {format_expr(node.right)})"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(format_expr(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.operand)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        return set().union(*(variables(a) for a in node.args))
    return set()


def bind(node: Expr, coords: Sequence[str]) -> Expr:
    """Check that every variable of ``node`` is one of ``coords``."""
    for name in sorted(variables(node)):
        if name not in coords:
            raise UnboundVariable(name, coords)
    return node


def _constant_value(node: Expr) -> float:
    return float(evaluate(node, {}))


def eval_jet(node: Expr, coords: Sequence[str], point, order: int) -> Jet:
    """Jet of ``node`` at ``point`` (shape ``(m,)`` or ``(..., m)``)."""
    point = np.asarray(point, dtype=float)
    dim = len(coords)
    if point.shape[-1:] != (dim,):
        raise ValueError(f"point has trailing size {point.shape[-1:]}, chart has {dim} coordinates")
    bind(node, coords)
    seeds = {name: _jet.seed_variable(i, point[..., i], dim, order) for i, name in enumerate(coords)}
    out = _eval_jet(node, seeds, dim, order)
    batch = point.shape[:-1]
    if out.shape != batch:
        out = out._like(np.array(np.broadcast_to(out.coeffs, batch + out.coeffs.shape[-1:])))
    return out


def _eval_jet(node, seeds, dim, order) -> Jet:
    if isinstance(node, Number):
        return _jet.constant(node.value, dim, order)
    if isinstance(node, Const):
        return _jet.constant(CONSTANTS[node.name], dim, order)
    if isinstance(node, Var):
        return seeds[node.name]
    if isinstance(node, Unary):
        return -_eval_jet(node.operand, seeds, dim, order)
    if isinstance(node, Call):
        return _jet.apply_univariate(_eval_jet(node.args[0], seeds, dim, order), node.fn)
    if node.op == "pow":
        return _jet.apply_univariate(_eval_jet(node.left, seeds, dim, order), "pow", _constant_value(node.right))
    left = _eval_jet(node.left, seeds, dim, order)
    right = _eval_jet(node.right, seeds, dim, order)
    if left.shape != right.shape:
        shape = np.broadcast_shapes(left.shape, right.shape)
        left = left._like(np.broadcast_to(left.coeffs, shape + left.coeffs.shape[-1:]))
        right = right._like(np.broadcast_to(right.coeffs, shape + right.coeffs.shape[-1:]))
    return _jet.arith(left, right, node.op)


class _NumpyBackend:
    sin, cos, tan, exp = np.sin, np.cos, np.tan, np.exp

    @staticmethod
    def log(x):
        if np.any(np.asarray(x) <= 0):
            raise _jet.JetDomainError("log", float(np.min(x)))
        return np.log(x)

    @staticmethod
    def sqrt(x):
        if np.any(np.asarray(x) <= 0):
            raise _jet.JetDomainError("sqrt", float(np.min(x)))
        return np.sqrt(x)

    @staticmethod
    def pow(x, c):
        if float(c).is_integer():
            x = np.asarray(x, dtype=float)
            if c >= 0:
                return x ** int(c)
            if np.any(np.abs(x) <= 1e-300):
                raise ZeroDivisionError("negative power of (near-)zero")
            return 1.0 / x ** int(-c)
        if np.any(np.asarray(x) <= 0):
            raise _jet.JetDomainError(f"pow(., {c!r})", float(np.min(x)))
        return np.asarray(x, dtype=float) ** c

    @staticmethod
    def const(name):
        return CONSTANTS[name]

    @staticmethod
    def number(value):
        return value


def evaluate(node: Expr, env: Mapping[str, object], backend=_NumpyBackend):
    """Plain (degree-0) evaluation; ``env`` maps variable names to values.

    ``backend`` supplies ``sin, cos, tan, exp, log, sqrt, pow, const,
    number``; the default works on floats and numpy arrays.
    """
    if isinstance(node, Number):
        return backend.number(node.value)
    if isinstance(node, Const):
        return backend.const(node.name)
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariable(node.name, tuple(env)) from None
    if isinstance(node, Unary):
        return -evaluate(node.operand, env, backend)
    if isinstance(node, Call):
        return getattr(backend, node.fn)(evaluate(node.args[0], env, backend))
    if node.op == "pow":
        return backend.pow(evaluate(node.left, env, backend), float(evaluate(node.right, {}, _NumpyBackend)))
    a = evaluate(node.left, env, backend)
    b = evaluate(node.right, env, backend)
    if node.op == "add":
        return a + b
    if node.op == "sub":
        return a - b
    if node.op == "mul":
        return a * b
    if np.any(np.abs(np.asarray(b, dtype=float)) <= 1e-300):
        raise ZeroDivisionError("division by (near-)zero")
    return a / b
