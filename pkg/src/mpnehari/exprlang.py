"""A small arithmetic language for exponent functions and weights.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | primary ;
    primary = number | coord | "absx" | call | "(" expr ")" ;
    call    = fname "(" expr { "," expr } ")" ;
    fname   = "sin" | "cos" | "exp" | "pow" | "chi_ball" ;
    coord   = "x" digit { digit } ;          (* x1 .. xN *)
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;

``absx`` is the Euclidean norm of the point. ``chi_ball(c1, ..., cN, R)`` is
the indicator of the closed ball of radius ``R`` centred at ``c``.
``pow(b, e)`` with ``b < 0`` and non-integer ``e`` is an evaluation error, as
is division by zero.

Trees are immutable; :func:`to_source` prints a fully parenthesised form that
parses back to an equal tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "ExprSyntaxError", "UnknownIdentifier", "EvalError",
    "parse", "to_source", "evaluate", "evaluate_grid", "max_coord_index",
]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "pow": 2, "chi_ball": None}


class ExprSyntaxError(ValueError):
    def __init__(self, position: int, expected, source: str = ""):
        self.position = position
        self.expected = tuple(expected)
        self.source = source
        super().__init__(
            f"syntax error at position {position}: expected {' or '.join(self.expected)}"
        )


class UnknownIdentifier(ValueError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r}")


class EvalError(ArithmeticError):
    def __init__(self, kind: str, point):
        self.kind = kind
        self.point = tuple(float(v) for v in np.atleast_1d(point))
        super().__init__(f"{kind} at point {self.point}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    # 0 means absx, k >= 1 means x_k
    index: int


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),])"
    r")"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    end = len(source.rstrip())
    while pos < end:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos, ["number", "identifier", "operator"], source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", end))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int | None):
        self.source = source
        self.dim = dim
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(pos, [repr(op)], self.source)
        self.advance()

    def parse(self) -> Expr:
        tree = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, ["operator", "end of input"], self.source)
        return tree

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            if text == "absx":
                return Var(0)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m:
                index = int(m.group(1))
                if self.dim is not None and index > self.dim:
                    raise UnknownIdentifier(text, pos)
                return Var(index)
            if text in FUNCTIONS:
                return self.call(text, pos)
            raise UnknownIdentifier(text, pos)
        raise ExprSyntaxError(pos, ["number", "identifier", "'('"], self.source)

    def call(self, name: str, pos: int) -> Expr:
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, p = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            elif kind == "op" and text == ")":
                self.advance()
                break
            else:
                raise ExprSyntaxError(p, ["','", "')'"], self.source)
        arity = FUNCTIONS[name]
        if arity is not None and len(args) != arity:
            raise ExprSyntaxError(pos, [f"{arity} argument(s) for {name}"], self.source)
        if name == "chi_ball":
            if len(args) < 2:
                raise ExprSyntaxError(pos, ["centre coordinates and radius"], self.source)
            if self.dim is not None and len(args) != self.dim + 1:
                raise ExprSyntaxError(pos, [f"{self.dim + 1} arguments for chi_ball"], self.source)
        return Call(name, tuple(args))


def parse(source: str, dim: int | None = None) -> Expr:
    """Parse ``source``; with ``dim`` given, coordinates beyond ``x{dim}`` are rejected."""
    if not source or not source.strip():
        raise ExprSyntaxError(0, ["expression"], source)
    return _Parser(source, dim).parse()


def to_source(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(float(e.value)) if e.value >= 0 else f"(-{-float(e.value)!r})"
    if isinstance(e, Var):
        return "absx" if e.index == 0 else f"x{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def max_coord_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Neg):
        return max_coord_index(e.operand)
    if isinstance(e, BinOp):
        return max(max_coord_index(e.left), max_coord_index(e.right))
    if isinstance(e, Call):
        n = max((max_coord_index(a) for a in e.args), default=0)
        if e.name == "chi_ball":
            n = max(n, len(e.args) - 1)
        return n
    return 0


def _pow(base, expo, points):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    bad = (base < 0) & (expo != np.round(expo))
    if np.any(bad):
        raise EvalError("invalid pow", _first_point(bad, points))
    zero_neg = (base == 0) & (expo < 0)
    if np.any(zero_neg):
        raise EvalError("division by zero", _first_point(zero_neg, points))
    with np.errstate(over="ignore"):
        return np.power(base, expo)


def _first_point(mask, points):
    mask = np.broadcast_to(mask, points.shape[:-1])
    idx = np.argwhere(mask)[0]
    return points[tuple(idx)]


def _eval(e: Expr, points: np.ndarray, absx: np.ndarray):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        if e.index == 0:
            return absx
        if e.index > points.shape[-1]:
            raise EvalError(f"coordinate x{e.index} undefined in dimension {points.shape[-1]}",
                            points.reshape(-1, points.shape[-1])[0])
        return points[..., e.index - 1]
    if isinstance(e, Neg):
        return -_eval(e.operand, points, absx)
    if isinstance(e, BinOp):
        a = _eval(e.left, points, absx)
        b = _eval(e.right, points, absx)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        zero = np.asarray(b) == 0
        if np.any(zero):
            raise EvalError("division by zero", _first_point(zero, points))
        return a / b
    if isinstance(e, Call):
        args = [_eval(a, points, absx) for a in e.args]
        if e.name == "sin":
            return np.sin(args[0])
        if e.name == "cos":
            return np.cos(args[0])
        if e.name == "exp":
            with np.errstate(over="ignore"):
                return np.exp(args[0])
        if e.name == "pow":
            return _pow(args[0], args[1], points)
        if e.name == "chi_ball":
            centre, radius = args[:-1], args[-1]
            if len(centre) != points.shape[-1]:
                raise EvalError(f"chi_ball centre has {len(centre)} coordinates",
                                points.reshape(-1, points.shape[-1])[0])
            d2 = sum((points[..., k] - c) ** 2 for k, c in enumerate(centre))
            return np.where(np.sqrt(d2) <= radius, 1.0, 0.0)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_grid(e: Expr | str, points: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` at every point of an array shaped ``(..., N)``."""
    if isinstance(e, str):
        e = parse(e)
    points = np.asarray(points, dtype=float)
    absx = np.sqrt(np.sum(points * points, axis=-1))
    out = np.broadcast_to(np.asarray(_eval(e, points, absx), dtype=float), points.shape[:-1])
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise EvalError("non-finite value", _first_point(bad, points))
    return np.array(out)


def evaluate(e: Expr | str, point) -> float:
    """Evaluate ``e`` at a single coordinate vector."""
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    return float(evaluate_grid(e, pt[None, :])[0])

