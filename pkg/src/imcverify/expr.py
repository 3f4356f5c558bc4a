"""Expression trees for the drift ``f`` and diffusion ``b`` of a system.

Text syntax: infix arithmetic over variables ``x1 .. xn`` with ``+ - * /``,
``^`` (``**`` accepted as a synonym), numeric literals, ``pi``, and the
functions ``exp``, ``sin``, ``cos``, ``min``, ``max``.  Exponents must be
constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetError, DomainError, ParseError
from .intervals import Interval, IntervalBox

_UNARY_FUNCS = {"exp", "sin", "cos"}
_BINARY_FUNCS = {"min", "max"}


@dataclass(frozen=True)
class Expr:
    """Immutable expression node.

    ``op`` is one of ``const var add sub mul div neg pow exp sin cos min max``.
    Constants keep their value in ``value``; variables their 0-based index
    in ``var``.
    """

    op: str
    args: tuple[Expr, ...] = ()
    value: float = 0.0
    var: int = -1

    # constructors -------------------------------------------------------

    @staticmethod
    def const(c: float) -> Expr:
        return Expr("const", value=float(c))

    @staticmethod
    def variable(i: int) -> Expr:
        return Expr("var", var=int(i))

    def __add__(self, o):
        return Expr("add", (self, _as_expr(o)))

    def __radd__(self, o):
        return Expr("add", (_as_expr(o), self))

    def __sub__(self, o):
        return Expr("sub", (self, _as_expr(o)))

    def __rsub__(self, o):
        return Expr("sub", (_as_expr(o), self))

    def __mul__(self, o):
        return Expr("mul", (self, _as_expr(o)))

    def __rmul__(self, o):
        return Expr("mul", (_as_expr(o), self))

    def __truediv__(self, o):
        return Expr("div", (self, _as_expr(o)))

    def __neg__(self):
        return Expr("neg", (self,))

    def __pow__(self, p):
        return Expr("pow", (self, _as_expr(p)))

    # structure ----------------------------------------------------------

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0.0

    def max_var(self) -> int:
        """Largest variable index used, or -1 for closed expressions."""
        if self.op == "var":
            return self.var
        return max((a.max_var() for a in self.args), default=-1)

    def __str__(self) -> str:
        return to_text(self)


def _as_expr(x) -> Expr:
    return x if isinstance(x, Expr) else Expr.const(x)


def to_text(e: Expr) -> str:
    """Render ``e`` back to parseable text (fully parenthesised)."""
    op = e.op
    if op == "const":
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if op == "var":
        return f"x{e.var + 1}"
    if op == "neg":
        return f"(-{to_text(e.args[0])})"
    if op in _UNARY_FUNCS:
        return f"{op}({to_text(e.args[0])})"
    if op in _BINARY_FUNCS:
        return f"{op}({to_text(e.args[0])}, {to_text(e.args[1])})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[op]
    return f"({to_text(e.args[0])} {sym} {to_text(e.args[1])})"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[col - 1]!r}", column=col)
        kind = m.lastgroup
        tok = m.group(kind)
        col = m.start(kind) + 1
        if tok == "**":
            tok = "^"
        toks.append((kind, tok, col))
        pos = m.end()
    toks.append(("end", "", len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text: str, n_vars: int | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.n_vars = n_vars

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, tok):
        kind, val, col = self.take()
        if val != tok:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {tok!r}, found {found}", column=col)

    def parse(self) -> Expr:
        e = self.sum()
        kind, val, col = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", column=col)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.product()
            e = _fold(Expr("add" if op == "+" else "sub", (e, rhs)))
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = _fold(Expr("mul" if op == "*" else "div", (e, rhs)))
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return _fold(Expr("neg", (self.unary(),)))
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            _, _, col = self.take()
            exponent = self.unary()
            if not exponent.is_const:
                raise ParseError("exponent must be a constant", column=col)
            return _fold(Expr("pow", (base, exponent)))
        return base

    def atom(self) -> Expr:
        kind, val, col = self.take()
        if kind == "num":
            return Expr.const(float(val))
        if kind == "name":
            if val == "pi":
                return Expr.const(math.pi)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if idx < 1 or (self.n_vars is not None and idx > self.n_vars):
                    raise ParseError(f"variable {val} out of range", column=col)
                return Expr.variable(idx - 1)
            if val in _UNARY_FUNCS or val in _BINARY_FUNCS:
                self.expect("(")
                a = self.sum()
                if val in _BINARY_FUNCS:
                    self.expect(",")
                    b = self.sum()
                    self.expect(")")
                    return _fold(Expr(val, (a, b)))
                self.expect(")")
                return _fold(Expr(val, (a,)))
            raise ParseError(f"unknown name {val!r}", column=col)
        if val == "(":
            e = self.sum()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"expected operand, found {found}", column=col)


def _fold(e: Expr) -> Expr:
    """Collapse nodes whose arguments are all constants."""
    if e.args and all(a.is_const for a in e.args):
        return Expr.const(eval_point(e, ()))
    return e


def parse_expr(text: str, n_vars: int | None = None) -> Expr:
    """Parse infix ``text``; raises :class:`ParseError` with a 1-based column."""
    if not isinstance(text, str):
        return Expr.const(float(text))
    return _Parser(text, n_vars).parse()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_point(e: Expr, x):
    """Evaluate at a point.  ``x`` may hold floats or equally-shaped arrays."""
    op = e.op
    if op == "const":
        return e.value
    if op == "var":
        return x[e.var]
    if op == "neg":
        return -eval_point(e.args[0], x)
    a = eval_point(e.args[0], x)
    if op == "exp":
        with np.errstate(over="raise"):
            try:
                return np.exp(a) if isinstance(a, np.ndarray) else math.exp(a)
            except (OverflowError, FloatingPointError) as exc:
                raise DomainError("exp overflow") from exc
    if op == "sin":
        return np.sin(a) if isinstance(a, np.ndarray) else math.sin(a)
    if op == "cos":
        return np.cos(a) if isinstance(a, np.ndarray) else math.cos(a)
    b = eval_point(e.args[1], x)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    if op == "min":
        return np.minimum(a, b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else min(a, b)
    if op == "max":
        return np.maximum(a, b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else max(a, b)
    if op == "pow":
        p = float(b)
        base = np.asarray(a)
        if not p.is_integer() and np.any(base < 0):
            raise DomainError(f"non-integer power {p} of a negative number")
        if p < 0 and np.any(base == 0):
            raise DomainError("zero raised to a negative power")
        if isinstance(a, np.ndarray):
            return np.power(a, int(p) if p.is_integer() else p)
        return a ** (int(p) if p.is_integer() else p)
    raise ValueError(f"unknown op {op}")


def eval_interval(e: Expr, box: IntervalBox | Sequence[Interval]) -> Interval:
    """Natural interval extension of ``e`` over ``box`` (outward rounded)."""
    op = e.op
    if op == "const":
        return Interval(e.value, e.value)
    if op == "var":
        return box[e.var]
    if op == "neg":
        return -eval_interval(e.args[0], box)
    a = eval_interval(e.args[0], box)
    if op == "exp":
        return a.exp()
    if op == "sin":
        return a.sin()
    if op == "cos":
        return a.cos()
    if op == "pow":
        return a.pow_real(e.args[1].value)
    b = eval_interval(e.args[1], box)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        if e.args[0] is e.args[1] or e.args[0] == e.args[1]:
            return a.sqr()
        return a * b
    if op == "div":
        return a / b
    if op == "min":
        return a.min_with(b)
    if op == "max":
        return a.max_with(b)
    raise ValueError(f"unknown op {op}")


def eval_interval_grad(e: Expr, box: IntervalBox) -> tuple[Interval, list[Interval]]:
    """Interval value and interval partial derivatives (forward mode).

    For ``min``/``max`` the derivative enclosure is the hull of both
    branches unless the branch intervals are separated.
    """
    n = len(box)
    zero = Interval(0.0, 0.0)
    op = e.op
    if op == "const":
        return Interval(e.value, e.value), [zero] * n
    if op == "var":
        g = [zero] * n
        g[e.var] = Interval(1.0, 1.0)
        return box[e.var], g
    a, da = eval_interval_grad(e.args[0], box)
    if op == "neg":
        return -a, [-d for d in da]
    if op == "exp":
        v = a.exp()
        return v, [v * d for d in da]
    if op == "sin":
        c = a.cos()
        return a.sin(), [c * d for d in da]
    if op == "cos":
        s = a.sin()
        return a.cos(), [-(s * d) for d in da]
    if op == "pow":
        p = e.args[1].value
        v = a.pow_real(p)
        if p == 0:
            return v, [zero] * n
        dv = a.pow_real(p - 1) * p
        return v, [dv * d for d in da]
    b, db = eval_interval_grad(e.args[1], box)
    if op == "add":
        return a + b, [x + y for x, y in zip(da, db)]
    if op == "sub":
        return a - b, [x - y for x, y in zip(da, db)]
    if op == "mul":
        return a * b, [x * b + a * y for x, y in zip(da, db)]
    if op == "div":
        q = a / b
        return q, [(x - q * y) / b for x, y in zip(da, db)]
    if op in ("min", "max"):
        v = a.min_with(b) if op == "min" else a.max_with(b)
        if a.hi < b.lo:
            return v, (da if op == "min" else db)
        if b.hi < a.lo:
            return v, (db if op == "min" else da)
        return v, [x.hull(y) for x, y in zip(da, db)]
    raise ValueError(f"unknown op {op}")


def lipschitz_bound(exprs: Sequence[Expr], box: IntervalBox) -> float:
    """Infinity-norm Lipschitz constant of the map ``x -> (e(x))_e`` on ``box``.

    Returns ``max_e sup_box sum_j |de/dx_j|``; ``math.inf`` when a derivative
    enclosure cannot be computed (e.g. a singularity inside the box).
    """
    best = 0.0
    for e in exprs:
        try:
            _, grad = eval_interval_grad(e, box)
        except DomainError:
            return math.inf
        best = max(best, math.fsum(g.mag for g in grad))
    return best


# ---------------------------------------------------------------------------
# subdivision
# ---------------------------------------------------------------------------

def _slack(widths: Sequence[float], groups: Sequence[Sequence[int]]) -> float:
    return math.sqrt(math.fsum(max((widths[i] for i in g), default=0.0) ** 2 for g in groups))


def subdivide_until(
    exprs: Sequence[Expr],
    box: IntervalBox,
    kappa: float,
    groups: Sequence[Sequence[int]] | None = None,
    max_boxes: int = 2 ** 20,
) -> list[tuple[IntervalBox, list[Interval]]]:
    """Bisect ``box`` (longest edge first) until every piece is accurate enough.

    A piece is accepted when ``sqrt(sum_g (max_{e in g} width [e])^2) < kappa``.
    ``groups`` partitions the expression indices; by default all expressions
    form one group, i.e. the largest output width must stay below ``kappa``.
    The drift/diffusion split ``[f-indices, b-indices]`` gives the
    ``(w_f)^2 + (w_b)^2 < kappa^2`` rule used for kernel over-approximation.

    Returns the accepted pieces, left to right, with their output intervals.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if not exprs:
        raise ValueError("need at least one expression")
    if groups is None:
        groups = [list(range(len(exprs)))]
    done: list[tuple[IntervalBox, list[Interval]]] = []
    stack = [box]
    while stack:
        piece = stack.pop()
        outs = [eval_interval(e, piece) for e in exprs]
        if _slack([o.width for o in outs], groups) < kappa:
            done.append((piece, outs))
            continue
        if piece.width == 0.0 or len(done) + len(stack) + 2 > max_boxes:
            raise BudgetError(
                f"subdivision of {box.as_list()} did not reach kappa={kappa} within {max_boxes} boxes"
            )
        left, right = piece.bisect()
        if left == piece or right == piece:
            raise BudgetError(f"box {piece.as_list()} cannot be bisected further")
        stack.append(right)
        stack.append(left)
    return done
