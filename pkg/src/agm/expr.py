"""Scalar expressions over chart coordinates x1..xN.

Grammar (whitespace insensitive)::

    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := atom ('^' uint)?
    atom   := number | 'x'uint | fn '(' expr ')' | '(' expr ')' | '-' atom
    fn     := sin | cos | exp

There is no division; rational coefficients are written as decimals.  Note
that unary minus binds tighter than ``^``, so ``-x1^2`` is ``(-x1)^2``.

Nodes are immutable and compared by identity.  Evaluation accepts either a
single point of shape ``(N,)`` or a batch of shape ``(P, N)``.
"""

from __future__ import annotations

import re
from numbers import Real

import numpy as np

__all__ = [
    "Expr", "Const", "Coord", "Neg", "Add", "Sub", "Mul", "Pow", "Call",
    "ExprSyntaxError", "CoordinateRangeError",
    "parse", "as_expr", "const", "coord", "evaluate", "Evaluator",
    "diff", "diff_fd", "to_text", "max_coordinate", "FUNCTIONS",
]

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


class Expr:
    __slots__ = ()

    def __add__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else add(self, other)

    def __radd__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else add(other, self)

    def __sub__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else sub(self, other)

    def __rsub__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else sub(other, self)

    def __mul__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else mul(self, other)

    def __rmul__(self, other):
        other = _lift(other)
        return NotImplemented if other is NotImplemented else mul(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Expr({to_text(self)!r})"

    def __str__(self):
        return to_text(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


class Coord(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 1:
            raise ValueError("coordinate indices start at 1")
        object.__setattr__(self, "index", int(index))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


class _Unary(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        object.__setattr__(self, "arg", arg)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


class Neg(_Unary):
    __slots__ = ()


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        if exponent < 0:
            raise ValueError("integer powers must be non-negative")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", int(exponent))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: str, arg: Expr):
        if fn not in FUNCTIONS:
            raise ValueError(f"unknown function {fn!r}")
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "arg", arg)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")


ZERO = Const(0.0)
ONE = Const(1.0)


# -- smart constructors (constant folding) ----------------------------------

def const(value: float) -> Const:
    value = float(value)
    if value == 0.0:
        return ZERO
    if value == 1.0:
        return ONE
    return Const(value)


def coord(index: int) -> Coord:
    return Coord(index)


def _is(node: Expr, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(b, Neg):
        return Sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if a is b:
        return ZERO
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Mul(a, b)


def power(base: Expr, exponent: int) -> Expr:
    if isinstance(exponent, bool) or int(exponent) != exponent:
        raise ValueError("only integer powers are supported")
    exponent = int(exponent)
    if exponent < 0:
        raise ValueError("integer powers must be non-negative")
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        return const(base.value ** exponent)
    return Pow(base, exponent)


def call(fn: str, arg: Expr) -> Expr:
    if isinstance(arg, Const):
        return const(float(FUNCTIONS[fn](arg.value)))
    return Call(fn, arg)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, Real):
        return const(value)
    return NotImplemented


def as_expr(value, n: int | None = None) -> Expr:
    """Coerce a number, expression string or Expr to an Expr."""
    if isinstance(value, Expr):
        if n is not None and max_coordinate(value) > n:
            raise CoordinateRangeError(
                f"coordinate x{max_coordinate(value)} out of range 1..{n}", 0)
        return value
    if isinstance(value, str):
        if n is None:
            raise ValueError("parsing a string requires the chart dimension")
        return parse(value, n)
    if isinstance(value, Real):
        return const(value)
    raise TypeError(f"cannot build an expression from {type(value).__name__}")


# -- parser -----------------------------------------------------------------

class ExprSyntaxError(ValueError):
    """Malformed expression text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class CoordinateRangeError(ExprSyntaxError):
    pass


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<coord>x(?P<cidx>\d+))"
    r"|(?P<fn>sin|cos|exp)"
    r"|(?P<op>[-+*^()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup) if m.lastgroup != "cidx" else m.start("coord")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), start))
        elif m.group("coord") is not None:
            tokens.append(("coord", m.group("cidx"), start))
        elif m.group("fn") is not None:
            tokens.append(("fn", m.group("fn"), start))
        else:
            tokens.append(("op", m.group("op"), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if kind != "op" or text != value:
            shown = text or "end of input"
            raise ExprSyntaxError(f"expected {value!r}, found {shown!r}", pos)

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                node = add(node, rhs) if text == "+" else sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            node = mul(node, self.factor())
        return node

    def factor(self):
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, text, pos = self.take()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError("exponent must be an unsigned integer", pos)
            node = power(node, int(text))
        return node

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return const(float(text))
        if kind == "coord":
            index = int(text)
            if not 1 <= index <= self.n:
                raise CoordinateRangeError(
                    f"coordinate x{index} out of range 1..{self.n}", pos)
            return coord(index)
        if kind == "fn":
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return call(text, arg)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            return neg(self.atom())
        shown = text or "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", pos)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` against a chart of dimension ``n``."""
    if n < 2:
        raise ValueError("chart dimension must be at least 2")
    parser = _Parser(text, n)
    node = parser.expr()
    kind, tok, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected trailing {tok!r}", pos)
    return node


# -- printing ---------------------------------------------------------------

def to_text(node: Expr) -> str:
    """Render ``node`` in the input grammar; ``parse(to_text(a))`` evaluates like ``a``."""
    if isinstance(node, Const):
        text = repr(node.value)
        if text in ("inf", "-inf", "nan"):
            raise ValueError("non-finite constants cannot be printed")
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Coord):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{_atom_text(node.arg)})"
    if isinstance(node, Add):
        return f"({to_text(node.left)} + {to_text(node.right)})"
    if isinstance(node, Sub):
        return f"({to_text(node.left)} - {to_text(node.right)})"
    if isinstance(node, Mul):
        return f"{_atom_text(node.left)}*{_atom_text(node.right)}"
    if isinstance(node, Pow):
        return f"{_atom_text(node.base)}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.fn}({to_text(node.arg)})"
    raise TypeError(type(node).__name__)


def _atom_text(node: Expr) -> str:
    text = to_text(node)
    # Neg/Add/Sub print their own parentheses; "(-2.0)*x1" is not an atom
    if isinstance(node, (Const, Coord, Call, Neg, Add, Sub)):
        return text
    return f"({text})"


def max_coordinate(node: Expr) -> int:
    """Largest coordinate index referenced (0 for constants)."""
    seen = {}
    stack = [node]
    best = 0
    while stack:
        cur = stack.pop()
        if id(cur) in seen:
            continue
        seen[id(cur)] = cur
        if isinstance(cur, Coord):
            best = max(best, cur.index)
        elif isinstance(cur, (Neg, Call)):
            stack.append(cur.arg)
        elif isinstance(cur, _Binary):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Pow):
            stack.append(cur.base)
    return best


# -- evaluation -------------------------------------------------------------

class Evaluator:
    """Evaluates expressions at a fixed point or batch of points.

    Sub-expression values are cached by node identity for the lifetime of
    the evaluator, so shared sub-trees of large derived fields are computed
    once per point set.  An evaluator is not meant to be shared between
    threads.
    """

    def __init__(self, points):
        x = np.asarray(points, dtype=float)
        if x.ndim not in (1, 2):
            raise ValueError("points must have shape (N,) or (P, N)")
        self.points = x
        self.dim = x.shape[-1]
        self._batch_shape = x.shape[:-1]
        self._cache: dict[int, tuple[Expr, object]] = {}

    def __call__(self, node: Expr):
        value = self._value(node)
        out = np.broadcast_to(np.asarray(value, dtype=float), self._batch_shape)
        return out.copy() if out.ndim else float(out)

    def _value(self, node: Expr):
        hit = self._cache.get(id(node))
        if hit is not None:
            return hit[1]
        with np.errstate(all="ignore"):
            if isinstance(node, Const):
                val = node.value
            elif isinstance(node, Coord):
                if node.index > self.dim:
                    raise CoordinateRangeError(
                        f"coordinate x{node.index} out of range 1..{self.dim}", 0)
                val = self.points[..., node.index - 1]
            elif isinstance(node, Neg):
                val = -self._value(node.arg)
            elif isinstance(node, Add):
                val = self._value(node.left) + self._value(node.right)
            elif isinstance(node, Sub):
                val = self._value(node.left) - self._value(node.right)
            elif isinstance(node, Mul):
                val = self._value(node.left) * self._value(node.right)
            elif isinstance(node, Pow):
                val = np.power(self._value(node.base), node.exponent)
            elif isinstance(node, Call):
                val = FUNCTIONS[node.fn](self._value(node.arg))
            else:
                raise TypeError(type(node).__name__)
        self._cache[id(node)] = (node, val)
        return val


def evaluate(node: Expr, point):
    """Value of ``node`` at a point ``(N,)`` or at each row of ``(P, N)``."""
    return Evaluator(point)(node)


# -- differentiation --------------------------------------------------------

def diff(node: Expr, k: int) -> Expr:
    """Exact partial derivative with respect to x_k (1-based)."""
    if k < 1:
        raise ValueError("coordinate indices start at 1")
    memo: dict[int, tuple[Expr, Expr]] = {}

    def d(cur: Expr) -> Expr:
        hit = memo.get(id(cur))
        if hit is not None:
            return hit[1]
        if isinstance(cur, Const):
            out = ZERO
        elif isinstance(cur, Coord):
            out = ONE if cur.index == k else ZERO
        elif isinstance(cur, Neg):
            out = neg(d(cur.arg))
        elif isinstance(cur, Add):
            out = add(d(cur.left), d(cur.right))
        elif isinstance(cur, Sub):
            out = sub(d(cur.left), d(cur.right))
        elif isinstance(cur, Mul):
            out = add(mul(d(cur.left), cur.right), mul(cur.left, d(cur.right)))
        elif isinstance(cur, Pow):
            inner = d(cur.base)
            out = mul(mul(const(cur.exponent), power(cur.base, cur.exponent - 1)), inner)
        elif isinstance(cur, Call):
            inner = d(cur.arg)
            if cur.fn == "sin":
                outer = call("cos", cur.arg)
            elif cur.fn == "cos":
                outer = neg(call("sin", cur.arg))
            else:
                outer = cur
            out = mul(outer, inner)
        else:
            raise TypeError(type(cur).__name__)
        memo[id(cur)] = (cur, out)
        return out

    return d(node)


def diff_fd(node: Expr, k: int, point, h: float):
    """Central difference (f(x + h e_k) - f(x - h e_k)) / 2h."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=float)
    step = np.zeros(x.shape[-1])
    step[k - 1] = h
    return (evaluate(node, x + step) - evaluate(node, x - step)) / (2.0 * h)
