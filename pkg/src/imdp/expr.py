"""Scalar arithmetic expressions in the action variables ``a1..am``.

Expressions are parsed once into an immutable tree and evaluated with
forward-mode dual numbers, so every evaluation yields the value together with
the exact gradient with respect to the action.  Evaluation works on a single
action vector or on a batch of actions (shape ``(G, m)``), which is how model
tables are built over an action grid.

Grammar (whitespace insignificant)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | 'a' INT | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sqrt' | 'exp' | 'log'

The exponent of ``^`` must not contain any action variable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExpressionError",
    "ParseError",
    "DomainError",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Func",
    "Expression",
    "EvalResult",
    "parse",
    "evaluate",
    "evaluate_batch",
    "render",
]


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    """Syntax error with a 0-based character offset into the source text."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class DomainError(ExpressionError):
    """Non-finite value (or gradient) produced while evaluating ``node``."""

    def __init__(self, message: str, node: "Node"):
        self.node = node
        super().__init__(f"{message} in '{render(node)}'")


# -- tree ---------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in the source


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Func:
    name: str  # sqrt, exp, log
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Func]

FUNCTIONS = ("sqrt", "exp", "log")


@dataclass(frozen=True)
class Expression:
    """A parsed expression bound to an action dimension."""

    root: Node
    action_dim: int
    source: str = ""

    def __call__(self, action) -> float:
        return evaluate(self, action, gradient=False).value

    def __str__(self) -> str:
        return render(self)

    @property
    def is_constant(self) -> bool:
        cached = self.__dict__.get("_constant")
        if cached is None:
            cached = not _has_var(self.root)
            object.__setattr__(self, "_constant", cached)
        return cached

    @classmethod
    def constant(cls, value: float, action_dim: int) -> "Expression":
        return cls(Const(float(value)), action_dim, repr(float(value)))


@dataclass(frozen=True)
class EvalResult:
    value: float
    gradient: np.ndarray


def _has_var(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Const):
        return False
    if isinstance(node, Neg):
        return _has_var(node.operand)
    if isinstance(node, Func):
        return _has_var(node.arg)
    return _has_var(node.left) or _has_var(node.right)


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, action_dim: int):
        self.text = text
        self.m = action_dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {found}")
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[1] == "^":
            tok = self.advance()
            exponent = self.unary()
            if _has_var(exponent):
                raise self.error("variable exponent is not allowed", tok)
            return BinOp("^", base, exponent)
        return base

    def primary(self) -> Node:
        kind, value, pos = self.peek()
        if kind == "num":
            self.advance()
            return Const(float(value))
        if kind == "name":
            self.advance()
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(value, arg)
            m = re.fullmatch(r"a([0-9]+)", value)
            if m is None:
                raise ParseError(f"unknown identifier {value!r}", pos, self.text)
            index = int(m.group(1))
            if not 1 <= index <= self.m:
                raise ParseError(
                    f"variable {value!r} out of range a1..a{self.m}", pos, self.text
                )
            return Var(index)
        if value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {value!r}")


def parse(text: str, action_dim: int) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``a1..a{action_dim}``."""
    if action_dim < 1:
        raise ValueError("action_dim must be >= 1")
    return Expression(_Parser(text, action_dim).parse(), action_dim, text)


# -- rendering ----------------------------------------------------------------


def render(e: Expression | Node) -> str:
    """Canonical, fully parenthesised text that parses back to the same tree."""
    node = e.root if isinstance(e, Expression) else e
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"a{node.index}"
    if isinstance(node, Neg):
        return f"(-{render(node.operand)})"
    if isinstance(node, Func):
        return f"{node.name}({render(node.arg)})"
    return f"({render(node.left)} {node.op} {render(node.right)})"


# -- dual-number evaluation ---------------------------------------------------
#
# A dual is (value, grad) with value of shape batch and grad of shape (m,)+batch.
# grad is None when only values are requested.


def _const_value(node: Node) -> float:
    val, _ = _eval(node, None, None, False)
    return float(val)


def _check(value, node, what="value"):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite {what}", node)


def _eval(node: Node, x, shape, want_grad):
    if isinstance(node, Const):
        val = np.full(shape, node.value) if shape is not None else np.float64(node.value)
        grad = None
        if want_grad:
            grad = np.zeros((x.shape[0],) + tuple(shape))
        return val, grad
    if isinstance(node, Var):
        val = x[node.index - 1]
        grad = None
        if want_grad:
            grad = np.zeros((x.shape[0],) + tuple(shape))
            grad[node.index - 1] = 1.0
        return val, grad
    if isinstance(node, Neg):
        v, g = _eval(node.operand, x, shape, want_grad)
        return -v, (-g if want_grad else None)
    if isinstance(node, Func):
        v, g = _eval(node.arg, x, shape, want_grad)
        with np.errstate(all="ignore"):
            if node.name == "sqrt":
                if np.any(v < 0):
                    raise DomainError("sqrt of negative argument", node)
                out = np.sqrt(v)
                d = 0.5 / out if want_grad else None
            elif node.name == "exp":
                out = np.exp(v)
                d = out
            else:
                if np.any(v <= 0):
                    raise DomainError("log of non-positive argument", node)
                out = np.log(v)
                d = 1.0 / v if want_grad else None
        _check(out, node)
        return out, (d * g if want_grad else None)

    lv, lg = _eval(node.left, x, shape, want_grad)
    if node.op == "^":
        p = _const_value(node.right)
        with np.errstate(all="ignore"):
            if float(p).is_integer():
                out = lv ** p
                d = p * lv ** (p - 1) if want_grad else None
            else:
                if np.any(lv < 0):
                    raise DomainError("fractional power of negative base", node)
                out = lv ** p
                d = p * lv ** (p - 1) if want_grad else None
        _check(out, node)
        return out, (d * lg if want_grad else None)

    rv, rg = _eval(node.right, x, shape, want_grad)
    with np.errstate(all="ignore"):
        if node.op == "+":
            out, g = lv + rv, (lg + rg if want_grad else None)
        elif node.op == "-":
            out, g = lv - rv, (lg - rg if want_grad else None)
        elif node.op == "*":
            out = lv * rv
            g = lv * rg + rv * lg if want_grad else None
        else:
            if np.any(rv == 0):
                raise DomainError("division by zero", node)
            out = lv / rv
            g = (lg * rv - lv * rg) / (rv * rv) if want_grad else None
    _check(out, node)
    return out, g


# Scalar path: plain floats and gradient lists, much cheaper than 0-d arrays
# for the single-point evaluations done inside the gradient scheme.


def _finite(value, node):
    if not math.isfinite(value):
        raise DomainError("non-finite value", node)
    return value


def _eval_point(node: Node, x, m, want_grad):
    if isinstance(node, Const):
        return node.value, ([0.0] * m if want_grad else None)
    if isinstance(node, Var):
        g = None
        if want_grad:
            g = [0.0] * m
            g[node.index - 1] = 1.0
        return x[node.index - 1], g
    if isinstance(node, Neg):
        v, g = _eval_point(node.operand, x, m, want_grad)
        return -v, ([-gi for gi in g] if want_grad else None)
    if isinstance(node, Func):
        v, g = _eval_point(node.arg, x, m, want_grad)
        try:
            if node.name == "sqrt":
                if v < 0:
                    raise DomainError("sqrt of negative argument", node)
                out = math.sqrt(v)
                d = 0.5 / out if want_grad and out != 0 else math.inf
            elif node.name == "exp":
                out = d = math.exp(v)
            else:
                if v <= 0:
                    raise DomainError("log of non-positive argument", node)
                out = math.log(v)
                d = 1.0 / v
        except OverflowError:
            raise DomainError("non-finite value", node) from None
        _finite(out, node)
        return out, ([d * gi for gi in g] if want_grad else None)

    lv, lg = _eval_point(node.left, x, m, want_grad)
    if node.op == "^":
        p = _const_value(node.right)
        if not float(p).is_integer() and lv < 0:
            raise DomainError("fractional power of negative base", node)
        try:
            out = lv ** p
            d = p * lv ** (p - 1) if want_grad else 0.0
        except (OverflowError, ZeroDivisionError):
            raise DomainError("non-finite value", node) from None
        _finite(out, node)
        return out, ([d * gi for gi in lg] if want_grad else None)

    rv, rg = _eval_point(node.right, x, m, want_grad)
    g = None
    try:
        if node.op == "+":
            out = lv + rv
            if want_grad:
                g = [a + b for a, b in zip(lg, rg)]
        elif node.op == "-":
            out = lv - rv
            if want_grad:
                g = [a - b for a, b in zip(lg, rg)]
        elif node.op == "*":
            out = lv * rv
            if want_grad:
                g = [lv * b + rv * a for a, b in zip(lg, rg)]
        else:
            if rv == 0:
                raise DomainError("division by zero", node)
            out = lv / rv
            if want_grad:
                g = [(a * rv - lv * b) / (rv * rv) for a, b in zip(lg, rg)]
    except OverflowError:
        raise DomainError("non-finite value", node) from None
    _finite(out, node)
    return out, g


def evaluate(e: Expression, action, gradient: bool = True) -> EvalResult:
    """Value and exact gradient of ``e`` at one action vector."""
    x = [float(a) for a in np.asarray(action, dtype=float).reshape(-1)]
    if len(x) != e.action_dim:
        raise ValueError(f"action has dimension {len(x)}, expected {e.action_dim}")
    val, grad = _eval_point(e.root, x, e.action_dim, gradient)
    if gradient:
        grad = np.array(grad, dtype=float)
        _check(grad, e.root, "gradient")
    else:
        grad = np.zeros(e.action_dim)
    return EvalResult(float(val), grad)


def evaluate_batch(e: Expression, actions, gradient: bool = False):
    """Evaluate at every row of ``actions`` (shape ``(G, m)``).

    Returns ``values`` of shape ``(G,)``, or ``(values, grads)`` with grads of
    shape ``(G, m)`` when ``gradient`` is true.
    """
    pts = np.asarray(actions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != e.action_dim:
        raise ValueError(f"actions must have shape (G, {e.action_dim})")
    x = pts.T
    shape = (pts.shape[0],)
    val, grad = _eval(e.root, x, shape, gradient)
    val = np.broadcast_to(val, shape).astype(float)
    if not gradient:
        return val
    _check(grad, e.root, "gradient")
    return val, np.ascontiguousarray(np.broadcast_to(grad, (e.action_dim,) + shape).T)
