"""
Arithmetic expression language.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

so ``-2^2`` is ``-(2^2)`` and ``2^3^2`` is ``2^(3^2)``.  ``pi`` and ``e``
are predefined constants unless declared as variables.

Evaluation is done with numpy under ``errstate(all="ignore")``: bindings
may be scalars or arrays, and division by zero or log of a negative number
give inf/nan instead of raising.  Bindings that are all Python floats take
a faster path through the math module; it yields the same IEEE results,
though transcendental functions may differ from the array path in the
last ulp.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from monge.errors import MongeError

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
}

CONSTANTS = {"pi": math.pi, "e": math.e}

MAX_DEPTH = 200


class ExpressionError(MongeError):
    pass


class ExprSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownVariableError(ExpressionError):
    def __init__(self, name: str, offset: int | None = None):
        super().__init__(f"unknown variable {name!r}")
        self.name = name
        self.offset = offset


class UnknownFunctionError(ExpressionError):
    def __init__(self, name: str, offset: int | None = None):
        super().__init__(f"unknown function {name!r}")
        self.name = name
        self.offset = offset


class MissingBindingError(ExpressionError):
    def __init__(self, names: Iterable[str]):
        self.names = tuple(names)
        super().__init__("missing binding for " + ", ".join(repr(n) for n in self.names))


# {{{ tree

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object

# }}}


# {{{ tokenizer

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens

# }}}


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed
        self.seen: list[str] = []
        self.depth = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind == "end":
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", self.tok[2])
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        self.depth -= 1
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, pos = self.tok
        if kind == "op" and text in "+-":
            self.advance()
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise ExprSyntaxError("expression nested too deeply", pos)
            operand = self.unary()
            self.depth -= 1
            return Neg(operand) if text == "-" else operand
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise ExprSyntaxError("expression nested too deeply", self.tok[2])
            exponent = self.unary()
            self.depth -= 1
            return BinOp("^", base, exponent)
        return base

    def primary(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.tok[1] == "(" and self.tok[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(text, pos)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.allowed:
                if text not in self.seen:
                    self.seen.append(text)
                return Var(text)
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            raise UnknownVariableError(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", pos)


# {{{ compilation to closures

def _div(a, b):
    return np.true_divide(a, b)


_BINOPS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _div,
    "^": np.power,
}


def _compile(node) -> Callable[[Mapping], object]:
    if isinstance(node, Num):
        value = np.float64(node.value)
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda env: np.negative(inner(env))
    if isinstance(node, BinOp):
        op = _BINOPS[node.op]
        left, right = _compile(node.left), _compile(node.right)
        return lambda env: op(left(env), right(env))
    if isinstance(node, Call):
        func = FUNCTIONS[node.func]
        arg = _compile(node.arg)
        return lambda env: func(arg(env))
    raise TypeError(f"not an expression node: {node!r}")

_SCALAR_FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
}

_SCALAR_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": math.pow,
}


def _compile_scalar(node) -> Callable[[Mapping], float]:
    """
    Float-only closure on the math module.  It raises where IEEE
    arithmetic would give inf/nan; callers then rerun the numpy closure.
    """
    if isinstance(node, Num):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        inner = _compile_scalar(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, BinOp):
        op = _SCALAR_BINOPS[node.op]
        left, right = _compile_scalar(node.left), _compile_scalar(node.right)
        return lambda env: op(left(env), right(env))
    if isinstance(node, Call):
        func = _SCALAR_FUNCTIONS[node.func]
        arg = _compile_scalar(node.arg)
        return lambda env: func(arg(env))
    raise TypeError(f"not an expression node: {node!r}")

# }}}


def _format(node) -> str:
    if isinstance(node, Num):
        if math.isinf(node.value):
            return "1e999"
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_format(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_format(node.left)} {node.op} {_format(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({_format(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _rename(node, mapping):
    if isinstance(node, Var):
        return Var(mapping.get(node.name, node.name))
    if isinstance(node, Neg):
        return Neg(_rename(node.operand, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, _rename(node.left, mapping), _rename(node.right, mapping))
    if isinstance(node, Call):
        return Call(node.func, _rename(node.arg, mapping))
    return node


@dataclass(frozen=True)
class Expression:
    """
    Parsed expression, immutable after construction.

    Attributes
    ----------
    root : node
        Expression tree (`Num`, `Var`, `Neg`, `BinOp`, `Call`).
    vars : tuple of str
        Free variables in order of first appearance.
    source : str
        Text the expression was parsed from.
    """
    root: object
    vars: tuple[str, ...]
    source: str = ""
    _fn: Callable = field(default=None, repr=False, compare=False)
    _sfn: Callable = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._fn is None:
            object.__setattr__(self, "_fn", _compile(self.root))
        if self._sfn is None:
            object.__setattr__(self, "_sfn", _compile_scalar(self.root))

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def __str__(self):
        return self.source or _format(self.root)

    def pretty(self) -> str:
        """Fully parenthesized text that reparses to the same tree."""
        return _format(self.root)

    def rename(self, mapping: Mapping[str, str]) -> "Expression":
        vars_ = tuple(dict.fromkeys(mapping.get(v, v) for v in self.vars))
        root = _rename(self.root, mapping)
        return Expression(root, vars_, _format(root))


def parse(text, allowed_vars: Iterable[str] = ()) -> Expression:
    """
    Parse `text` into an `Expression` over `allowed_vars`.

    Raises `ExprSyntaxError` (with the character offset),
    `UnknownVariableError` or `UnknownFunctionError`.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExprSyntaxError("invalid utf-8", exc.start) from None
    if not isinstance(text, str):
        raise TypeError(f"expression text must be str, not {type(text).__name__}")
    if not text.strip():
        raise ExprSyntaxError("empty expression", len(text))
    parser = _Parser(text, frozenset(allowed_vars))
    try:
        root = parser.parse()
    except RecursionError:
        raise ExprSyntaxError("expression nested too deeply", 0) from None
    return Expression(root, tuple(parser.seen), text)


def evaluate(e: Expression, bindings: Mapping[str, object]):
    """
    Evaluate `e` with IEEE double semantics.

    Scalar bindings give a Python float; array bindings broadcast and give
    an ndarray.  Non-finite results are returned as-is.
    """
    try:
        env = {v: bindings[v] for v in e.vars}
    except KeyError:
        raise MissingBindingError([v for v in e.vars if v not in bindings]) from None
    if all(type(b) in (float, int) for b in env.values()):
        try:
            return e._sfn(env)
        except (ArithmeticError, ValueError):
            pass
    env = {v: np.asarray(b, dtype=np.float64) for v, b in env.items()}
    with np.errstate(all="ignore"):
        out = e._fn(env)
    if np.ndim(out) == 0:
        return float(out)
    return out


def as_expression(value, allowed_vars: Iterable[str]) -> Expression:
    """Accept an `Expression`, a string, or a number."""
    if isinstance(value, Expression):
        allowed = set(allowed_vars)
        extra = [v for v in value.vars if v not in allowed]
        if extra:
            raise UnknownVariableError(extra[0])
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return parse(repr(float(value)), allowed_vars)
    return parse(value, allowed_vars)
