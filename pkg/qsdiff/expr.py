"""Coefficient expressions: tokenizer, recursive-descent parser and evaluator.

Drift and killing rates are written as expressions in ``x``::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | "x" | IDENT "(" expr ("," expr)? ")" | CONST | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-x^2`` is
``-(x^2)`` and ``2^-x`` is ``2^(-x)``. Evaluation is vectorized over numpy
arrays.
"""

from __future__ import annotations

import math
import re
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from qsdiff.exceptions import ParseError

ArrayLike = float | np.ndarray

FUNCTIONS: dict[str, tuple[int, Callable[..., ArrayLike]]] = {
    'exp': (1, np.exp),
    'log': (1, np.log),
    'sqrt': (1, np.sqrt),
    'sin': (1, np.sin),
    'cos': (1, np.cos),
    'tanh': (1, np.tanh),
    'abs': (1, np.abs),
    'min': (2, np.minimum),
    'max': (2, np.maximum),
}
CONSTANTS: dict[str, float] = {'pi': math.pi, 'e': math.e, 'inf': math.inf}

_BINARY: dict[str, Callable[[ArrayLike, ArrayLike], ArrayLike]] = {
    '+': np.add,
    '-': np.subtract,
    '*': np.multiply,
    '/': np.divide,
    '^': np.power,
}

_TOKEN_RE = re.compile(
    r'(?P<ws>\s+)'
    r'|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)'
    r'|(?P<op>[-+*/^(),])'
)


class ExpressionDomainError(ValueError):
    """Raised when an expression is evaluated outside its domain."""


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | end
    text: str
    offset: int  # byte offset into the source


# AST ---------------------------------------------------------------------


class Node:
    """Base class of expression tree nodes."""

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def constant_value(self) -> float | None:
        """Fold the node to a number when it does not depend on ``x``."""
        return None


@dataclass(frozen=True)
class Number(Node):
    value: float

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        value = self.value
        return lambda x: value

    def to_source(self) -> str:
        if self.value < 0:
            return f'(-{-self.value!r})'
        return repr(self.value)

    def constant_value(self) -> float | None:
        return self.value


@dataclass(frozen=True)
class Constant(Node):
    name: str

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        value = CONSTANTS[self.name]
        return lambda x: value

    def to_source(self) -> str:
        return self.name

    def constant_value(self) -> float | None:
        return CONSTANTS[self.name]


@dataclass(frozen=True)
class Variable(Node):
    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        return lambda x: x

    def to_source(self) -> str:
        return 'x'


@dataclass(frozen=True)
class Negate(Node):
    operand: Node

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        inner = self.operand.compile()
        return lambda x: np.negative(inner(x))

    def to_source(self) -> str:
        return f'(-{self.operand.to_source()})'

    def constant_value(self) -> float | None:
        value = self.operand.constant_value()
        return None if value is None else -value


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        fn = _BINARY[self.op]
        left, right = self.left.compile(), self.right.compile()
        return lambda x: fn(left(x), right(x))

    def to_source(self) -> str:
        return f'({self.left.to_source()} {self.op} {self.right.to_source()})'

    def constant_value(self) -> float | None:
        left, right = self.left.constant_value(), self.right.constant_value()
        if left is None or right is None:
            return None
        with np.errstate(all='ignore'):
            return float(_BINARY[self.op](left, right))


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Node, ...]

    def compile(self) -> Callable[[ArrayLike], ArrayLike]:
        fn = FUNCTIONS[self.name][1]
        args = [arg.compile() for arg in self.args]
        if len(args) == 1:
            (only,) = args
            return lambda x: fn(only(x))
        first, second = args
        return lambda x: fn(first(x), second(x))

    def to_source(self) -> str:
        inner = ', '.join(arg.to_source() for arg in self.args)
        return f'{self.name}({inner})'

    def constant_value(self) -> float | None:
        values = [arg.constant_value() for arg in self.args]
        if any(v is None for v in values):
            return None
        with np.errstate(all='ignore'):
            return float(FUNCTIONS[self.name][1](*values))


class Expr:
    """A parsed coefficient expression, callable on floats and numpy arrays."""

    def __init__(self, root: Node, source: str | None = None):
        self.root = root
        self.source = source if source is not None else print_expr(root)
        self._fn = root.compile()
        self._constant = root.constant_value()

    @property
    def is_constant(self) -> bool:
        return self._constant is not None

    @property
    def constant_value(self) -> float | None:
        return self._constant

    def __call__(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(all='ignore'):
            result = self._fn(x)
        if np.ndim(x) and np.ndim(result) == 0:
            result = np.full(np.shape(x), float(result))
        bad = np.isnan(result)
        if np.any(bad):
            where = np.asarray(x)[bad] if np.ndim(x) else x
            point = float(np.ravel(where)[0]) if np.ndim(where) else float(where)
            raise ExpressionDomainError(
                f'{self.source!r} is undefined at x={point!r}'
            )
        return result

    def __repr__(self) -> str:
        return f'Expr({self.source!r})'


def print_expr(node: Node) -> str:
    """Print a tree as source that parses back to an equivalent tree."""
    if isinstance(node, Number) and node.value >= 0:
        return repr(node.value)
    if isinstance(node, Number):
        return f'-{-node.value!r}'
    return node.to_source()


# Parsing -----------------------------------------------------------------


def tokenize(src: str) -> list[Token]:
    """Split ``src`` into tokens, recording byte offsets."""
    tokens: list[Token] = []
    pos = 0
    while pos < len(src):
        match = _TOKEN_RE.match(src, pos)
        if match is None:
            raise ParseError(
                f'Unexpected character {src[pos]!r}',
                offset=len(src[:pos].encode()),
                expected={'NUMBER', 'x', 'IDENT', 'CONST', '(', '-'},
            )
        kind = match.lastgroup or ''
        if kind != 'ws':
            tokens.append(Token(kind, match.group(), len(src[:pos].encode())))
        pos = match.end()
    tokens.append(Token('end', '', len(src.encode())))
    return tokens


_ATOM_START = frozenset({'NUMBER', 'x', 'IDENT', 'CONST', '(', '-'})


class Parser:
    """Recursive-descent parser over the token list of one expression."""

    def __init__(self, src: str):
        self.src = src
        self.tokens = tokenize(src)
        self.position = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.position]

    def advance(self) -> Token:
        token = self.current
        self.position += 1
        return token

    def error(self, expected: set[str] | frozenset[str]) -> ParseError:
        token = self.current
        found = 'end of input' if token.kind == 'end' else repr(token.text)
        return ParseError(
            f'Unexpected {found} at offset {token.offset}; '
            f'expected one of {", ".join(sorted(expected))}',
            offset=token.offset,
            expected=expected,
        )

    def expect(self, text: str) -> Token:
        if self.current.kind == 'op' and self.current.text == text:
            return self.advance()
        raise self.error({text})

    def parse(self) -> Node:
        node = self.parse_expr()
        if self.current.kind != 'end':
            raise self.error({'+', '-', '*', '/', '^', 'end of input'})
        return node

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.current.kind == 'op' and self.current.text in '+-':
            op = self.advance().text
            node = BinaryOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_unary()
        while self.current.kind == 'op' and self.current.text in '*/':
            op = self.advance().text
            node = BinaryOp(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Node:
        if self.current.kind == 'op' and self.current.text == '-':
            self.advance()
            return Negate(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Node:
        base = self.parse_atom()
        if self.current.kind == 'op' and self.current.text == '^':
            self.advance()
            return BinaryOp('^', base, self.parse_unary())
        return base

    def parse_atom(self) -> Node:
        token = self.current
        if token.kind == 'number':
            self.advance()
            return Number(float(token.text))
        if token.kind == 'op' and token.text == '(':
            self.advance()
            node = self.parse_expr()
            self.expect(')')
            return node
        if token.kind == 'ident':
            name = token.text
            if name == 'x':
                self.advance()
                return Variable()
            if name in CONSTANTS:
                self.advance()
                return Constant(name)
            if name in FUNCTIONS:
                self.advance()
                return self.parse_call(name, token)
            raise ParseError(
                f'Unknown identifier {name!r} at offset {token.offset}',
                offset=token.offset,
                expected={'x', *CONSTANTS, *FUNCTIONS},
            )
        raise self.error(_ATOM_START)

    def parse_call(self, name: str, token: Token) -> Node:
        arity = FUNCTIONS[name][0]
        self.expect('(')
        args = [self.parse_expr()]
        if self.current.kind == 'op' and self.current.text == ',':
            self.advance()
            args.append(self.parse_expr())
        self.expect(')')
        if len(args) != arity:
            raise ParseError(
                f'{name} takes {arity} argument(s), got {len(args)}',
                offset=token.offset,
                expected={',' if arity > len(args) else ')'},
            )
        return Call(name, tuple(args))


def parse_expr(src: str) -> Expr:
    """Parse an expression in ``x``.

    Raises:
        ParseError: with the byte offset and the set of acceptable tokens.

    """
    return Expr(Parser(src).parse(), source=src)


def constant_expr(value: float) -> Expr:
    """Build the expression of a constant."""
    return Expr(Number(float(value)))
