"""Tiny arithmetic expressions over x and y for config-driven field data.

Grammar: +, -, *, /, ^ (right associative), unary minus, parentheses,
numeric literals, the names x, y, pi, and the functions sin, cos, exp,
abs, min, max.  Expressions evaluate vectorized over numpy arrays.
"""

from __future__ import annotations

import re

import numpy as np

__all__ = ["Expression", "ExpressionError", "parse_expression"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS_1 = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_FUNCTIONS_2 = {"min": np.minimum, "max": np.maximum}
_CONSTANTS = {"pi": np.pi}


class ExpressionError(ValueError):
    """Malformed expression text."""


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise ExpressionError(
                    f"unexpected character {text[pos:].strip()[0]!r} at position {pos}"
                )
            break
        pos = m.end()
        for kind in ("number", "name", "op"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val))
                break
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, found {val or 'end of input'!r}")

    def parse(self):
        node = self.expr()
        kind, val = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected trailing token {val!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            rhs = self.term()
            node = (np.add if op == "+" else np.subtract, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            rhs = self.unary()
            node = (np.multiply if op == "*" else np.divide, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return (np.negative, self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return (np.power, base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "number":
            return ("const", float(val))
        if kind == "name":
            if self.peek() == ("op", "("):
                self.take()
                if val in _FUNCTIONS_1:
                    arg = self.expr()
                    self.expect_op(")")
                    return (_FUNCTIONS_1[val], arg)
                if val in _FUNCTIONS_2:
                    a = self.expr()
                    self.expect_op(",")
                    b = self.expr()
                    self.expect_op(")")
                    return (_FUNCTIONS_2[val], a, b)
                raise ExpressionError(f"unknown function {val!r}")
            if val in ("x", "y"):
                return ("var", val)
            if val in _CONSTANTS:
                return ("const", _CONSTANTS[val])
            raise ExpressionError(f"unknown name {val!r}")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError(f"unexpected token {val or 'end of input'!r}")


def _evaluate(node, x, y):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "var":
        return x if node[1] == "x" else y
    if len(node) == 2:
        return tag(_evaluate(node[1], x, y))
    return tag(_evaluate(node[1], x, y), _evaluate(node[2], x, y))


class Expression:
    """A parsed expression; call evaluate(x, y) with scalars or arrays."""

    def __init__(self, text: str, node):
        self.text = text
        self._node = node

    def evaluate(self, x, y):
        out = _evaluate(self._node, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.asarray(out, dtype=float)

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def parse_expression(text: str) -> Expression:
    node = _Parser(_tokenize(text)).parse()
    return Expression(text, node)
