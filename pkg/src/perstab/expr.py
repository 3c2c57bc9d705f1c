"""Small arithmetic grammar used by scenario files.

Expressions are parsed into sympy trees so that closed-form derivatives are
available to the geometry and nonlinearity builders.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' | '**') unary | atom
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``pi`` (or ``π``) and ``e`` are constants. Which variable names are legal is
decided by the caller.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import sympy as sp

FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "atan": sp.atan,
    "erf": sp.erf,
    "abs": sp.Abs,
}
CONSTANTS = {"pi": sp.pi, "π": sp.pi, "e": sp.E}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_π][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


class ExpressionError(ValueError):
    """Raised for malformed expressions; ``column`` is 1-based."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("end", "", len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text: str, variables: dict[str, sp.Symbol]):
        self.toks = _tokenize(text)
        self.i = 0
        self.variables = variables

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text:
            raise ExpressionError(f"expected {text!r}, found {tok.text or 'end'!r}", tok.col)

    def parse(self) -> sp.Expr:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionError(f"unexpected {tok.text!r}", tok.col)
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        if self.peek().text in ("+", "-"):
            op = self.take().text
            node = self.unary()
            return -node if op == "-" else node
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek().text in ("^", "**"):
            self.take()
            node = node ** self.unary()
        return node

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return sp.Float(tok.text) if any(c in tok.text for c in ".eE") else sp.Integer(tok.text)
        if tok.kind == "name":
            if self.peek().text == "(":
                if tok.text not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {tok.text!r}", tok.col)
                self.take()
                arg = self.expr()
                self.expect(")")
                return FUNCTIONS[tok.text](arg)
            if tok.text in CONSTANTS:
                return CONSTANTS[tok.text]
            if tok.text in self.variables:
                return self.variables[tok.text]
            raise ExpressionError(f"unknown name {tok.text!r}", tok.col)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected {tok.text or 'end of input'!r}", tok.col)


SYMBOLS = {name: sp.Symbol(name, real=True) for name in ("r", "t", "rho", "u", "ur")}


def parse_expression(text, variables=("r", "t")) -> sp.Expr:
    """Parse ``text`` into a sympy expression over the allowed ``variables``.

    Numbers are accepted as-is, so scenario values like ``b = 1.2`` need no
    quoting.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return sp.Float(text) if isinstance(text, float) else sp.Integer(text)
    if isinstance(text, sp.Basic):
        return text
    if not isinstance(text, str):
        raise ExpressionError(f"expected an expression string, got {type(text).__name__}", 1)
    return _Parser(text, {v: SYMBOLS[v] for v in variables}).parse()


def compile_expression(expr: sp.Expr, variables=("r", "t")):
    """Vectorised numpy evaluator for ``expr``; output broadcasts to the inputs."""
    syms = [SYMBOLS[v] for v in variables]
    fn = sp.lambdify(syms, expr, modules=["numpy", "scipy"])

    def evaluate(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        out = np.asarray(fn(*args), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    return evaluate
