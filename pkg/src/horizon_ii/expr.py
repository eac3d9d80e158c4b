"""Scalar expression language for vector fields and maps.

Grammar (whitespace-insensitive)::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := primary ('^' exponent)?
    exponent := '-'? INTEGER | '(' '-'? INTEGER ')' | INTEGER '^' exponent
    primary  := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

    NUMBER   := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
    NAME     := letter (letter | digit | '_')*
    FUNCTION := sin | cos | tanh | exp | log | sqrt | abs

Binding strength is ``^`` > unary ``-`` > ``* /`` > ``+ -``; ``^`` groups to the
right, everything else to the left.  Exponents must be integer literals
(``x^-2`` is allowed, ``x^0.5`` is not: write ``sqrt(x)``).  Multiplication is
never implicit.

Every name that is not a function must appear in the declared symbol list
passed to :func:`parse`.  Parsed expressions are immutable; they compile
lazily to a Python function that accepts floats, numpy arrays or
:class:`~horizon_ii.dual.Dual` numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from . import dual as D

__all__ = [
    "Expr",
    "ParseError",
    "UndeclaredSymbolError",
    "DomainError",
    "Num",
    "Sym",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "parse",
    "to_string",
    "substitute",
    "FUNCTIONS",
]

DomainError = D.DomainError

FUNCTIONS = {
    "sin": D.sin,
    "cos": D.cos,
    "tanh": D.tanh,
    "exp": D.exp,
    "log": D.log,
    "sqrt": D.sqrt,
    "abs": D.fabs,
}


class ParseError(ValueError):
    def __init__(self, message: str, source: str = "", position: int = -1):
        self.position = position
        self.source = source
        where = f" at position {position}" if position >= 0 else ""
        super().__init__(f"{message}{where}" + (f" in {source!r}" if source else ""))


class UndeclaredSymbolError(ParseError):
    def __init__(self, name: str, source: str = "", position: int = -1):
        self.symbol = name
        super().__init__(f"undeclared symbol {name!r}", source, position)


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Sym, Neg, BinOp, Pow, Call]


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    end = len(source.rstrip())
    while pos < end:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", source, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, symbols: frozenset[str]):
        self.source = source
        self.symbols = symbols
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.advance()
        if text != value or kind == "end":
            got = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, got {got}", self.source, pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", self.source, pos)
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
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        kind, text, pos = self.peek()
        if (kind, text) == ("op", "("):
            self.advance()
            n = self.exponent()
            self.expect(")")
            value = n
        else:
            sign = 1
            if (kind, text) == ("op", "-"):
                self.advance()
                sign = -1
                kind, text, pos = self.peek()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be an integer literal", self.source, pos)
            self.advance()
            value = sign * int(text)
        if self.peek()[:2] == ("op", "^"):
            # right-assoc chain of integer literals: 2^3^2 == 2^9
            self.advance()
            inner = self.exponent()
            if inner < 0:
                raise ParseError("negative exponent inside an exponent", self.source, pos)
            value = value**inner
        return value

    def primary(self) -> Node:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if self.peek()[:2] == ("op", "("):
                raise ParseError(f"unknown function {text!r}", self.source, pos)
            if text not in self.symbols:
                raise UndeclaredSymbolError(text, self.source, pos)
            return Sym(text)
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {got}", self.source, pos)


# --- printing, traversal -------------------------------------------------------


def to_string(node: Node) -> str:
    """Canonical, fully parenthesised text form; ``parse`` inverts it."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Pow):
        return f"({to_string(node.base)}^({node.exponent}))"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    raise TypeError(node)


def _free(node: Node, acc: set[str]) -> set[str]:
    if isinstance(node, Sym):
        acc.add(node.name)
    elif isinstance(node, (Neg, Call)):
        _free(node.arg, acc)
    elif isinstance(node, Pow):
        _free(node.base, acc)
    elif isinstance(node, BinOp):
        _free(node.left, acc)
        _free(node.right, acc)
    return acc


def _subst(node: Node, mapping: Mapping[str, Node]) -> Node:
    if isinstance(node, Sym):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return Neg(_subst(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.func, _subst(node.arg, mapping))
    if isinstance(node, Pow):
        return Pow(_subst(node.base, mapping), node.exponent)
    if isinstance(node, BinOp):
        return BinOp(node.op, _subst(node.left, mapping), _subst(node.right, mapping))
    return node


def _codegen(node: Node, names: Mapping[str, str]) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Sym):
        return names[node.name]
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg, names)})"
    if isinstance(node, BinOp):
        left, right = _codegen(node.left, names), _codegen(node.right, names)
        if node.op == "/":
            return f"_div({left}, {right})"
        return f"({left} {node.op} {right})"
    if isinstance(node, Pow):
        return f"_ipow({_codegen(node.base, names)}, {node.exponent})"
    if isinstance(node, Call):
        return f"_f_{node.func}({_codegen(node.arg, names)})"
    raise TypeError(node)


_NAMESPACE = {"_div": D.div, "_ipow": D.ipow, **{f"_f_{k}": v for k, v in FUNCTIONS.items()}}


# --- public Expr -------------------------------------------------------------


class Expr:
    """An immutable parsed expression over a declared symbol list."""

    __slots__ = ("node", "symbols", "source", "_fn")

    def __init__(self, node: Node, symbols: Sequence[str], source: str | None = None):
        self.node = node
        self.symbols = tuple(symbols)
        self.source = source if source is not None else to_string(node)
        self._fn = None

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"

    def __str__(self) -> str:
        return self.source

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.node == other.node

    def __hash__(self) -> int:
        return hash(self.node)

    @property
    def free_symbols(self) -> frozenset[str]:
        return frozenset(_free(self.node, set()))

    def canonical(self) -> str:
        return to_string(self.node)

    def compiled(self):
        """Python function taking one positional argument per declared symbol."""
        if self._fn is None:
            names = {s: f"_a{i}" for i, s in enumerate(self.symbols)}
            args = ", ".join(names[s] for s in self.symbols)
            code = f"lambda {args}: {_codegen(self.node, names)}"
            fn = eval(compile(code, f"<expr {self.source}>", "eval"), dict(_NAMESPACE))
            self._fn = fn
        return self._fn

    def __call__(self, *args):
        try:
            return self.compiled()(*args)
        except ZeroDivisionError as err:
            raise DomainError(f"division by zero in {self.source!r}") from err
        except OverflowError as err:
            raise DomainError(f"overflow in {self.source!r}") from err

    def eval(self, point: Mapping[str, float]) -> float:
        """Evaluate at a symbol -> value binding."""
        try:
            args = [point[s] for s in self.symbols]
        except KeyError as err:
            raise KeyError(f"point does not bind symbol {err.args[0]!r}") from None
        return float(self(*args))

    def diff_eval(self, point: Mapping[str, float], wrt: str) -> tuple[float, float]:
        """Value and exact partial derivative with respect to ``wrt``."""
        if wrt not in self.symbols:
            raise KeyError(f"{wrt!r} is not a declared symbol")
        tag = D.new_tag()
        args = [D.Dual(float(point[s]), 1.0 if s == wrt else 0.0, tag) for s in self.symbols]
        out = self(*args)
        if isinstance(out, D.Dual) and out.tag == tag:
            return float(out.val), float(out.eps)
        return float(out), 0.0

    def substitute(self, mapping: Mapping[str, "Expr | Node"], symbols: Sequence[str]) -> "Expr":
        return substitute(self, mapping, symbols)


def parse(source: str, symbols: Sequence[str]) -> Expr:
    """Parse ``source`` into an :class:`Expr` over ``symbols``.

    Raises :class:`ParseError` (with position) for malformed input and
    :class:`UndeclaredSymbolError` for names outside ``symbols``.
    """
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty expression")
    symbols = tuple(symbols)
    if len(set(symbols)) != len(symbols):
        raise ValueError(f"duplicate symbols in {symbols!r}")
    clash = set(symbols) & set(FUNCTIONS)
    if clash:
        raise ValueError(f"symbols shadow function names: {sorted(clash)}")
    node = _Parser(source, frozenset(symbols)).parse()
    return Expr(node, symbols, source.strip())


def substitute(e: Expr, mapping: Mapping[str, "Expr | Node"], symbols: Sequence[str]) -> Expr:
    """Replace symbols by sub-expressions; result is declared over ``symbols``."""
    nodes = {k: (v.node if isinstance(v, Expr) else v) for k, v in mapping.items()}
    node = _subst(e.node, nodes)
    missing = _free(node, set()) - set(symbols)
    if missing:
        raise UndeclaredSymbolError(sorted(missing)[0])
    return Expr(node, symbols)
