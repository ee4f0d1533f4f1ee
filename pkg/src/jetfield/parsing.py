"""Text syntax for expressions.

    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := '-' factor | base ('^' int)?
    base   := rational | symbol | call | 'D[' k (',' k)* ']' call | '(' expr ')'
    call   := symbol '(' expr (',' expr)* ')'

``D[k] f(...)`` is the partial of opaque ``f`` in its k-th argument
(1-based).  Rationals are written ``3`` or ``3/4``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .expr import ArityError, Expr, apply, const, sym

__all__ = ["ParseError", "Scope", "parse_tree", "build", "parse_expr"]


class ParseError(ValueError):
    """Syntax or resolution error; ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.message = message
        super().__init__(f"{message} at byte {offset}")


@dataclass
class Scope:
    """Symbols and opaque functions an expression may mention."""

    symbols: set = field(default_factory=set)
    functions: dict = field(default_factory=dict)  # name -> arity

    @classmethod
    def of(cls, frame=None, functions: Mapping[str, int] | None = None, extra=()) -> Scope:
        syms = set(extra)
        funcs = dict(functions or {})
        if frame is not None:
            syms |= set(getattr(frame, "symbols", frame))
            funcs.update(getattr(frame, "functions", {}) or {})
        return cls(syms, funcs)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<deriv>D\[)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^(),\]]))"
)


def _tokenize(text: str):
    raw = text.encode("utf-8")
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            off = len(text[:pos].encode("utf-8")) + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}", off, text)
        kind = m.lastgroup
        start = len(text[: m.start(kind)].encode("utf-8"))
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("eof", "", len(raw)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.text = text

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise ParseError(f"expected {want!r}, got {got!r}", tok[2], self.text)
        self.i += 1
        return tok

    def at(self, value):
        return self.toks[self.i][0] == "op" and self.toks[self.i][1] == value

    def expr(self):
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            rhs = self.term()
            node = ("add", node, rhs) if op == "+" else ("add", node, ("neg", rhs))
        return node

    def term(self):
        node = self.factor()
        while self.at("*"):
            self.take()
            node = ("mul", node, self.factor())
        return node

    def factor(self):
        if self.at("-"):
            self.take()
            return ("neg", self.factor())
        base = self.base()
        if self.at("^"):
            self.take()
            neg = False
            if self.at("-"):
                self.take()
                neg = True
            kind, val, off = self.take("num")
            if "/" in val:
                raise ParseError("exponent must be an integer", off, self.text)
            base = ("pow", base, -int(val) if neg else int(val), off)
        return base

    def base(self):
        kind, val, off = self.peek()
        if kind == "num":
            self.take()
            return ("num", Fraction(val))
        if kind == "deriv":
            self.take()
            ks = [self._index()]
            while self.at(","):
                self.take()
                ks.append(self._index())
            self.take("op", "]")
            name_tok = self.take("name")
            call = self._call(name_tok)
            if call[0] != "call":
                raise ParseError("D[...] must be followed by a function application", name_tok[2], self.text)
            return ("call", call[1], call[2], tuple(ks), call[4])
        if kind == "name":
            self.take()
            return self._call((kind, val, off))
        if self.at("("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ParseError(f"unexpected {val or 'end of input'!r}", off, self.text)

    def _index(self):
        kind, val, off = self.take("num")
        if "/" in val or int(val) < 1:
            raise ParseError("partial index must be a positive integer", off, self.text)
        return int(val) - 1

    def _call(self, name_tok):
        _, name, off = name_tok
        if not self.at("("):
            return ("sym", name, off)
        self.take()
        args = [self.expr()]
        while self.at(","):
            self.take()
            args.append(self.expr())
        self.take("op", ")")
        return ("call", name, tuple(args), (), off)


def parse_tree(text: str) -> tuple:
    """Parse to a raw (uncanonicalized) tree of tuples."""
    p = _Parser(text)
    node = p.expr()
    kind, val, off = p.peek()
    if kind != "eof":
        raise ParseError(f"unexpected {val!r}", off, text)
    return node


def build(node: tuple, scope: Scope | None = None) -> Expr:
    """Canonicalize a raw tree, resolving names against ``scope``."""
    tag = node[0]
    if tag == "num":
        return const(node[1])
    if tag == "sym":
        name, off = node[1], node[2]
        if scope is not None and name not in scope.symbols:
            if name in scope.functions:
                raise ParseError(f"function {name} used without arguments", off)
            raise ParseError(f"unknown symbol {name!r}", off)
        return sym(name)
    if tag == "add":
        return build(node[1], scope) + build(node[2], scope)
    if tag == "neg":
        return -build(node[1], scope)
    if tag == "mul":
        return build(node[1], scope) * build(node[2], scope)
    if tag == "pow":
        b = build(node[1], scope)
        try:
            return b ** node[2]
        except ValueError as exc:
            raise ParseError(str(exc), node[3]) from None
    if tag == "call":
        _, name, args, derivs, off = node
        if scope is not None:
            if name not in scope.functions:
                raise ParseError(f"unknown function {name!r}", off)
            if scope.functions[name] != len(args):
                raise ParseError(
                    f"arity mismatch: {name} declared with {scope.functions[name]} arguments, got {len(args)}", off
                )
        try:
            return apply(name, *(build(a, scope) for a in args), derivs=derivs)
        except ArityError as exc:
            raise ParseError(str(exc), off) from None
    raise ValueError(f"bad node {node!r}")


def parse_expr(text: str, frame=None, functions: Mapping[str, int] | None = None, extra=()) -> Expr:
    """Parse ``text`` to a canonical :class:`Expr`.

    ``frame`` is anything exposing ``symbols`` (and optionally
    ``functions``), or a plain iterable of names.  With ``frame=None`` and
    no ``functions`` every name is accepted and every call is opaque.
    """
    tree = parse_tree(text)
    if frame is None and functions is None and not extra:
        return build(tree, None)
    return build(tree, Scope.of(frame, functions, extra))
