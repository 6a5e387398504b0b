"""Recursive-descent parser for the metric expression language.

Grammar (whitespace insignificant, ``^`` right-associative)::

    expr   = term { ("+"|"-") term } ;
    term   = factor { ("*"|"/") factor } ;
    factor = unary [ "^" factor ] ;
    unary  = [ "-" ] base ;
    base   = NUMBER | IDENT | "(" expr ")" | FUNC "(" expr ")" ;
    IDENT  = ("x"|"p") DIGITS ;
    FUNC   = "sqrt"|"exp"|"log"|"sin"|"cos" ;

Note that by this grammar ``-p1^2`` is ``(-p1)^2``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import expr as E


class MetricSyntaxError(ValueError):
    """Malformed expression text; carries a 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownIdentifierError(MetricSyntaxError):
    pass


class VariableIndexError(MetricSyntaxError):
    pass


@dataclass
class Token:
    kind: str  # NUM, IDENT, FUNC, OP, LPAREN, RPAREN, END
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^])"
    r"|(?P<lp>\()"
    r"|(?P<rp>\))"
)
_IDENT_RE = re.compile(r"([xp])(\d+)$")


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise MetricSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "ws":
            nl = s.count("\n")
            if nl:
                line += nl
                line_start = pos + s.rindex("\n") + 1
        elif kind == "num":
            tokens.append(Token("NUM", s, line, col))
        elif kind == "name":
            if s in E.FUNCTIONS:
                tokens.append(Token("FUNC", s, line, col))
            elif _IDENT_RE.match(s):
                tokens.append(Token("IDENT", s, line, col))
            else:
                raise UnknownIdentifierError(f"unknown identifier {s!r}", line, col)
        elif kind == "op":
            tokens.append(Token("OP", s, line, col))
        elif kind == "lp":
            tokens.append(Token("LPAREN", s, line, col))
        else:
            tokens.append(Token("RPAREN", s, line, col))
        pos = m.end()
    tokens.append(Token("END", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, dim: int):
        self.tokens = tokenize(text)
        self.i = 0
        self.dim = dim

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _error(self, msg, tok=None):
        tok = tok or self.tok
        return MetricSyntaxError(msg, tok.line, tok.col)

    def _expect(self, kind, text=None):
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            raise self._error(f"expected {want!r}, found {got!r}")
        self.i += 1
        return t

    def parse(self) -> E.Expr:
        e = self.expr()
        if self.tok.kind != "END":
            raise self._error(f"unexpected token {self.tok.text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "OP" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.factor()
        while self.tok.kind == "OP" and self.tok.text in "*/":
            op = self.tok.text
            tok = self.tok
            self.i += 1
            rhs = self.factor()
            if op == "*":
                e = e * rhs
            else:
                try:
                    e = E.div(e, rhs)
                except E.DomainError as exc:
                    raise self._error(str(exc), tok) from None
        return e

    def factor(self):
        base = self.unary()
        if self.tok.kind == "OP" and self.tok.text == "^":
            tok = self.tok
            self.i += 1
            exponent = self.factor()
            try:
                return E.power(base, exponent)
            except (ValueError, E.DomainError) as exc:
                raise self._error(str(exc), tok) from None
        return base

    def unary(self):
        if self.tok.kind == "OP" and self.tok.text == "-":
            self.i += 1
            return E.neg(self.base())
        return self.base()

    def base(self):
        t = self.tok
        if t.kind == "NUM":
            self.i += 1
            return E.const(float(t.text))
        if t.kind == "IDENT":
            self.i += 1
            kind, idx = _IDENT_RE.match(t.text).groups()
            idx = int(idx)
            if not 1 <= idx <= self.dim:
                raise VariableIndexError(
                    f"variable {t.text!r} out of range for dimension {self.dim}", t.line, t.col)
            return E.var(kind, idx)
        if t.kind == "FUNC":
            self.i += 1
            self._expect("LPAREN")
            arg = self.expr()
            self._expect("RPAREN")
            return E.func(t.text, arg)
        if t.kind == "LPAREN":
            self.i += 1
            e = self.expr()
            self._expect("RPAREN")
            return e
        got = t.text or "end of input"
        raise self._error(f"unexpected {got!r}")


def parse_expression(text: str, dim: int) -> E.Expr:
    """Parse ``text`` into an interned expression over x1..xdim, p1..pdim."""
    return _Parser(text, dim).parse()
