"""Tokenizer and recursive-descent parser for robot-command programs."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .nodes import (
    Assign,
    BinOp,
    Call,
    ForEach,
    If,
    Index,
    Let,
    ListLit,
    Literal,
    Program,
    Return,
    UnaryOp,
    Var,
    While,
    source_digest,
)

KEYWORDS = frozenset({"let", "if", "else", "while", "for", "in", "return", "true", "false", "and", "or", "not"})

MAX_DEPTH = 96

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[-+*/<>=(){}\[\],;])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # number | string | name | keyword | op | eof
    text: str
    line: int
    col: int


def _unescape(body: str, line: int, col: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ParseError(f"unknown escape \\{nxt}", line, col + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            if source[pos] == '"':
                raise ParseError("unterminated string literal", line, col)
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "name" and text in KEYWORDS:
            kind = "keyword"
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# Binary precedence levels, loosest first. "not" sits between "and" and equality.
_LEVELS = (("or",), ("and",), None, ("==", "!="), ("<", ">", "<=", ">="), ("+", "-"), ("*", "/"))


class _Parser:
    def __init__(self, source: str) -> None:
        self.tokens = tokenize(source)
        self.pos = 0
        self.depth = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "keyword") and t.text == text

    def expect(self, text: str, context: str = "") -> Token:
        if not self.at(text):
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            where = f" {context}" if context else ""
            raise ParseError(f"expected {text!r}{where}, found {found}", self.tok.line, self.tok.col)
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(message, t.line, t.col)

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.error("nesting too deep")

    def leave(self) -> None:
        self.depth -= 1

    # statements

    def program(self) -> tuple:
        stmts = []
        while self.tok.kind != "eof":
            stmts.append(self.statement())
        return tuple(stmts)

    def block(self, what: str) -> tuple:
        self.expect("{", f"to open {what}")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error(f"unclosed block in {what}")
            stmts.append(self.statement())
        self.advance()
        return tuple(stmts)

    def statement(self):
        self.enter()
        try:
            stmt = self._statement()
        finally:
            self.leave()
        if self.at(";"):
            self.advance()
        return stmt

    def _statement(self):
        t = self.tok
        pos = {"line": t.line, "col": t.col}
        if self.at("let"):
            self.advance()
            name = self.name("after 'let'")
            self.expect("=", "in let binding")
            return Let(name, self.expr(), **pos)
        if t.kind == "name" and self.tokens[self.pos + 1].text == "=" and self.tokens[self.pos + 1].kind == "op":
            self.advance()
            self.advance()
            return Assign(t.text, self.expr(), **pos)
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.advance()
            self.expect("(", "after 'while'")
            cond = self.expr()
            self.expect(")", "to close while condition")
            body = self.block("while body")
            if not body:
                raise self.error("loop body must not be empty", t)
            return While(cond, body, **pos)
        if self.at("for"):
            self.advance()
            self.expect("(", "after 'for'")
            var = self.name("as loop variable")
            self.expect("in", "in for loop")
            iterable = self.expr()
            self.expect(")", "to close for header")
            body = self.block("for body")
            if not body:
                raise self.error("loop body must not be empty", t)
            return ForEach(var, iterable, body, **pos)
        if self.at("return"):
            self.advance()
            nxt = self.tok
            if nxt.kind == "eof" or nxt.line != t.line or (nxt.kind == "op" and nxt.text in ("}", ";")):
                return Return(None, **pos)
            return Return(self.expr(), **pos)
        if self.at("else"):
            raise self.error("'else' without matching 'if'")
        return self.expr()

    def if_stmt(self) -> If:
        t = self.expect("if")
        self.expect("(", "after 'if'")
        cond = self.expr()
        self.expect(")", "to close if condition")
        then = self.block("if body")
        orelse: tuple = ()
        if self.at("else"):
            self.advance()
            if self.at("if"):
                self.enter()
                try:
                    orelse = (self.if_stmt(),)
                finally:
                    self.leave()
            else:
                orelse = self.block("else body")
        return If(cond, then, orelse, line=t.line, col=t.col)

    def name(self, context: str) -> str:
        t = self.tok
        if t.kind != "name":
            found = "end of input" if t.kind == "eof" else repr(t.text)
            raise self.error(f"expected identifier {context}, found {found}")
        self.advance()
        return t.text

    # expressions

    def expr(self):
        self.enter()
        try:
            return self.binary(0)
        finally:
            self.leave()

    def binary(self, level: int):
        if level == len(_LEVELS):
            return self.unary()
        ops = _LEVELS[level]
        if ops is None:
            return self.not_expr(level)
        left = self.binary(level + 1)
        while self.tok.kind in ("op", "keyword") and self.tok.text in ops:
            t = self.advance()
            right = self.binary(level + 1)
            left = BinOp(t.text, left, right, line=t.line, col=t.col)
        return left

    def not_expr(self, level: int):
        if self.at("not"):
            t = self.advance()
            self.enter()
            try:
                operand = self.not_expr(level)
            finally:
                self.leave()
            return UnaryOp("not", operand, line=t.line, col=t.col)
        return self.binary(level + 1)

    def unary(self):
        if self.at("-"):
            t = self.advance()
            self.enter()
            try:
                operand = self.unary()
            finally:
                self.leave()
            return UnaryOp("-", operand, line=t.line, col=t.col)
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while self.at("["):
            t = self.advance()
            idx = self.expr()
            self.expect("]", "to close index")
            node = Index(node, idx, line=t.line, col=t.col)
        return node

    def primary(self):
        t = self.tok
        pos = {"line": t.line, "col": t.col}
        if t.kind == "number":
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise self.error("number out of range", t)
            return Literal(value, "number", **pos)
        if t.kind == "string":
            self.advance()
            return Literal(_unescape(t.text[1:-1], t.line, t.col), "string", **pos)
        if self.at("true") or self.at("false"):
            self.advance()
            return Literal(t.text == "true", "bool", **pos)
        if t.kind == "name":
            self.advance()
            if self.at("("):
                self.advance()
                args = self.items(")", "argument list")
                return Call(t.text, args, **pos)
            return Var(t.text, **pos)
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")", "to close parenthesis")
            return inner
        if self.at("["):
            self.advance()
            return ListLit(self.items("]", "list literal"), **pos)
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise self.error(f"expected expression, found {found}")

    def items(self, close: str, what: str) -> tuple:
        out = []
        if not self.at(close):
            out.append(self.expr())
            while self.at(","):
                self.advance()
                out.append(self.expr())
        self.expect(close, f"to close {what}")
        return tuple(out)


_PAIRS = {"(": ")", "[": "]", "{": "}"}


def _unclosed(tokens: list[Token]) -> Token | None:
    stack: list[Token] = []
    for t in tokens:
        if t.kind != "op":
            continue
        if t.text in _PAIRS:
            stack.append(t)
        elif t.text in _PAIRS.values():
            if not stack or _PAIRS[stack[-1].text] != t.text:
                return None
            stack.pop()
    return stack[-1] if stack else None


def parse(source: str) -> Program:
    """Parse program text into a :class:`Program`; raises :class:`ParseError`."""
    p = _Parser(source)
    try:
        stmts = p.program()
    except RecursionError:
        raise ParseError("nesting too deep", p.tok.line, p.tok.col) from None
    except ParseError:
        # Running off the end usually means a delimiter was never closed;
        # point at the opener rather than at end of input.
        if p.tok.kind == "eof":
            opener = _unclosed(p.tokens)
            if opener is not None:
                raise ParseError(f"unclosed {opener.text!r}", opener.line, opener.col) from None
        raise
    return Program(stmts, source_digest(source))
