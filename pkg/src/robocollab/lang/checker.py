"""Static checks: unknown builtins, wrong arity, unbound variables."""

from __future__ import annotations

from dataclasses import dataclass

from .builtins import BUILTINS
from .nodes import (
    Assign,
    BinOp,
    Call,
    ForEach,
    If,
    Index,
    Let,
    ListLit,
    Program,
    Return,
    UnaryOp,
    Var,
    While,
)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"line": self.line, "column": self.column, "code": self.code, "message": self.message}

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.code}: {self.message}"


class _Checker:
    def __init__(self) -> None:
        self.scopes: list[set[str]] = [set()]
        self.diags: list[Diagnostic] = []

    def bound(self, name: str) -> bool:
        return any(name in s for s in self.scopes)

    def report(self, node, code: str, message: str) -> None:
        self.diags.append(Diagnostic(node.line, node.col, code, message))

    def block(self, stmts, extra: str | None = None) -> None:
        self.scopes.append({extra} if extra else set())
        for s in stmts:
            self.stmt(s)
        self.scopes.pop()

    def stmt(self, node) -> None:
        if isinstance(node, Let):
            self.expr(node.value)
            self.scopes[-1].add(node.name)
        elif isinstance(node, Assign):
            self.expr(node.value)
            if not self.bound(node.name):
                self.report(node, "unbound-variable", f"assignment to unbound variable {node.name!r}")
        elif isinstance(node, If):
            self.expr(node.cond)
            self.block(node.then)
            self.block(node.orelse)
        elif isinstance(node, While):
            self.expr(node.cond)
            self.block(node.body)
        elif isinstance(node, ForEach):
            self.expr(node.iterable)
            self.block(node.body, extra=node.var)
        elif isinstance(node, Return):
            if node.value is not None:
                self.expr(node.value)
        else:
            self.expr(node)

    def expr(self, node) -> None:
        if isinstance(node, Var):
            if not self.bound(node.name):
                self.report(node, "unbound-variable", f"variable {node.name!r} is never bound")
        elif isinstance(node, Call):
            sig = BUILTINS.get(node.name)
            if sig is None:
                self.report(node, "unknown-builtin", f"unknown builtin {node.name!r}")
            elif not sig.min_args <= len(node.args) <= sig.max_args:
                want = str(sig.min_args) if sig.min_args == sig.max_args else f"{sig.min_args}-{sig.max_args}"
                self.report(node, "arity", f"{node.name} takes {want} argument(s), got {len(node.args)}")
            for a in node.args:
                self.expr(a)
        elif isinstance(node, BinOp):
            self.expr(node.left)
            self.expr(node.right)
        elif isinstance(node, UnaryOp):
            self.expr(node.operand)
        elif isinstance(node, ListLit):
            for item in node.items:
                self.expr(item)
        elif isinstance(node, Index):
            self.expr(node.target)
            self.expr(node.index)


def static_check(program: Program) -> list[Diagnostic]:
    """Return diagnostics in source order; an empty list means clean."""
    c = _Checker()
    c.block(program.statements)
    return c.diags
