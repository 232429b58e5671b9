"""AST node types for the robot-command language.

Source positions are carried on every node but excluded from equality, so two
trees compare equal when they have the same structure and values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

BINARY_OPS = ("+", "-", "*", "/", "<", ">", "<=", ">=", "==", "!=", "and", "or")
UNARY_OPS = ("not", "-")


@dataclass(frozen=True)
class Node:
    line: int = field(default=0, compare=False, kw_only=True, repr=False)
    col: int = field(default=0, compare=False, kw_only=True, repr=False)


@dataclass(frozen=True)
class Literal(Node):
    value: float | str | bool
    kind: str  # "number" | "string" | "bool"


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class UnaryOp(Node):
    op: str
    operand: Expr


@dataclass(frozen=True)
class ListLit(Node):
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class Index(Node):
    target: Expr
    index: Expr


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Let(Node):
    name: str
    value: Expr


@dataclass(frozen=True)
class Assign(Node):
    name: str
    value: Expr


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    then: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()


@dataclass(frozen=True)
class While(Node):
    cond: Expr
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class ForEach(Node):
    var: str
    iterable: Expr
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class Return(Node):
    value: Expr | None = None


Expr = Union[Literal, Var, BinOp, UnaryOp, ListLit, Index, Call]
Stmt = Union[Let, Assign, If, While, ForEach, Return, Expr]

EXPR_TYPES = (Literal, Var, BinOp, UnaryOp, ListLit, Index, Call)


@dataclass(frozen=True)
class Program:
    statements: tuple[Stmt, ...]
    source_hash: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.statements)


def source_digest(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def walk(node):
    """Yield ``node`` and all nodes beneath it, depth first."""
    yield node
    if isinstance(node, Program):
        children = node.statements
    elif isinstance(node, BinOp):
        children = (node.left, node.right)
    elif isinstance(node, UnaryOp):
        children = (node.operand,)
    elif isinstance(node, ListLit):
        children = node.items
    elif isinstance(node, Index):
        children = (node.target, node.index)
    elif isinstance(node, Call):
        children = node.args
    elif isinstance(node, (Let, Assign)):
        children = (node.value,)
    elif isinstance(node, If):
        children = (node.cond, *node.then, *node.orelse)
    elif isinstance(node, While):
        children = (node.cond, *node.body)
    elif isinstance(node, ForEach):
        children = (node.iterable, *node.body)
    elif isinstance(node, Return):
        children = () if node.value is None else (node.value,)
    else:
        children = ()
    for child in children:
        yield from walk(child)
