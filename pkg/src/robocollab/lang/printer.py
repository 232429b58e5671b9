"""Canonical formatter; ``parse(pretty_print(p)) == p`` for every well-formed tree."""

from __future__ import annotations

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
)

INDENT = "  "

_BINARY_PREC = {
    "or": 1,
    "and": 2,
    "==": 4, "!=": 4,
    "<": 5, ">": 5, "<=": 5, ">=": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7,
}
_NOT_PREC = 3
_NEG_PREC = 8
_POSTFIX_PREC = 9
_ATOM_PREC = 10

_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_string(value: str) -> str:
    return '"' + "".join(_STRING_ESCAPES.get(ch, ch) for ch in value) + '"'


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return _BINARY_PREC[node.op]
    if isinstance(node, UnaryOp):
        return _NOT_PREC if node.op == "not" else _NEG_PREC
    if isinstance(node, Index):
        return _POSTFIX_PREC
    return _ATOM_PREC


def _wrap(node, need: bool) -> str:
    text = format_expr(node)
    return f"({text})" if need else text


def format_expr(node) -> str:
    if isinstance(node, Literal):
        if node.kind == "number":
            return format_number(node.value)
        if node.kind == "string":
            return format_string(node.value)
        return "true" if node.value else "false"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(format_expr(a) for a in node.args)})"
    if isinstance(node, ListLit):
        return f"[{', '.join(format_expr(a) for a in node.items)}]"
    if isinstance(node, Index):
        return f"{_wrap(node.target, _prec(node.target) < _POSTFIX_PREC)}[{format_expr(node.index)}]"
    if isinstance(node, UnaryOp):
        if node.op == "not":
            return f"not {_wrap(node.operand, _prec(node.operand) < _NOT_PREC)}"
        return f"-{_wrap(node.operand, _prec(node.operand) < _NEG_PREC)}"
    if isinstance(node, BinOp):
        p = _BINARY_PREC[node.op]
        left = _wrap(node.left, _prec(node.left) < p)
        right = _wrap(node.right, _prec(node.right) <= p)
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _format_block(stmts, depth: int) -> list[str]:
    lines: list[str] = []
    for s in stmts:
        chunk = _format_stmt(s, depth)
        # Newlines are not significant, so a statement opening with "(", "["
        # or "-" would glue onto the previous one without a separator.
        if lines and chunk[0].lstrip()[:1] in ("(", "[", "-") and not lines[-1].endswith("}"):
            lines[-1] += ";"
        lines.extend(chunk)
    return lines


def _format_if(node: If, depth: int, lead: str) -> list[str]:
    pad = INDENT * depth
    lines = [f"{lead}if ({format_expr(node.cond)}) {{"]
    lines.extend(_format_block(node.then, depth + 1))
    if len(node.orelse) == 1 and isinstance(node.orelse[0], If):
        chained = _format_if(node.orelse[0], depth, f"{pad}}} else ")
        lines.extend(chained)
        return lines
    if node.orelse:
        lines.append(f"{pad}}} else {{")
        lines.extend(_format_block(node.orelse, depth + 1))
    lines.append(f"{pad}}}")
    return lines


def _format_stmt(node, depth: int) -> list[str]:
    pad = INDENT * depth
    if isinstance(node, Let):
        return [f"{pad}let {node.name} = {format_expr(node.value)}"]
    if isinstance(node, Assign):
        return [f"{pad}{node.name} = {format_expr(node.value)}"]
    if isinstance(node, Return):
        return [f"{pad}return" if node.value is None else f"{pad}return {format_expr(node.value)}"]
    if isinstance(node, If):
        return _format_if(node, depth, pad)
    if isinstance(node, While):
        return [f"{pad}while ({format_expr(node.cond)}) {{", *_format_block(node.body, depth + 1), f"{pad}}}"]
    if isinstance(node, ForEach):
        head = f"{pad}for ({node.var} in {format_expr(node.iterable)}) {{"
        return [head, *_format_block(node.body, depth + 1), f"{pad}}}"]
    return [pad + format_expr(node)]


def pretty_print(program: Program) -> str:
    lines = _format_block(program.statements, 0)
    return "\n".join(lines) + "\n" if lines else ""
