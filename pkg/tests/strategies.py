"""Hypothesis strategies and a seeded program fuzzer shared by the test modules."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from robocollab.lang import BUILTINS, pretty_print
from robocollab.lang.nodes import (
    Assign, BinOp, Call, ForEach, If, Index, Let, ListLit, Literal, Program, Return, UnaryOp, Var, While,
)
from robocollab.lang.parser import KEYWORDS

NAMES = st.text("abcdefgxyz_", min_size=1, max_size=6).filter(lambda s: s not in KEYWORDS and s not in BUILTINS)
NUMBERS = st.floats(min_value=0, max_value=1e20, allow_nan=False, allow_infinity=False)
STRINGS = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)

literals = st.one_of(
    NUMBERS.map(lambda v: Literal(float(v), "number")),
    STRINGS.map(lambda v: Literal(v, "string")),
    st.booleans().map(lambda v: Literal(v, "bool")),
)
BINARY = ("+", "-", "*", "/", "<", ">", "<=", ">=", "==", "!=", "and", "or")


def _extend(children):
    return st.one_of(
        st.builds(BinOp, st.sampled_from(BINARY), children, children),
        st.builds(UnaryOp, st.sampled_from(("not", "-")), children),
        st.lists(children, max_size=3).map(lambda xs: ListLit(tuple(xs))),
        st.builds(Index, children, children),
        st.builds(Call, st.sampled_from(sorted(BUILTINS) + ["foo"]),
                  st.lists(children, max_size=2).map(tuple)),
    )


exprs = st.recursive(st.one_of(literals, NAMES.map(Var)), _extend, max_leaves=8)


def _blocks(stmts, min_size=0):
    return st.lists(stmts, min_size=min_size, max_size=3).map(tuple)


def _stmt_extend(children):
    return st.one_of(
        st.builds(If, exprs, _blocks(children), _blocks(children)),
        st.builds(While, exprs, _blocks(children, 1)),
        st.builds(ForEach, NAMES, exprs, _blocks(children, 1)),
    )


simple_stmts = st.one_of(
    st.builds(Let, NAMES, exprs),
    st.builds(Assign, NAMES, exprs),
    st.builds(Return, st.none() | exprs),
    exprs,
)
stmts = st.recursive(simple_stmts, _stmt_extend, max_leaves=6)
programs = st.lists(stmts, max_size=6).map(lambda xs: Program(tuple(xs)))


# Seeded fuzzer for totality checks: mixes well-formed generated programs with
# token soup and mutated fixtures, so every status gets exercised.

_TOKENS = ["let", "x", "y", "=", "(", ")", "{", "}", "[", "]", ",", "if", "else", "while", "for", "in",
           "return", "true", "false", "and", "or", "not", "+", "-", "*", "/", "<", "==", "1", "0", "2.5",
           '"a"', "walk_to", "say", "nearest", "fiducials", "len", "\n", ";"]

_TEMPLATES = [
    "let x = {a}\nwhile (true) {{ x = x + 1 }}",
    "let xs = [{a}, {b}]\nfor (v in xs) {{ say(str(v)) }}",
    "let f = nearest(\"{label}\")\nif (f == false) {{ say(\"none\") }} else {{ walk_to(f) }}",
    "let i = 0\nwhile (i < {n}) {{ i = i + 1 }}",
    "say(str({a} / {b}))",
    "let xs = [{a}]\nsay(str(xs[{n}]))",
    "walk_to([{a}, {b}])",
    "let s = \"{label}\"\nwhile (true) {{ s = s + \"!\" }}",
    "for (f in fiducials()) {{ nudge(f) }}",
    "let x = {a} + \"{label}\"",
    "while (true) {{ wait_for_user() }}",
    "return {a}\nsay(\"unreached\")",
]

LABELS = ["chair", "person", "oven", "microwave", "refrigerator", "donut", "apple", "table"]


def fuzz_source(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.4:
        t = rng.choice(_TEMPLATES)
        return t.format(a=rng.choice(["0", "1", "3.5", "-2", "100", "\"q\"", "true"]),
                        b=rng.choice(["0", "2", "-1", "9"]), n=rng.randint(0, 50), label=rng.choice(LABELS))
    if kind < 0.7:
        return " ".join(rng.choice(_TOKENS) for _ in range(rng.randint(1, 30)))
    src = rng.choice(_TEMPLATES).format(a="1", b="2", n=3, label="chair")
    chars = list(src)
    for _ in range(rng.randint(1, 4)):
        pos = rng.randrange(len(chars) + 1)
        if rng.random() < 0.5 and chars:
            del chars[min(pos, len(chars) - 1)]
        else:
            chars.insert(pos, rng.choice("(){}[]\"x1=;+\n"))
    return "".join(chars)


def printed(program: Program) -> str:
    return pretty_print(program)


# Seeded AST builder, for loops that need many programs without hypothesis.

_VARS = ["a", "b", "xs", "f", "n"]


def random_expr(rng: random.Random, depth: int = 0):
    r = rng.random()
    if depth > 3 or r < 0.3:
        pick = rng.randrange(4)
        if pick == 0:
            return Literal(float(rng.choice([0, 1, 2, 0.5, 1e17, 7])), "number")
        if pick == 1:
            return Literal(rng.choice(["", "hi", 'q"\n', "chair"]), "string")
        if pick == 2:
            return Literal(rng.random() < 0.5, "bool")
        return Var(rng.choice(_VARS))
    if r < 0.55:
        return BinOp(rng.choice(BINARY), random_expr(rng, depth + 1), random_expr(rng, depth + 1))
    if r < 0.65:
        return UnaryOp(rng.choice(("not", "-")), random_expr(rng, depth + 1))
    if r < 0.75:
        return ListLit(tuple(random_expr(rng, depth + 1) for _ in range(rng.randint(0, 3))))
    if r < 0.85:
        return Index(random_expr(rng, depth + 1), random_expr(rng, depth + 1))
    name = rng.choice(sorted(BUILTINS))
    sig = BUILTINS[name]
    return Call(name, tuple(random_expr(rng, depth + 1) for _ in range(rng.randint(sig.min_args, sig.max_args))))


def random_stmt(rng: random.Random, depth: int = 0):
    r = rng.random()
    body = lambda k: tuple(random_stmt(rng, depth + 1) for _ in range(rng.randint(k, 3)))
    if depth < 2 and r < 0.12:
        return If(random_expr(rng), body(0), body(0) if rng.random() < 0.5 else ())
    if depth < 2 and r < 0.2:
        return While(random_expr(rng), body(1))
    if depth < 2 and r < 0.28:
        return ForEach(rng.choice(_VARS), random_expr(rng), body(1))
    if r < 0.55:
        return Let(rng.choice(_VARS), random_expr(rng))
    if r < 0.7:
        return Assign(rng.choice(_VARS), random_expr(rng))
    if r < 0.75:
        return Return(random_expr(rng) if rng.random() < 0.5 else None)
    return random_expr(rng)


def random_program(rng: random.Random) -> Program:
    return Program(tuple(random_stmt(rng) for _ in range(rng.randint(1, 8))))
