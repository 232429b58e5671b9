from __future__ import annotations

import random

import pytest
from hypothesis import given, settings

from robocollab.bench import fixture_program
from robocollab.lang import STATUSES, Limits, ParseError, execute, parse, pretty_print, run_source, static_check, tokenize
from robocollab.lang.nodes import BinOp, Call, Let, Literal, Program, UnaryOp, Var
from robocollab.world import spawn_world

from strategies import fuzz_source, programs


def run(src: str, ctx: int = 1, **limits):
    return run_source(src, spawn_world(ctx), Limits(**limits) if limits else None)


# parsing

def test_precedence():
    p = parse("let x = 1 + 2 * 3 - -4")
    assert p.statements[0] == Let("x", BinOp("-", BinOp("+", Literal(1.0, "number"),
                                                        BinOp("*", Literal(2.0, "number"), Literal(3.0, "number"))),
                                             UnaryOp("-", Literal(4.0, "number"))))


def test_logic_precedence():
    e = parse("a or not b and c == d").statements[0]
    assert e == BinOp("or", Var("a"), BinOp("and", UnaryOp("not", Var("b")), BinOp("==", Var("c"), Var("d"))))


def test_string_escapes_and_comments():
    p = parse('say("a\\n\\"b\\"") # trailing\n')
    assert p.statements[0] == Call("say", (Literal('a\n"b"', "string"),))


@pytest.mark.parametrize("src, where", [
    ("let = 3", "1:5"),
    ("if (", "1:4"),
    ("say(\"x)", "1:5"),
    ("while (true) {}", "1:1"),
    ("let x = 1 +", "1:12"),
    ("3 = 4", "1:3"),
])
def test_parse_errors_carry_position(src, where):
    with pytest.raises(ParseError) as exc:
        parse(src)
    assert str(exc.value).startswith(where)


def test_deep_nesting_is_parse_error():
    with pytest.raises(ParseError):
        parse("let x = " + "(" * 500 + "1" + ")" * 500)


def test_tokenize_positions():
    toks = tokenize("let x\n  = 2")
    assert [(t.text, t.line, t.col) for t in toks if t.kind != "eof"] == [("let", 1, 1), ("x", 1, 5), ("=", 2, 3), ("2", 2, 5)]


def test_source_hash_recorded():
    assert len(parse("say(\"a\")").source_hash) == 64


# static check

def test_static_check_reports_each_problem():
    diags = static_check(parse("let a = 1\nwalk_to(b)\nsay(1, 2)\nfly()\nfor (f in fiducials()) { say(f) }\nsay(f)"))
    assert [(d.line, d.code) for d in diags] == [(2, "unbound-variable"), (3, "arity"), (4, "unknown-builtin"),
                                                 (6, "unbound-variable")]


def test_static_check_clean_fixtures():
    for t in range(1, 8):
        assert static_check(parse(fixture_program(t))) == []


# execution

@pytest.mark.parametrize("src, status", [
    ("say(\"hi\")", "success"),
    ("let x = 1\nx = x + \"a\"", "runtime_error"),
    ("say(str(1/0))", "runtime_error"),
    ("let xs = [1]\nsay(str(xs[3]))", "runtime_error"),
    ("if (1) { say(\"a\") }", "runtime_error"),
    ("walk_to([9, 0])", "runtime_error"),
    ("nudge(nearest(\"oven\"))", "runtime_error"),
    ("let s = \"a\"\nwhile (true) { s = s + s }", "runtime_error"),
    ("while (true) { let y = 1 }", "step_limit_exceeded"),
    ("let x = (", "parse_error"),
])
def test_statuses(src, status):
    out = run(src, max_steps=5000)
    assert out.status == status
    assert (out.error_detail is None) == (status == "success")


def test_return_stops_program():
    out = run("say(\"a\")\nreturn\nsay(\"b\")")
    assert out.ok and [e.detail for e in out.action_trace] == ["a"]


def test_equality_is_type_strict():
    out = run('say(str(1 == "1"))\nsay(str([1, "a"] == [1, "a"]))')
    assert [e.detail for e in out.action_trace] == ["false", "true"]


def test_fiducial_fields():
    out = run('let c = nearest("chair")\nsay(c["label"] + " " + str(c["id"]) + " " + str(c["x"]))')
    assert out.action_trace[0].detail == "chair 1 2"


def test_sim_time_limit():
    out = run("while (true) { say(\"x\") }", max_sim_time=5, max_steps=100000)
    assert out.status == "runtime_error" and "time" in out.error_detail


def test_infinite_loop_uses_exact_step_budget():
    out = run("let i = 0\nwhile (true) { i = i + 1 }", max_steps=777)
    assert out.status == "step_limit_exceeded" and out.steps_used == 777


def test_outcome_round_trip():
    out = run(fixture_program(4), ctx=4)
    again = type(out).from_dict(out.to_dict())
    assert again.to_dict() == out.to_dict()


def test_limits_validate():
    with pytest.raises(ValueError):
        Limits(max_steps=0)


def test_determinism_byte_for_byte():
    for t in range(1, 8):
        a = run(fixture_program(t), ctx=t).to_dict()
        b = run(fixture_program(t), ctx=t).to_dict()
        assert a == b


# properties

@settings(max_examples=300, deadline=None)
@given(programs)
def test_round_trip_generated(p):
    assert parse(pretty_print(p)) == p


def test_round_trip_fixtures():
    for t in range(1, 8):
        p = parse(fixture_program(t))
        assert parse(pretty_print(p)) == p
        assert pretty_print(parse(pretty_print(p))) == pretty_print(p)


@settings(max_examples=200, deadline=None)
@given(programs)
def test_generated_programs_always_classified(p):
    out = execute(p, spawn_world(3), Limits(max_steps=2000))
    assert out.status in STATUSES and out.status != "parse_error"
    assert out.steps_used <= 2000
    assert "internal error" not in (out.error_detail or "")


def test_fuzzed_sources_total():
    rng = random.Random(7)
    for _ in range(300):
        out = run(fuzz_source(rng), ctx=rng.randint(1, 7), max_steps=3000)
        assert out.status in STATUSES
        assert "internal error" not in (out.error_detail or "")


def test_program_equality_ignores_positions():
    assert parse("say(1)") == parse("\n\n   say( 1 )")
    assert parse("say(1)") != Program((Call("say", (Literal(2.0, "number"),)),))
