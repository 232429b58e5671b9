from __future__ import annotations

import json
import math

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robocollab.agents import (
    APPROVAL_TOKEN, REVIEW_CRITERIA, TEAM_PREAMBLE, AgentSpec, BackendError, BackendScript, BackendUnreachable,
    CallContext, LiveBackend, Message, ScriptedBackend, ScriptEntry, ScriptMiss, Transcript, agent_input_text,
    break_code, build_agent, complete, count_tokens, default_script, serialize_transcript,
)
from robocollab.lang import ParseError, parse


@given(st.text())
def test_count_tokens_is_ceil_bytes_over_four(text):
    assert count_tokens(text) == math.ceil(len(text.encode("utf-8")) / 4)


def test_count_tokens_examples():
    assert [count_tokens(s) for s in ("", "a", "abcd", "abcde", "é")] == [0, 1, 1, 2, 1]


def test_prompts_share_preamble_and_mandates():
    for role in ("planner", "coder", "reviewer"):
        a = build_agent(role)
        assert a.system_prompt.startswith(TEAM_PREAMBLE)
    assert REVIEW_CRITERIA in build_agent("reviewer").system_prompt
    assert APPROVAL_TOKEN in build_agent("reviewer").system_prompt
    assert "walk_to" in build_agent("coder").system_prompt
    assert "walk_to" not in build_agent("planner").system_prompt


def test_agent_spec_validation():
    with pytest.raises(ValueError):
        AgentSpec("x", "pilot", TEAM_PREAMBLE)
    with pytest.raises(ValueError):
        AgentSpec("x", "coder", "no preamble here")


def test_input_text_layout():
    t = Transcript.start("go", "go somewhere")
    t.append(Message("coder", "ok", 1, 1, 0.0))
    agent = build_agent("reviewer")
    assert serialize_transcript(t) == "user: go somewhere\n\ncoder: ok"
    assert agent_input_text(agent, t) == agent.system_prompt + "\n\n" + "user: go somewhere\n\ncoder: ok"


def test_transcript_round_trip_without_timing():
    t = Transcript.start("p")
    t.append(Message("coder", "c", 3, 4, 0.25))
    d = t.to_dict(timing=False)
    assert "latency" not in json.dumps(d)
    assert Transcript.from_dict(t.to_dict()).messages == t.messages


def test_complete_rejects_empty_transcript():
    with pytest.raises(ValueError):
        complete(ScriptedBackend(default_script()), build_agent("coder"), Transcript("p", []), CallContext("A", 1))


def test_script_specificity():
    s = BackendScript([
        ScriptEntry("reviewer", 0, "generic"),
        ScriptEntry("reviewer", 0, "by config", config="B"),
        ScriptEntry("reviewer", 0, "by trial", trial=2),
        ScriptEntry("reviewer", 0, "exact", trial=2, config="B", repetition=1),
    ])
    assert s.lookup("reviewer", CallContext("C", 1)) == "generic"
    assert s.lookup("reviewer", CallContext("B", 1)) == "by config"
    assert s.lookup("reviewer", CallContext("B", 2, 2)) == "by trial"
    assert s.lookup("reviewer", CallContext("B", 2, 1)) == "exact"
    with pytest.raises(ScriptMiss):
        s.lookup("coder", CallContext("A", 1))


def test_script_rejects_duplicates():
    with pytest.raises(ValueError):
        BackendScript([ScriptEntry("coder", 0, "a"), ScriptEntry("coder", 0, "b")])


def test_default_script_covers_matrix():
    assert default_script().missing_keys("ABC", range(1, 8), (1, 2, 3)) == []


def test_break_code_makes_program_unparseable():
    content = "Here:\n```robo\nsay(\"hi\")\n```\n"
    broken = break_code(content)
    body = broken.split("```robo\n")[1].split("```")[0]
    with pytest.raises(ParseError):
        parse(body)


def test_scripted_backend_is_pure():
    b = ScriptedBackend(default_script())
    t = Transcript.start("p", "prompt text")
    m1 = b.complete(build_agent("coder"), t, CallContext("A", 1))
    m2 = b.complete(build_agent("coder"), t, CallContext("A", 1))
    assert m1.to_dict(timing=False) == m2.to_dict(timing=False)
    assert m1.input_tokens == count_tokens(agent_input_text(build_agent("coder"), t))
    assert m1.output_tokens == count_tokens(m1.content)


# live backend over a mock transport

def _ok(request: httpx.Request) -> httpx.Response:
    body = json.loads(request.content)
    assert body["messages"][0]["role"] == "system"
    return httpx.Response(200, json={"choices": [{"message": {"content": "```robo\nsay(\"x\")\n```"}}],
                                     "usage": {"prompt_tokens": 42, "completion_tokens": 7}})


def _backend(handler, sleeps=None):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return LiveBackend("http://model.test/v1/chat/completions", "m", "secret", client=client,
                       sleep=(sleeps.append if sleeps is not None else lambda s: None))


def test_live_backend_uses_reported_usage():
    m = _backend(_ok).complete(build_agent("coder"), Transcript.start("p"))
    assert (m.input_tokens, m.output_tokens) == (42, 7)


def test_live_backend_retries_then_succeeds():
    calls = []

    def flaky(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else _ok(request)

    sleeps: list[float] = []
    m = _backend(flaky, sleeps).complete(build_agent("coder"), Transcript.start("p"))
    assert m.input_tokens == 42 and sleeps == [1.0, 2.0]


def test_live_backend_unreachable():
    def down(request):
        raise httpx.ConnectError("refused", request=request)

    sleeps: list[float] = []
    with pytest.raises(BackendUnreachable):
        _backend(down, sleeps).complete(build_agent("coder"), Transcript.start("p"))
    assert sleeps == [1.0, 2.0]


def test_live_backend_client_error_not_retried():
    sleeps: list[float] = []
    with pytest.raises(BackendError):
        _backend(lambda r: httpx.Response(401), sleeps).complete(build_agent("coder"), Transcript.start("p"))
    assert sleeps == []


def test_live_backend_malformed_reply():
    with pytest.raises(BackendError):
        _backend(lambda r: httpx.Response(200, json={"choices": []})).complete(build_agent("coder"), Transcript.start("p"))


def test_live_backend_from_env(monkeypatch):
    monkeypatch.delenv("ROBOCOLLAB_ENDPOINT", raising=False)
    with pytest.raises(BackendError):
        LiveBackend.from_env()
    monkeypatch.setenv("ROBOCOLLAB_ENDPOINT", "http://x")
    monkeypatch.setenv("ROBOCOLLAB_MODEL", "m")
    assert LiveBackend.from_env().model == "m"
