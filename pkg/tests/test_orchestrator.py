from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robocollab.agents import BackendScript, Message, ScriptEntry, ScriptedBackend, Transcript
from robocollab.orchestrator import (
    TERMINATE, BackendFailure, GenerationError, GenerationResult, SpeakerPolicy, approved, extract_program,
    run_config, select_next_speaker,
)

from scenarios import APPROVE, CODE, LANGUAGES, REVISE, SCENARIOS, letters


def msg(sender: str, content: str) -> Message:
    return Message(sender, content, 0, 0, 0.0)


@pytest.mark.parametrize("s", SCENARIOS, ids=lambda s: s.name)
def test_scenario_sequences(s):
    try:
        r = run_config(s.config, "p", "", s.backend(), trial=1, max_rounds=s.max_rounds)
        got, err = letters(r.transcript.senders()), None
    except GenerationError as exc:
        got, err = letters(exc.transcript.senders()), exc.kind
    assert (got, err) == (s.expected, s.error)
    if err is None:
        assert LANGUAGES[s.config].fullmatch(got)


@pytest.mark.parametrize("text, ok", [
    ("APPROVE", True), ("Fine.\nAPPROVE  \n", True), ("APPROVE.", False), ("approve", False),
    ("I APPROVE with changes", False), ("", False), ("NOT APPROVE", True),
])
def test_approval_rule(text, ok):
    assert approved(msg("reviewer", text)) is ok


def test_extract_last_block():
    m = msg("coder", "```robo\nsay(\"a\")\n```\nthen\n```robo  \nsay(\"b\")\n```")
    assert extract_program(m) == 'say("b")\n'


def test_policy_minimums():
    with pytest.raises(ValueError):
        SpeakerPolicy("C", 2)
    with pytest.raises(ValueError):
        SpeakerPolicy("D")
    assert SpeakerPolicy("B").agents == ("coder", "reviewer")


def test_select_requires_user_first():
    with pytest.raises(ValueError):
        select_next_speaker(SpeakerPolicy("A"), Transcript("p", [msg("coder", "x")]))


def test_solo_terminates_after_coder():
    t = Transcript.start("p")
    t.append(msg("coder", CODE))
    assert select_next_speaker(SpeakerPolicy("A"), t) == TERMINATE


def test_backend_failure_keeps_partial_transcript():
    backend = ScriptedBackend(BackendScript([ScriptEntry("coder", 0, CODE)]))
    with pytest.raises(BackendFailure) as exc:
        run_config("B", "p", "", backend, trial=1)
    assert exc.value.transcript.senders() == ["user", "coder"]


def test_result_tokens_sum_messages_exactly():
    backend = ScriptedBackend(BackendScript([ScriptEntry("planner", 0, "plan"), ScriptEntry("coder", 0, CODE),
                                             ScriptEntry("coder", 1, CODE), ScriptEntry("reviewer", 0, REVISE),
                                             ScriptEntry("reviewer", 1, APPROVE)]))
    r = run_config("C", "p", "digest", backend, trial=1)
    agent_msgs = [m for m in r.transcript if m.sender != "user"]
    assert r.input_tokens_total == sum(m.input_tokens for m in agent_msgs)
    assert r.output_tokens_total == sum(m.output_tokens for m in agent_msgs)
    assert r.rounds == 5 and r.terminated_by == "approval"
    again = GenerationResult.from_dict(r.to_dict())
    assert again.to_dict(timing=False) == r.to_dict(timing=False)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from("ABC"), st.integers(0, 3))
def test_sequences_accepted_by_language(config, revisions):
    entries = [ScriptEntry("planner", 0, "plan")]
    entries += [ScriptEntry("coder", i, CODE) for i in range(revisions + 1)]
    entries += [ScriptEntry("reviewer", i, REVISE if i < revisions else APPROVE) for i in range(revisions + 1)]
    r = run_config(config, "p", "", ScriptedBackend(BackendScript(entries)), trial=1)
    assert LANGUAGES[config].fullmatch(letters(r.transcript.senders()))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from("BC"), st.integers(1, 3))
def test_input_tokens_non_decreasing_within_conversation(config, revisions):
    entries = [ScriptEntry("planner", 0, "plan")]
    entries += [ScriptEntry("coder", i, CODE) for i in range(revisions + 1)]
    entries += [ScriptEntry("reviewer", i, REVISE if i < revisions else APPROVE) for i in range(revisions + 1)]
    r = run_config(config, "p", "", ScriptedBackend(BackendScript(entries)), trial=1)
    # Per agent, the replayed transcript only grows.
    for role in ("coder", "reviewer"):
        seq = [m.input_tokens for m in r.transcript if m.sender == role]
        assert seq == sorted(seq)
