"""Configuration pipelines A, B and C as deterministic speaker-selection machines.

A: the coder answers alone.
B: coder and reviewer alternate until the reviewer approves.
C: the planner speaks once, then coder and reviewer alternate as in B.

The chat manager is a fixed routing policy, not a model call.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

from .agents import APPROVAL_TOKEN, AgentSpec, Backend, CallContext, Message, Transcript, build_agent, complete

CONFIGS = ("A", "B", "C")
TERMINATE = "TERMINATE"

_MIN_ROUNDS = {"A": 1, "B": 2, "C": 3}
_FENCE_RE = re.compile(r"```robo[ \t]*\n(.*?)```", re.DOTALL)


class GenerationError(Exception):
    """A conversation ended without a usable program.

    ``transcript`` holds whatever was said before the failure.
    """

    kind = "generation_error"

    def __init__(self, message: str, transcript: Transcript | None = None) -> None:
        super().__init__(message)
        self.transcript = transcript


class RoundCapExceeded(GenerationError):
    kind = "round_cap_exceeded"


class NoCodeBlock(GenerationError):
    kind = "no_code_block"


class BackendFailure(GenerationError):
    kind = "backend_error"


@dataclass(frozen=True)
class SpeakerPolicy:
    config: str
    max_rounds: int = 10

    def __post_init__(self) -> None:
        if self.config not in CONFIGS:
            raise ValueError(f"unknown config {self.config!r}")
        if self.max_rounds < _MIN_ROUNDS[self.config]:
            raise ValueError(f"config {self.config} needs max_rounds >= {_MIN_ROUNDS[self.config]}")

    @property
    def agents(self) -> tuple[str, ...]:
        return {"A": ("coder",), "B": ("coder", "reviewer"), "C": ("planner", "coder", "reviewer")}[self.config]


@dataclass
class GenerationResult:
    program_source: str
    transcript: Transcript
    rounds: int
    inference_duration: float
    input_tokens_total: int
    output_tokens_total: int
    terminated_by: str  # approval | solo_emit | round_cap

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "program_source": self.program_source,
            "transcript": self.transcript.to_dict(timing),
            "rounds": self.rounds,
            "input_tokens_total": self.input_tokens_total,
            "output_tokens_total": self.output_tokens_total,
            "terminated_by": self.terminated_by,
        }
        if timing:
            d["inference_duration"] = self.inference_duration
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GenerationResult:
        return cls(
            d["program_source"],
            Transcript.from_dict(d["transcript"]),
            int(d["rounds"]),
            float(d.get("inference_duration", 0.0)),
            int(d["input_tokens_total"]),
            int(d["output_tokens_total"]),
            d["terminated_by"],
        )


def approved(message: Message) -> bool:
    """True iff the last whitespace-separated word is exactly the approval token."""
    words = message.content.split()
    return bool(words) and words[-1] == APPROVAL_TOKEN


def extract_program(message: Message) -> str:
    blocks = _FENCE_RE.findall(message.content)
    if not blocks:
        raise NoCodeBlock(f"no ```robo block in message from {message.sender}")
    return blocks[-1]


def agent_rounds(transcript: Transcript) -> int:
    return sum(1 for m in transcript if m.sender != "user")


def select_next_speaker(policy: SpeakerPolicy, transcript: Transcript) -> str:
    if len(transcript) == 0 or transcript.messages[0].sender != "user":
        raise ValueError("transcript must begin with the user prompt")
    last = transcript.last.sender
    cfg = policy.config
    if cfg == "A":
        nxt = "coder" if last == "user" else TERMINATE
    elif last == "user":
        nxt = "planner" if cfg == "C" else "coder"
    elif last == "planner":
        nxt = "coder"
    elif last == "coder":
        nxt = "reviewer"
    elif last == "reviewer":
        nxt = TERMINATE if approved(transcript.last) else "coder"
    else:
        raise ValueError(f"unexpected sender {last!r} in config {cfg}")
    if nxt != TERMINATE and agent_rounds(transcript) >= policy.max_rounds:
        raise RoundCapExceeded(f"no approval within {policy.max_rounds} rounds", transcript)
    return nxt


def user_message(trial_prompt: str, world_digest: str) -> str:
    if not world_digest:
        return trial_prompt
    return f"{trial_prompt}\n\nWhat the robot can see:\n{world_digest}"


def run_config(
    config: str,
    trial_prompt: str,
    world_digest: str,
    backend: Backend,
    *,
    trial: int = 0,
    repetition: int = 1,
    attempt: int = 0,
    max_rounds: int = 10,
    agents: dict[str, AgentSpec] | None = None,
) -> GenerationResult:
    """Drive one conversation to a program or raise a :class:`GenerationError`."""
    policy = SpeakerPolicy(config, max_rounds)
    team = agents or {role: build_agent(role) for role in policy.agents}
    began = time.perf_counter()
    transcript = Transcript.start(trial_prompt, user_message(trial_prompt, world_digest))
    while True:
        speaker = select_next_speaker(policy, transcript)
        if speaker == TERMINATE:
            break
        agent = team[speaker]
        ctx = CallContext(config, trial, repetition, attempt, transcript.turns_by(agent.name))
        try:
            msg = complete(backend, agent, transcript, ctx)
        except Exception as exc:
            raise BackendFailure(str(exc), transcript) from exc
        transcript.append(msg)
    coder_msgs = [m for m in transcript if m.sender == team["coder"].name]
    try:
        source = extract_program(coder_msgs[-1])
    except NoCodeBlock as exc:
        exc.transcript = transcript
        raise
    duration = time.perf_counter() - began
    agent_msgs = [m for m in transcript if m.sender != "user"]
    return GenerationResult(
        program_source=source,
        transcript=transcript,
        rounds=len(agent_msgs),
        inference_duration=duration,
        input_tokens_total=sum(m.input_tokens for m in agent_msgs),
        output_tokens_total=sum(m.output_tokens for m in agent_msgs),
        terminated_by="solo_emit" if config == "A" else "approval",
    )
