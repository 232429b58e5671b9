"""Agents, messages, token accounting and chat-completion backends."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx
import yaml

from .lang.builtins import api_reference

log = logging.getLogger(__name__)

ROLES = ("coder", "reviewer", "planner", "manager")

TEAM_PREAMBLE = (
    "You are a member of a team of AIs controlling a guide dog robot to assist "
    "a visually impaired user safely navigate the world."
)

REVIEW_CRITERIA = "correct coding, effective task completion and safe execution"

APPROVAL_TOKEN = "APPROVE"

LANGUAGE_GUIDE = """\
Programs are written in the robo language:
- statements: let name = expr | name = expr | if (cond) { ... } else { ... }
  | while (cond) { ... } | for (item in list) { ... } | return | a call such as say("hi")
- values: numbers, "strings", true/false, [lists], fiducials
- operators: + - * / < > <= >= == != and or not
- comments start with #
Wrap the complete program in a fenced block that opens with ```robo and closes with ```."""


class BackendError(Exception):
    """Base class for failures to obtain a completion."""


class BackendUnreachable(BackendError):
    pass


class ScriptMiss(BackendError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    name: str
    role: str
    system_prompt: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.system_prompt.strip():
            raise ValueError("system prompt must be non-empty")
        if not self.system_prompt.startswith(TEAM_PREAMBLE):
            raise ValueError("system prompt must begin with the team preamble")


@dataclass(frozen=True)
class Message:
    sender: str
    content: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "sender": self.sender,
            "content": self.content,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }
        if timing:
            d["latency"] = self.latency
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Message:
        return cls(d["sender"], d["content"], int(d["input_tokens"]), int(d["output_tokens"]), float(d.get("latency", 0.0)))


@dataclass
class Transcript:
    """Append-only conversation. The first message is always the user prompt."""

    prompt: str
    messages: list[Message] = field(default_factory=list)

    @classmethod
    def start(cls, prompt: str, content: str | None = None) -> Transcript:
        return cls(prompt, [Message("user", content if content is not None else prompt)])

    def append(self, message: Message) -> None:
        self.messages.append(message)

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    @property
    def last(self) -> Message:
        return self.messages[-1]

    def senders(self) -> list[str]:
        return [m.sender for m in self.messages]

    def turns_by(self, sender: str) -> int:
        return sum(1 for m in self.messages if m.sender == sender)

    def to_dict(self, timing: bool = True) -> dict:
        return {"prompt": self.prompt, "messages": [m.to_dict(timing) for m in self.messages]}

    @classmethod
    def from_dict(cls, d: dict) -> Transcript:
        return cls(d["prompt"], [Message.from_dict(m) for m in d["messages"]])


def count_tokens(text: str) -> int:
    """Approximate token count: one token per four UTF-8 bytes, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def serialize_transcript(transcript: Transcript) -> str:
    return "\n\n".join(f"{m.sender}: {m.content}" for m in transcript)


def agent_input_text(agent: AgentSpec, transcript: Transcript) -> str:
    return agent.system_prompt + "\n\n" + serialize_transcript(transcript)


_MANDATES = {
    "coder": (
        "You are the coder. Interpret the user's instruction or statement and write an "
        "executable program that makes the robot carry it out. When a reviewer gives "
        "feedback, reply with a corrected full program. When a plan is provided, use it "
        "as the scaffold for your program."
    ),
    "reviewer": (
        "You are the reviewer. Give the coder feedback on how to improve its latest program "
        f"on the grounds of {REVIEW_CRITERIA}. When you are satisfied the program can be "
        f"run, end your reply with the single word {APPROVAL_TOKEN}. Otherwise do not use "
        "that word at the end of your reply."
    ),
    "planner": (
        "You are the planner. Interpret the user's prompt and write a short numbered list of "
        "natural language instructions that the coder should use as a scaffold for its "
        "program. Do not write code."
    ),
    "manager": (
        "You are the chat manager. Promote the next speaker after every message: send new "
        "prompts to the first working agent, send code to the reviewer, pass the code on for "
        "execution if the reviewer approved it, or return to the coder with the feedback."
    ),
}


def build_agent(role: str, name: str | None = None, extra_context: str = "") -> AgentSpec:
    """Agent with the shipped role prompt; ``extra_context`` is appended verbatim."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    parts = [TEAM_PREAMBLE, _MANDATES[role]]
    if role in ("coder", "reviewer"):
        parts.append(LANGUAGE_GUIDE)
        parts.append("Available robot functions:\n" + api_reference())
    if extra_context:
        parts.append(extra_context)
    return AgentSpec(name or role, role, "\n\n".join(parts))


@dataclass(frozen=True)
class CallContext:
    """Where a completion request sits in the run matrix."""

    config: str
    trial: int
    repetition: int = 1
    attempt: int = 0
    round: int = 0


class Backend(Protocol):
    token_mode: str

    def complete(self, agent: AgentSpec, transcript: Transcript, context: CallContext | None = None) -> Message: ...


def complete(backend: Backend, agent: AgentSpec, transcript: Transcript, context: CallContext | None = None) -> Message:
    if len(transcript) == 0:
        raise ValueError("transcript must not be empty")
    return backend.complete(agent, transcript, context)


# Scripted backend

_SPECIFIER_WEIGHTS = {"trial": 4, "config": 2, "repetition": 1}


@dataclass(frozen=True)
class ScriptEntry:
    role: str
    round: int
    content: str
    trial: int | None = None
    config: str | None = None
    repetition: int | None = None

    def matches(self, role: str, rnd: int, ctx: CallContext) -> bool:
        return (
            self.role == role
            and self.round == rnd
            and self.trial in (None, ctx.trial)
            and self.config in (None, ctx.config)
            and self.repetition in (None, ctx.repetition)
        )

    @property
    def specificity(self) -> int:
        return sum(w for k, w in _SPECIFIER_WEIGHTS.items() if getattr(self, k) is not None)


@dataclass(frozen=True)
class FailureInjection:
    config: str
    trial: int
    repetition: int
    attempt: int = 0


@dataclass
class BackendScript:
    """Keyed canned responses plus cells whose coder output must be broken.

    A response is keyed by (role, trial, round) where ``round`` counts that
    role's own turns within one conversation. ``trial``, ``config`` and
    ``repetition`` may each be omitted to act as wildcards; the most specific
    matching entry wins.
    """

    entries: list[ScriptEntry] = field(default_factory=list)
    failures: set[FailureInjection] = field(default_factory=set)

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            key = (e.role, e.round, e.trial, e.config, e.repetition)
            if key in seen:
                raise ValueError(f"duplicate script entry for {key}")
            seen.add(key)

    def lookup(self, role: str, ctx: CallContext) -> str:
        hits = [e for e in self.entries if e.matches(role, ctx.round, ctx)]
        if not hits:
            raise ScriptMiss(f"no scripted response for ({role}, trial {ctx.trial}, round {ctx.round}, config {ctx.config}, rep {ctx.repetition})")
        return max(hits, key=lambda e: e.specificity).content

    def injected(self, ctx: CallContext) -> bool:
        return FailureInjection(ctx.config, ctx.trial, ctx.repetition, ctx.attempt) in self.failures

    def missing_keys(self, configs: Iterable[str], trials: Iterable[int], repetitions: Iterable[int]) -> list[tuple]:
        """First-pass keys a run over the matrix would need but cannot find."""
        first_roles = {"A": ("coder",), "B": ("coder", "reviewer"), "C": ("planner", "coder", "reviewer")}
        missing = []
        for c in configs:
            for t in trials:
                for r in repetitions:
                    for role in first_roles[c]:
                        ctx = CallContext(c, t, r, 0, 0)
                        if not any(e.matches(role, 0, ctx) for e in self.entries):
                            missing.append((role, t, 0, c, r))
        return missing

    @classmethod
    def from_dict(cls, doc: dict) -> BackendScript:
        entries = []
        for raw in doc.get("responses", []):
            entries.append(
                ScriptEntry(
                    role=str(raw["role"]),
                    round=int(raw.get("round", 0)),
                    content=str(raw["content"]),
                    trial=None if raw.get("trial") is None else int(raw["trial"]),
                    config=None if raw.get("config") is None else str(raw["config"]),
                    repetition=None if raw.get("repetition") is None else int(raw["repetition"]),
                )
            )
        failures = {
            FailureInjection(str(f["config"]), int(f["trial"]), int(f["repetition"]), int(f.get("attempt", 0)))
            for f in doc.get("failures", [])
        }
        return cls(entries, failures)


def load_script(path: str | Path) -> BackendScript:
    with open(path, encoding="utf-8") as fh:
        return BackendScript.from_dict(yaml.safe_load(fh) or {})


def default_script() -> BackendScript:
    from importlib import resources

    text = resources.files("robocollab.data").joinpath("default_script.yaml").read_text("utf-8")
    return BackendScript.from_dict(yaml.safe_load(text))


def break_code(content: str) -> str:
    """Corrupt the last ``robo`` block so it no longer parses."""
    marker = "```robo"
    start = content.rfind(marker)
    if start == -1:
        return content + "\n```robo\nwalk_to(\n```\n"
    end = content.find("```", start + len(marker))
    if end == -1:
        return content + "\nwalk_to(\n"
    return content[:end] + "walk_to(\n" + content[end:]


class ScriptedBackend:
    """Deterministic stand-in for a chat model: a pure function of script and key."""

    token_mode = "approx"

    def __init__(self, script: BackendScript) -> None:
        self.script = script

    def complete(self, agent: AgentSpec, transcript: Transcript, context: CallContext | None = None) -> Message:
        if context is None:
            raise ScriptMiss("scripted backend needs a call context")
        began = time.perf_counter()
        content = self.script.lookup(agent.role, context)
        if agent.role == "coder" and self.script.injected(context):
            content = break_code(content)
        return Message(
            sender=agent.name,
            content=content,
            input_tokens=count_tokens(agent_input_text(agent, transcript)),
            output_tokens=count_tokens(content),
            latency=time.perf_counter() - began,
        )


# Live backend

def _role_for(sender: str, agent: AgentSpec) -> str:
    return "assistant" if sender == agent.name else "user"


class LiveBackend:
    """Chat-completions HTTP client with bounded retry and exponential backoff."""

    token_mode = "endpoint"

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.url = url
        self.model = model
        self.api_key = api_key
        self.attempts = attempts
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep

    @classmethod
    def from_env(cls, url_var: str = "ROBOCOLLAB_ENDPOINT", model_var: str = "ROBOCOLLAB_MODEL",
                 key_var: str = "ROBOCOLLAB_API_KEY", **kwargs) -> LiveBackend:
        try:
            url, model = os.environ[url_var], os.environ[model_var]
        except KeyError as exc:
            raise BackendError(f"environment variable {exc.args[0]} is not set") from None
        return cls(url, model, os.environ.get(key_var), **kwargs)

    def payload(self, agent: AgentSpec, transcript: Transcript) -> dict:
        messages = [{"role": "system", "content": agent.system_prompt}]
        for m in transcript:
            content = m.content if m.sender in ("user", agent.name) else f"{m.sender}: {m.content}"
            messages.append({"role": _role_for(m.sender, agent), "content": content})
        return {"model": self.model, "messages": messages}

    def complete(self, agent: AgentSpec, transcript: Transcript, context: CallContext | None = None) -> Message:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = self.payload(agent, transcript)
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            began = time.perf_counter()
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
                if resp.status_code >= 500:
                    raise BackendUnreachable(f"endpoint returned HTTP {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
            except (httpx.TransportError, BackendUnreachable) as exc:
                last_error = exc
                log.warning("completion attempt %d/%d failed: %s", attempt + 1, self.attempts, exc)
                continue
            except httpx.HTTPStatusError as exc:
                raise BackendError(f"endpoint rejected request: HTTP {exc.response.status_code}") from exc
            latency = time.perf_counter() - began
            try:
                content = data["choices"][0]["message"]["content"]
                usage = data["usage"]
                return Message(agent.name, content, int(usage["prompt_tokens"]), int(usage["completion_tokens"]), latency)
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed completion response: {exc}") from exc
        raise BackendUnreachable(f"endpoint unreachable after {self.attempts} attempts: {last_error}")
