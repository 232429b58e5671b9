"""Observer feedback: validation, persistence and interactive collection."""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, TextIO

from .bench import TrialRecord, final_records

RATING_RANGES = {
    "expectation_diff": (-5, 5),
    "success": (1, 5),
    "safety": (1, 5),
    "sociability": (1, 5),
}
COMMENT_FIELDS = ("expectation_comment", "actual_comment")

# Order in which an observer is asked for each field.
PROMPT_ORDER = (
    ("expectation_comment", "What did you expect the robot to do?"),
    ("actual_comment", "What did the robot actually do?"),
    ("expectation_diff", "Difference between expectation and actual actions (-5 to 5)"),
    ("success", "Successful task completion (1-5)"),
    ("safety", "Safe actions (1-5)"),
    ("sociability", "Sociability (1-5)"),
)

CellKey = tuple[str, int, int]


class FeedbackError(ValueError):
    def __init__(self, kind: str, message: str) -> None:
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class ObserverFeedback:
    config: str
    trial: int
    repetition: int
    expectation_comment: str
    actual_comment: str
    expectation_diff: int
    success: int
    safety: int
    sociability: int
    observer_id: str = "anonymous"

    @property
    def key(self) -> CellKey:
        return (self.config, self.trial, self.repetition)

    def to_dict(self) -> dict:
        return asdict(self)


def check_rating(name: str, value) -> int:
    lo, hi = RATING_RANGES[name]
    if isinstance(value, bool):
        raise FeedbackError("invalid", f"{name} must be an integer")
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError:
            raise FeedbackError("invalid", f"{name} must be an integer, got {value!r}") from None
    if isinstance(value, float):
        if not value.is_integer():
            raise FeedbackError("invalid", f"{name} must be an integer, got {value!r}")
        value = int(value)
    if not isinstance(value, int):
        raise FeedbackError("invalid", f"{name} must be an integer")
    if not lo <= value <= hi:
        raise FeedbackError("out_of_range", f"{name}={value} outside {lo}..{hi}")
    return value


def ingest_feedback(key: CellKey, raw: dict, records: Iterable[TrialRecord], observer_id: str | None = None) -> ObserverFeedback:
    """Validate raw observer input against the record store.

    Rejects unknown keys, runs whose final attempt failed, empty comments and
    ratings outside their ranges.
    """
    finals = {r.cell: r for r in final_records(records)}
    config, trial, repetition = key
    rec = finals.get((config, int(trial), int(repetition)))
    if rec is None:
        raise FeedbackError("unknown_record", f"no record for {key}")
    if not rec.succeeded:
        raise FeedbackError("feedback_on_failed_run", f"final attempt for {key} did not succeed")
    comments = {}
    for name in COMMENT_FIELDS:
        text = raw.get(name)
        if not isinstance(text, str) or not text.strip():
            raise FeedbackError("invalid", f"{name} must be a non-empty comment")
        comments[name] = text
    ratings = {}
    for name in RATING_RANGES:
        if name not in raw:
            raise FeedbackError("invalid", f"missing rating {name}")
        ratings[name] = check_rating(name, raw[name])
    return ObserverFeedback(
        config=config, trial=int(trial), repetition=int(repetition),
        observer_id=observer_id or str(raw.get("observer_id") or "anonymous"),
        **comments, **ratings,
    )


class FeedbackStore:
    """Append-only line-delimited feedback file."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, fb: ObserverFeedback) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(fb.to_dict(), sort_keys=True) + "\n")

    def load(self) -> list[ObserverFeedback]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(ObserverFeedback(**json.loads(line)))
        return out

    def rated_keys(self) -> set[CellKey]:
        return {fb.key for fb in self.load()}


def import_feedback(path: str | Path, records: list[TrialRecord], store: FeedbackStore | None = None) -> list[ObserverFeedback]:
    """Ingest a file holding one JSON feedback object per line (with config/trial/repetition)."""
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        raw = json.loads(line)
        try:
            key = (str(raw["config"]), int(raw["trial"]), int(raw["repetition"]))
        except (KeyError, ValueError) as exc:
            raise FeedbackError("invalid", f"line {n}: missing or bad record key ({exc})") from None
        fb = ingest_feedback(key, raw, records)
        if store is not None:
            store.append(fb)
        out.append(fb)
    return out


def ask_feedback(ask: Callable[[str], str], out: TextIO) -> dict:
    """Prompt for the six observer fields in order, re-asking on invalid input."""
    raw: dict = {}
    for name, question in PROMPT_ORDER:
        while True:
            answer = ask(f"{question}: ")
            if name in COMMENT_FIELDS:
                if answer.strip():
                    raw[name] = answer.strip()
                    break
                out.write("  please enter a comment\n")
                continue
            try:
                raw[name] = check_rating(name, answer)
                break
            except FeedbackError as exc:
                lo, hi = RATING_RANGES[name]
                out.write(f"  {exc}; enter a whole number from {lo} to {hi}\n")
    return raw
