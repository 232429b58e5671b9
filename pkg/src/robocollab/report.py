"""Aggregations behind the error-rate, usage and score figures, plus the case-study export."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import random
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from statistics import fmean
from typing import Iterable

from .bench import TrialRecord, final_records
from .feedback import ObserverFeedback
from .lang import parse, pretty_print
from .orchestrator import CONFIGS

DEFAULT_SCORE_PANELS = (
    ("fig7_scores_all_prompts.csv", None),
    ("fig8_scores_prompts_3_5.csv", frozenset({3, 5})),
    ("fig9_scores_prompt_2.csv", frozenset({2})),
)

_CONFIG_MENTION = re.compile(r"\bconfig(uration)?\s*[ABC]\b", re.IGNORECASE)


class ReportError(ValueError):
    def __init__(self, kind: str, message: str) -> None:
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class UsageSummary:
    config: str
    n: int
    mean_inference_s: float
    mean_execution_sim_s: float
    mean_input_tokens: float
    mean_output_tokens: float
    token_mode: str


@dataclass(frozen=True)
class RatingSummary:
    config: str
    n: int
    success: float
    safety: float
    sociability: float
    expectation_diff: float


def _attempt0(records: Iterable[TrialRecord], config: str) -> list[TrialRecord]:
    return [r for r in records if r.config == config and r.attempt_index == 0]


def error_rate(records: Iterable[TrialRecord], config: str) -> float:
    """Percentage of executed attempt-0 runs for ``config`` that failed.

    Attempt-0 cells that never produced a program are generation failures and
    are left out of both numerator and denominator.
    """
    executed = [r for r in _attempt0(records, config) if r.status is not None]
    if not executed:
        raise ReportError("empty", f"no executed attempt-0 records for config {config}")
    return 100.0 * sum(r.execution_failure for r in executed) / len(executed)


def generation_failures(records: Iterable[TrialRecord], config: str) -> int:
    return sum(1 for r in _attempt0(records, config) if r.generation_failure is not None)


def usage_summary(records: Iterable[TrialRecord], config: str, generation_metrics: str = "attempt0") -> UsageSummary:
    """Means over final-attempt records of one config.

    Execution time always comes from the final attempt. Inference time and
    tokens come from the cell's attempt-0 generation by default
    (``generation_metrics="final"`` uses the final attempt's instead).
    """
    if generation_metrics not in ("attempt0", "final"):
        raise ValueError("generation_metrics must be 'attempt0' or 'final'")
    records = list(records)
    finals = [r for r in final_records(records) if r.config == config]
    if not finals:
        raise ReportError("empty", f"no records for config {config}")
    first = {r.cell: r for r in records if r.attempt_index == 0}
    gen = [first.get(r.cell, r) if generation_metrics == "attempt0" else r for r in finals]
    modes = {r.token_mode for r in gen}
    if len(modes) > 1:
        raise ReportError("mixed_token_modes", f"records mix token counting modes {sorted(modes)}")
    return UsageSummary(
        config=config,
        n=len(finals),
        mean_inference_s=fmean(r.inference_duration for r in gen),
        mean_execution_sim_s=fmean(r.execution_sim_time for r in finals),
        mean_input_tokens=fmean(r.input_tokens for r in gen),
        mean_output_tokens=fmean(r.output_tokens for r in gen),
        token_mode=modes.pop(),
    )


def performance_summary(feedback: Iterable[ObserverFeedback], config: str,
                        prompt_filter: Iterable[int] | None = None) -> RatingSummary:
    wanted = None if prompt_filter is None else set(prompt_filter)
    rows = [f for f in feedback if f.config == config and (wanted is None or f.trial in wanted)]
    if not rows:
        raise ReportError("empty_after_filter", f"no feedback for config {config} with prompts {sorted(wanted or [])}")
    return RatingSummary(
        config=config,
        n=len(rows),
        success=fmean(f.success for f in rows),
        safety=fmean(f.safety for f in rows),
        sociability=fmean(f.sociability for f in rows),
        expectation_diff=fmean(f.expectation_diff for f in rows),
    )


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _score_rows(feedback: list[ObserverFeedback], configs, prompts) -> tuple[list[list], dict]:
    rows, agg = [], {}
    for c in configs:
        try:
            s = performance_summary(feedback, c, prompts)
        except ReportError:
            rows.append([c, 0, None, None, None, None])
            agg[c] = None
            continue
        rows.append([c, s.n, s.success, s.safety, s.sociability, s.expectation_diff])
        agg[c] = asdict(s)
    return rows, agg


def _filter_label(prompts) -> str:
    return "all" if prompts is None else ",".join(str(p) for p in sorted(prompts))


def emit_report(records: list[TrialRecord], feedback: list[ObserverFeedback], out_dir: str | Path,
                prompt_filter: Iterable[int] | None = None) -> list[Path]:
    """Write ``aggregate.json`` and one delimited table per figure panel.

    With ``prompt_filter`` only that score panel is written, as
    ``scores_prompts_<ids>.csv``; otherwise the three default panels.
    Output depends only on the inputs, so reruns are byte-identical.
    """
    if not records:
        raise ReportError("empty", "record store is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = [c for c in CONFIGS if any(r.config == c for r in records)]
    written: list[Path] = []

    def write(name: str, text: str) -> None:
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    agg: dict = {"configs": configs, "error_rate": {}, "usage": {}, "scores": {}}
    err_rows = []
    for c in configs:
        a0 = _attempt0(records, c)
        executed = [r for r in a0 if r.status is not None]
        rate = error_rate(records, c) if executed else None
        fails = sum(r.execution_failure for r in executed)
        gen_fail = generation_failures(records, c)
        err_rows.append([c, len(executed), fails, rate, gen_fail])
        agg["error_rate"][c] = {"attempt0_executed": len(executed), "attempt0_failures": fails,
                                "error_rate_pct": rate, "generation_failures": gen_fail}
    write("fig5_error_rate.csv", _csv(
        ["config", "attempt0_executed", "attempt0_failures", "error_rate_pct", "generation_failures"], err_rows))

    use_rows = []
    for c in configs:
        u = usage_summary(records, c)
        use_rows.append([c, u.n, u.mean_inference_s, u.mean_execution_sim_s, u.mean_input_tokens,
                         u.mean_output_tokens, u.token_mode])
        agg["usage"][c] = asdict(u)
    write("fig6_usage.csv", _csv(
        ["config", "n", "mean_inference_s", "mean_execution_sim_s", "mean_input_tokens", "mean_output_tokens",
         "token_mode"], use_rows))

    header = ["config", "n", "success", "safety", "sociability", "expectation_diff"]
    if prompt_filter is not None:
        prompts = frozenset(prompt_filter)
        panels = [(f"scores_prompts_{'_'.join(str(p) for p in sorted(prompts))}.csv", prompts)]
    else:
        panels = list(DEFAULT_SCORE_PANELS)
    for name, prompts in panels:
        rows, panel_agg = _score_rows(feedback, configs, prompts)
        write(name, _csv(header, rows))
        agg["scores"][_filter_label(prompts)] = panel_agg

    write("aggregate.json", json.dumps(agg, indent=2, sort_keys=True) + "\n")
    return written


def export_case_study(records: list[TrialRecord], out_dir: str | Path, prompts: Iterable[int] = (3, 5),
                      attempts_per_config: int = 2, seed: int = 0) -> list[Path]:
    """Write anonymized, shuffled program samples and a sealed key mapping them back.

    Samples are the first successful final records (by repetition) for each
    config and prompt, pretty-printed so comments cannot leak provenance.
    """
    finals = final_records(records)
    picked = []
    for c in CONFIGS:
        for p in sorted(prompts):
            ok = [r for r in finals if r.config == c and r.trial == p and r.succeeded and r.program_source]
            if len(ok) < attempts_per_config:
                raise ReportError("insufficient_records",
                                  f"config {c} prompt {p}: {len(ok)} successful runs, need {attempts_per_config}")
            picked.extend(ok[:attempts_per_config])
    random.Random(seed).shuffle(picked)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written, key = [], []
    for i, rec in enumerate(picked, start=1):
        text = pretty_print(parse(rec.program_source))
        if _CONFIG_MENTION.search(text):
            raise ReportError("leak", f"sample {i} mentions a configuration")
        name = f"sample_{i:02d}.robo"
        path = out / name
        path.write_text(f"# Prompt: {_prompt_text(rec.trial)}\n{text}", encoding="utf-8")
        written.append(path)
        key.append({
            "sample": name,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            "config": rec.config,
            "trial": rec.trial,
            "repetition": rec.repetition,
            "attempt_index": rec.attempt_index,
        })
    sealed = out / "sealed_key.json"
    sealed.write_text(json.dumps({"seed": seed, "samples": key}, indent=2) + "\n", encoding="utf-8")
    written.append(sealed)
    return written


def _prompt_text(trial_id: int) -> str:
    from .bench import trial_by_id

    return trial_by_id(trial_id).prompt
