"""Command-line entry point: run, rate, validate, report, export-case-study.

Exit codes: 0 success, 1 validation or diagnostic failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from pathlib import Path
from typing import Callable, TextIO

from . import __version__
from .agents import BackendError, LiveBackend, ScriptedBackend, default_script, load_script
from .bench import TRIAL_IDS, RecordStore, final_records, run_matrix, trial_by_id
from .config import BUILTIN_SCRIPT, ConfigError, RunConfig, load_run_config
from .feedback import FeedbackError, FeedbackStore, ask_feedback, import_feedback, ingest_feedback
from .lang import ParseError, parse, static_check
from .report import ReportError, emit_report, export_case_study
from .world import UserSignal, WorldEvent, export_trace

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _store_paths(store: str) -> tuple[Path, Path]:
    """Accept a run directory or a records file; return (records, feedback) paths."""
    p = Path(store)
    root = p if p.is_dir() or not p.suffix else p.parent
    records = p if p.suffix == ".jsonl" else root / "records.jsonl"
    return records, root / "feedback.jsonl"


def _parse_prompts(text: str | None) -> frozenset[int] | None:
    if text is None:
        return None
    try:
        ids = frozenset(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"--prompts expects comma-separated trial ids, got {text!r}") from None
    bad = sorted(i for i in ids if i not in TRIAL_IDS)
    if bad or not ids:
        raise ConfigError(f"unknown trial {bad[0] if bad else text!r}; expected ids 1-7")
    return ids


def _build_backend(cfg: RunConfig):
    if cfg.backend == "mock":
        script = default_script() if cfg.script == BUILTIN_SCRIPT else load_script(cfg.script)
        missing = script.missing_keys(cfg.matrix.configs, cfg.matrix.trials, cfg.matrix.repetitions)
        if missing:
            role, trial, rnd, config, rep = missing[0]
            raise ConfigError(f"script has no response for {role} (trial {trial}, round {rnd}, config {config}, "
                              f"repetition {rep}); {len(missing)} key(s) missing", cfg.source)
        return ScriptedBackend(script)
    live = cfg.live
    url = live.endpoint or os.environ.get(live.endpoint_env)
    model = live.model or os.environ.get(live.model_env)
    if not url or not model:
        raise ConfigError(f"live backend needs an endpoint and model (set {live.endpoint_env} and {live.model_env})",
                          cfg.source)
    return LiveBackend(url, model, os.environ.get(live.key_env))


def _terminal_wait(ask: Callable[[str], str], out: TextIO) -> Callable[[str, UserSignal], None]:
    def on_wait(prompt_text: str, signal: UserSignal) -> None:
        out.write(f"[robot is waiting] {prompt_text or 'Waiting for the user'}\n")
        ask("Press Enter when the user is ready... ")
        signal.deliver()

    return on_wait


def cmd_run(args, out: TextIO, ask: Callable[[str], str]) -> int:
    cfg = load_run_config(args.config)
    if args.workers:
        cfg.matrix.workers = args.workers
    backend = _build_backend(cfg)
    out_dir = Path(args.output_dir).resolve() if args.output_dir else cfg.output_dir

    def progress(rec) -> None:
        if rec.generation_failure:
            status = f"generation failed ({rec.generation_failure})"
        else:
            status = rec.status
        out.write(f"{rec.config} trial {rec.trial} rep {rec.repetition} attempt {rec.attempt_index}: {status}\n")
        out.flush()

    on_wait = _terminal_wait(ask, out) if cfg.mode == "interactive" else None
    finals = run_matrix(backend, cfg.matrix, out_dir=out_dir, on_wait=on_wait, progress=progress)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for rec in finals:
        events = [WorldEvent(e["time"], e["kind"], e["detail"]) for e in rec.action_trace]
        export_trace(events, trace_dir / f"{rec.config}_t{rec.trial}_r{rec.repetition}.jsonl")
    failed = [r for r in finals if not r.succeeded]
    out.write(f"{len(finals)} cells complete, {len(failed)} failed after all retries; records in {out_dir}\n")
    return EXIT_FAIL if failed else EXIT_OK


def _describe_run(rec, out: TextIO) -> None:
    out.write(f"Prompt: {trial_by_id(rec.trial).prompt}\n")
    out.write("What the robot did:\n")
    for e in rec.action_trace:
        out.write(f"  t={e['time']:7.2f}s  {e['kind']:<16} {e['detail']}\n")


def cmd_rate(args, out: TextIO, ask: Callable[[str], str]) -> int:
    records_path, feedback_path = _store_paths(args.store)
    records = RecordStore(records_path).load()
    store = FeedbackStore(feedback_path)
    if args.import_file:
        imported = import_feedback(args.import_file, records, store)
        out.write(f"imported {len(imported)} feedback rows\n")
        return EXIT_OK
    rated = store.rated_keys()
    pending = [r for r in final_records(records) if r.succeeded and r.cell not in rated]
    if not pending:
        out.write("nothing left to rate\n")
        return EXIT_OK
    random.Random(args.seed).shuffle(pending)
    for i, rec in enumerate(pending, start=1):
        out.write(f"\n=== Run {i} of {len(pending)} ===\n")
        _describe_run(rec, out)
        raw = ask_feedback(ask, out)
        store.append(ingest_feedback(rec.cell, raw, records, observer_id=args.observer))
    out.write(f"\nrecorded {len(pending)} ratings\n")
    return EXIT_OK


def cmd_validate(args, out: TextIO, ask=None) -> int:
    try:
        source = Path(args.program).read_text(encoding="utf-8")
    except OSError as exc:
        out.write(f"{args.program}: cannot read file: {exc.strerror}\n")
        return EXIT_FAIL
    try:
        program = parse(source)
    except ParseError as exc:
        diag = {"line": exc.line, "column": exc.col, "code": "parse-error", "message": exc.message}
        out.write(json.dumps(diag) + "\n" if args.json else f"{args.program}:{exc.line}:{exc.col}: parse-error: {exc.message}\n")
        return EXIT_FAIL
    diags = static_check(program)
    for d in diags:
        out.write(json.dumps(d.to_dict()) + "\n" if args.json else f"{args.program}:{d}\n")
    if not diags and not args.json:
        out.write(f"{args.program}: ok\n")
    return EXIT_FAIL if diags else EXIT_OK


def cmd_report(args, out: TextIO, ask=None) -> int:
    prompts = _parse_prompts(args.prompts)
    records_path, feedback_path = _store_paths(args.store)
    records = RecordStore(records_path).load()
    feedback = FeedbackStore(feedback_path).load()
    out_dir = Path(args.out) if args.out else records_path.parent / "report"
    paths = emit_report(records, feedback, out_dir, prompts)
    for p in paths:
        out.write(f"wrote {p}\n")
    return EXIT_OK


def cmd_export_case_study(args, out: TextIO, ask=None) -> int:
    prompts = _parse_prompts(args.prompts)
    records_path, _ = _store_paths(args.store)
    records = RecordStore(records_path).load()
    out_dir = Path(args.out) if args.out else records_path.parent / "case_study"
    paths = export_case_study(records, out_dir, sorted(prompts), args.per_config, args.seed)
    out.write(f"wrote {len(paths) - 1} samples and sealed key to {out_dir}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robocollab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the config x trial x repetition matrix")
    p.add_argument("config", help="run configuration file (YAML)")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.add_argument("--workers", type=int, default=0, help="parallel cells in headless mode (default: from config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rate", help="collect blind observer ratings for unrated runs")
    p.add_argument("store", help="run directory or records.jsonl")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed for presentation order (default 0)")
    p.add_argument("--observer", default="observer-1", help="anonymized observer label (default observer-1)")
    p.add_argument("--import", dest="import_file", help="ingest feedback from a JSON-lines file instead of prompting")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("validate", help="parse and statically check a program file")
    p.add_argument("program")
    p.add_argument("--json", action="store_true", help="emit diagnostics as JSON lines")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="write aggregate and figure tables")
    p.add_argument("store", help="run directory or records.jsonl")
    p.add_argument("--prompts", help="restrict score tables to these trial ids, e.g. 3,5")
    p.add_argument("--out", help="output directory (default: <store>/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-case-study", help="export anonymized program samples")
    p.add_argument("store", help="run directory or records.jsonl")
    p.add_argument("--prompts", default="3,5", help="trial ids to sample (default 3,5)")
    p.add_argument("--per-config", type=int, default=2, help="samples per config and prompt (default 2)")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default 0)")
    p.add_argument("--out", help="output directory (default: <store>/case_study)")
    p.set_defaults(func=cmd_export_case_study)
    return parser


def main(argv: list[str] | None = None, out: TextIO | None = None, ask: Callable[[str], str] | None = None) -> int:
    out = out or sys.stdout
    ask = ask or input
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, out, ask)
    except ConfigError as exc:
        out.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except (ReportError, FeedbackError, BackendError) as exc:
        out.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
