from __future__ import annotations

import json

import pytest

from robocollab.agents import BackendScript, FailureInjection, ScriptedBackend, ScriptEntry, default_script
from robocollab.bench import (
    AllRetriesFailed, CodeBundle, MatrixSettings, RecordStore, TrialRecord, final_records, generate_cell,
    load_trials, pregenerate, regenerate_on_failure, run_attempt, run_matrix, trial_by_id,
)
from robocollab.world import spawn_world

def test_trials_table():
    trials = load_trials()
    assert [t.id for t in trials] == list(range(1, 8))
    assert all(t.prompt and t.context_id == t.id for t in trials)
    with pytest.raises(ValueError):
        trial_by_id(8)


def test_bundle_deterministic_without_timing():
    trials = load_trials()
    a = pregenerate("ABC", trials, (1, 2, 3), ScriptedBackend(default_script()))
    b = pregenerate("ABC", trials, (1, 2, 3), ScriptedBackend(default_script()))
    assert len(a.cells) == 63
    assert a.dumps(timing=False) == b.dumps(timing=False)


def test_bundle_save_load(tmp_path):
    bundle = pregenerate("B", load_trials()[:2], (1,), ScriptedBackend(default_script()))
    bundle.save(tmp_path / "b.jsonl")
    assert CodeBundle.load(tmp_path / "b.jsonl").dumps(timing=False) == bundle.dumps(timing=False)


def test_execution_sim_time_repeatable():
    cell = generate_cell("C", trial_by_id(4), 1, 0, ScriptedBackend(default_script()))
    r1 = run_attempt(cell, spawn_world(4))
    r2 = run_attempt(cell, spawn_world(4))
    assert r1.execution_sim_time == r2.execution_sim_time > 0


def test_generation_failure_record_has_no_status():
    script = BackendScript([ScriptEntry("coder", 0, "no code here")])
    cell = generate_cell("A", trial_by_id(1), 1, 0, ScriptedBackend(script))
    rec = run_attempt(cell, spawn_world(1))
    assert rec.status is None and rec.generation_failure == "no_code_block" and not rec.execution_failure


def _always_broken(trial: int = 1) -> BackendScript:
    base = default_script()
    fails = {FailureInjection("A", trial, 1, a) for a in range(4)}
    return BackendScript(base.entries, fails)


def test_regeneration_gives_up_after_max_retries():
    backend = ScriptedBackend(_always_broken())
    cell = generate_cell("A", trial_by_id(1), 1, 0, backend)
    with pytest.raises(AllRetriesFailed) as exc:
        regenerate_on_failure(cell, backend, max_retries=3)
    assert [r.attempt_index for r in exc.value.records] == [1, 2, 3]
    assert all(r.was_regenerated and r.status == "parse_error" for r in exc.value.records)


def test_regeneration_recovers():
    script = default_script()
    backend = ScriptedBackend(BackendScript(script.entries, {FailureInjection("A", 2, 1, 0)}))
    cell = generate_cell("A", trial_by_id(2), 1, 0, backend)
    recs = regenerate_on_failure(cell, backend)
    assert [r.attempt_index for r in recs] == [1] and recs[0].succeeded


def test_matrix_grid_complete_and_unique(tmp_path):
    finals = run_matrix(ScriptedBackend(default_script()), out_dir=tmp_path)
    keys = [r.cell for r in finals]
    assert len(keys) == 63 == len(set(keys))
    assert all(r.succeeded for r in finals)
    stored = RecordStore(tmp_path / "records.jsonl").load()
    assert [r.to_dict() for r in final_records(stored)] == [r.to_dict() for r in finals]


def test_matrix_resume_does_not_duplicate(tmp_path):
    backend = ScriptedBackend(default_script())
    run_matrix(backend, out_dir=tmp_path)
    before = (tmp_path / "records.jsonl").read_text()
    run_matrix(backend, out_dir=tmp_path)
    assert (tmp_path / "records.jsonl").read_text() == before


def test_matrix_resume_after_interruption(tmp_path):
    backend = ScriptedBackend(default_script())
    full = run_matrix(backend, out_dir=tmp_path / "full")
    lines = (tmp_path / "full" / "records.jsonl").read_text().splitlines(keepends=True)
    part = tmp_path / "part"
    part.mkdir()
    # Keep the first 20 records plus a torn half-line.
    (part / "records.jsonl").write_text("".join(lines[:20]) + lines[20][:15])
    resumed = run_matrix(backend, out_dir=part)
    strip = lambda r: {k: v for k, v in r.to_dict().items() if k not in ("inference_duration", "execution_wall_time")}
    assert [strip(r) for r in resumed] == [strip(r) for r in full]


def test_matrix_parallel_matches_serial():
    backend = ScriptedBackend(default_script())
    strip = lambda r: {k: v for k, v in r.to_dict().items() if k not in ("inference_duration", "execution_wall_time")}
    serial = run_matrix(backend)
    parallel = run_matrix(backend, MatrixSettings(workers=4))
    assert [strip(r) for r in serial] == [strip(r) for r in parallel]


def test_all_retries_failed_is_final(tmp_path):
    finals = run_matrix(ScriptedBackend(_always_broken()), MatrixSettings(configs=("A",), trials=(1,), repetitions=(1,)),
                        out_dir=tmp_path)
    assert len(finals) == 1 and finals[0].attempt_index == 3 and not finals[0].succeeded
    assert len(RecordStore(tmp_path / "records.jsonl").load()) == 4


def test_record_round_trip():
    rec = run_matrix(ScriptedBackend(default_script()), MatrixSettings(configs=("C",), trials=(4,), repetitions=(1,)))[0]
    again = TrialRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert again == rec and again.outcome.status == "success"
