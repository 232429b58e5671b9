"""Run configuration files (YAML) with line-numbered diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bench import REPETITIONS, TRIAL_IDS, MatrixSettings
from .lang import Limits
from .orchestrator import CONFIGS
from .world import WorldConfig, WorldError

BUILTIN_SCRIPT = "builtin"

_SECRET_KEYS = {"api_key", "key", "token", "secret", "password"}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None) -> None:
        where = str(path) if path else "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass
class LiveSettings:
    endpoint_env: str = "ROBOCOLLAB_ENDPOINT"
    model_env: str = "ROBOCOLLAB_MODEL"
    key_env: str = "ROBOCOLLAB_API_KEY"
    endpoint: str | None = None
    model: str | None = None


@dataclass
class RunConfig:
    backend: str
    script: str | None
    live: LiveSettings
    matrix: MatrixSettings
    output_dir: Path
    seed: int = 0
    source: Path | None = field(default=None, repr=False)

    @property
    def mode(self) -> str:
        return self.matrix.world_config.mode


def _key_lines(node) -> dict[str, int]:
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            lines[str(k.value)] = k.start_mark.line + 1
    return lines


def _int_list(value, allowed, name: str, err) -> tuple:
    if isinstance(value, int) and name == "repetitions":
        value = list(range(1, value + 1))
    if not isinstance(value, list) or not value:
        raise err(f"{name} must be a non-empty list")
    out = []
    for v in value:
        if v not in allowed:
            raise err(f"{name}: {v!r} is not one of {list(allowed)}")
        out.append(v)
    return tuple(out)


def parse_run_config(text: str, path: str | Path | None = None) -> RunConfig:
    base = Path(path).parent if path else Path.cwd()
    try:
        root = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", path,
                          mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping", path, 1)
    lines = _key_lines(root)

    def err(key: str):
        return lambda msg: ConfigError(msg, path, lines.get(key))

    for section in (doc, doc.get("live") or {}):
        for k in section:
            if str(k).lower() in _SECRET_KEYS:
                raise err(k)(f"{k!r}: secrets must come from environment variables, not the config file")

    backend = doc.get("backend")
    if backend not in ("mock", "live"):
        raise err("backend")(f"backend must be 'mock' or 'live', got {backend!r}")
    script = doc.get("script")
    if backend == "mock" and not script:
        raise err("backend")("backend 'mock' requires a 'script' path (or 'builtin')")
    if script and script != BUILTIN_SCRIPT:
        script = str((base / script).resolve())
        if not Path(script).exists():
            raise err("script")(f"script file not found: {script}")

    live_doc = doc.get("live") or {}
    live = LiveSettings(**{k: v for k, v in live_doc.items() if k in LiveSettings.__dataclass_fields__})
    unknown_live = set(live_doc) - set(LiveSettings.__dataclass_fields__)
    if unknown_live:
        raise err("live")(f"unknown live settings: {sorted(unknown_live)}")
    if backend == "live" and not (live.endpoint or live.endpoint_env):
        raise err("live")("backend 'live' requires endpoint settings")

    m = doc.get("matrix") or {}
    configs = _int_list(m.get("configs", list(CONFIGS)), CONFIGS, "configs", err("matrix"))
    trials = _int_list(m.get("trials", list(TRIAL_IDS)), TRIAL_IDS, "trials", err("matrix"))
    reps = _int_list(m.get("repetitions", len(REPETITIONS)), range(1, 1000), "repetitions", err("matrix"))

    try:
        limits = Limits(**(doc.get("limits") or {}))
    except (TypeError, ValueError) as exc:
        raise err("limits")(f"bad limits: {exc}") from None
    world_doc = dict(doc.get("world") or {})
    world_doc["mode"] = doc.get("mode", "headless")
    try:
        world = WorldConfig(**world_doc)
    except (TypeError, WorldError) as exc:
        raise err("world" if "world" in doc else "mode")(f"bad world settings: {exc}") from None

    settings = MatrixSettings(
        configs=configs, trials=trials, repetitions=reps, limits=limits, world_config=world,
        max_retries=int(doc.get("max_retries", 3)), max_rounds=int(doc.get("max_rounds", 10)),
        workers=int(doc.get("workers", 1)),
    )
    out = doc.get("output_dir", "runs/latest")
    return RunConfig(backend, script, live, settings, (base / out).resolve(), int(doc.get("seed", 0)),
                     Path(path) if path else None)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_run_config(text, path)
