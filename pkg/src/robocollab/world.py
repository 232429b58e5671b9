"""Deterministic 2D room simulation: robot, fiducial-tagged objects, event trace.

All units are meters and seconds. The simulator is permissive: unsafe moves
are executed and recorded as ``safety_violation`` events rather than refused.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

LABELS = ("chair", "person", "donut", "apple", "refrigerator", "oven", "microwave")
EVENT_KINDS = ("moved", "spoke", "nudged", "waited", "safety_violation")

_EPS = 1e-9

Point = tuple[float, float]


class WorldError(ValueError):
    """Raised for invalid requests against a world (bad ids, bounds, input)."""


class UnknownContext(WorldError):
    pass


class UnknownFiducial(WorldError):
    pass


class OutOfBounds(WorldError):
    pass


@dataclass(frozen=True)
class Fiducial:
    id: int
    label: str
    x: float
    y: float

    def __post_init__(self) -> None:
        if self.id < 1:
            raise WorldError(f"fiducial id must be >= 1, got {self.id}")
        if self.label not in LABELS:
            raise WorldError(f"unknown fiducial label {self.label!r}")

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Bounds:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, p: Point) -> bool:
        return (
            self.xmin - _EPS <= p[0] <= self.xmax + _EPS
            and self.ymin - _EPS <= p[1] <= self.ymax + _EPS
        )


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldEvent:
    time: float
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class ActionResult:
    ok: bool
    elapsed: float
    message: str = ""


@dataclass(frozen=True)
class WorldConfig:
    """Tunable simulation constants.

    ``safety_radius`` is the standoff kept from people during normal walking;
    ``contact_standoff`` is the closer distance a nudge is allowed to reach.
    ``proximity_radius`` is what "near" means for object/person relations.
    """

    speed: float = 1.0
    nudge_speed: float = 0.5
    safety_radius: float = 0.5
    contact_standoff: float = 0.3
    proximity_radius: float = 1.5
    speech_time: float = 1.0
    auto_delay: float = 2.0
    mode: str = "headless"

    def __post_init__(self) -> None:
        if self.mode not in ("headless", "interactive"):
            raise WorldError(f"mode must be headless or interactive, got {self.mode!r}")
        for name in ("speed", "nudge_speed", "safety_radius", "contact_standoff", "speech_time"):
            if getattr(self, name) <= 0:
                raise WorldError(f"{name} must be positive")


class UserSignal:
    """Ready-signal from the user; safe to deliver from any thread."""

    def __init__(self) -> None:
        self._event = threading.Event()

    @property
    def state(self) -> str:
        return "delivered" if self._event.is_set() else "pending"

    def deliver(self) -> None:
        self._event.set()

    def reset(self) -> None:
        self._event.clear()

    def wait(self, timeout: float | None) -> bool:
        return self._event.wait(timeout)


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if wrapped >= math.pi else wrapped


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return distance(p, a)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return distance(p, (ax + t * dx, ay + t * dy))


def _disc_entry(a: Point, b: Point, centre: Point, radius: float) -> float | None:
    """Smallest t in [0, 1] where a + t(b - a) reaches the circle, else None."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    fx, fy = a[0] - centre[0], a[1] - centre[1]
    qa = dx * dx + dy * dy
    if qa == 0.0:
        return None
    qb = 2.0 * (fx * dx + fy * dy)
    qc = fx * fx + fy * fy - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return None
    t = (-qb - math.sqrt(disc)) / (2.0 * qa)
    return t if 0.0 <= t <= 1.0 else None


class WorldState:
    """One simulated room. Not thread-safe; use one instance per run."""

    def __init__(
        self,
        bounds: Bounds,
        fiducials: Iterable[Fiducial] = (),
        robot: RobotState | None = None,
        config: WorldConfig | None = None,
        context_id: int | None = None,
    ) -> None:
        fids = sorted(fiducials, key=lambda f: f.id)
        ids = [f.id for f in fids]
        if len(set(ids)) != len(ids):
            raise WorldError("fiducial ids must be unique")
        self.bounds = bounds
        self.robot = robot if robot is not None else RobotState()
        if not bounds.contains(self.robot.position):
            raise OutOfBounds("robot start pose outside bounds")
        self.robot.heading = normalize_angle(self.robot.heading)
        self.config = config if config is not None else WorldConfig()
        self.context_id = context_id
        self.sim_clock = 0.0
        self.events: list[WorldEvent] = []
        self.user_signal = UserSignal()
        # Called with (prompt text, signal) when an interactive wait begins.
        self.on_wait: Callable[[str, UserSignal], None] | None = None
        self._fiducials = {f.id: f for f in fids}

    @property
    def fiducials(self) -> tuple[Fiducial, ...]:
        return tuple(self._fiducials.values())

    def fiducial(self, fiducial_id: int) -> Fiducial:
        try:
            return self._fiducials[fiducial_id]
        except KeyError:
            raise UnknownFiducial(f"unknown fiducial id {fiducial_id}") from None

    def persons(self) -> list[Fiducial]:
        return [f for f in self._fiducials.values() if f.label == "person"]

    def digest(self) -> str:
        """Plain-text summary of the scene handed to agents as context."""
        r = self.robot
        lines = [f"robot at ({r.x:.2f}, {r.y:.2f}) heading {r.heading:.2f} rad"]
        for f in visible_fiducials(self):
            lines.append(f"fiducial {f.id}: {f.label} at ({f.x:.2f}, {f.y:.2f})")
        return "\n".join(lines)

    def without(self, *fiducial_ids: int) -> WorldState:
        """Copy with the same pose and settings minus some fiducials; clock and events start fresh."""
        keep = [f for f in self._fiducials.values() if f.id not in fiducial_ids]
        return WorldState(self.bounds, keep, replace(self.robot), self.config, self.context_id)

    def _log(self, kind: str, detail: str) -> None:
        self.events.append(WorldEvent(self.sim_clock, kind, detail))

    def _advance(self, seconds: float) -> None:
        self.sim_clock += max(0.0, seconds)

    def _violations(self, start: Point, end: Point, exempt: Iterable[int] = ()) -> list[Fiducial]:
        skip = set(exempt)
        hits = []
        for p in self.persons():
            if p.id in skip:
                continue
            # Already inside the disc at the start: leaving it is not a new intrusion.
            if distance(start, p.position) < self.config.safety_radius - _EPS:
                continue
            if point_segment_distance(p.position, start, end) < self.config.safety_radius - _EPS:
                hits.append(p)
        return hits

    def _move(self, end: Point, speed: float) -> float:
        start = self.robot.position
        length = distance(start, end)
        if length > 0.0:
            self.robot.heading = normalize_angle(math.atan2(end[1] - start[1], end[0] - start[0]))
        self.robot.x, self.robot.y = end
        elapsed = length / speed
        self._advance(elapsed)
        return elapsed

    def walk_to(self, target: Point) -> ActionResult:
        target = (float(target[0]), float(target[1]))
        if not self.bounds.contains(target):
            raise OutOfBounds(f"target ({target[0]:g}, {target[1]:g}) outside world bounds")
        start = self.robot.position
        radius = self.config.safety_radius
        end = target
        stop_t = 1.0
        for p in self.persons():
            if distance(target, p.position) < radius - _EPS:
                if distance(start, p.position) < radius - _EPS:
                    stop_t = 0.0
                    continue
                t = _disc_entry(start, target, p.position, radius)
                if t is not None:
                    stop_t = min(stop_t, t)
        if stop_t < 1.0:
            end = (start[0] + stop_t * (target[0] - start[0]), start[1] + stop_t * (target[1] - start[1]))
        violations = self._violations(start, end)
        elapsed = self._move(end, self.config.speed)
        self._log("moved", f"from ({start[0]:.3f}, {start[1]:.3f}) to ({end[0]:.3f}, {end[1]:.3f})")
        for p in violations:
            self._log("safety_violation", f"path passed within {radius:g} m of person {p.id}")
        if violations:
            return ActionResult(False, elapsed, "path entered a person safety radius")
        return ActionResult(True, elapsed, "arrived" if stop_t == 1.0 else "stopped at standoff")

    def nudge(self, fiducial_id: int) -> ActionResult:
        target = self.fiducial(fiducial_id)
        start = self.robot.position
        gap = distance(start, target.position)
        standoff = self.config.contact_standoff
        if gap > 0.0:
            ux, uy = (start[0] - target.x) / gap, (start[1] - target.y) / gap
        else:
            ux, uy = -math.cos(self.robot.heading), -math.sin(self.robot.heading)
        end = (target.x + ux * standoff, target.y + uy * standoff)
        if not self.bounds.contains(end):
            raise OutOfBounds(f"cannot reach fiducial {fiducial_id} within bounds")
        violations = self._violations(start, end, exempt=(target.id,))
        heading_after = math.atan2(target.y - end[1], target.x - end[0])
        elapsed = self._move(end, self.config.nudge_speed)
        self.robot.heading = normalize_angle(heading_after)
        self._log("moved", f"from ({start[0]:.3f}, {start[1]:.3f}) to ({end[0]:.3f}, {end[1]:.3f})")
        for p in violations:
            self._log("safety_violation", f"path passed within {self.config.safety_radius:g} m of person {p.id}")
        self._log("nudged", f"{target.label} {target.id}")
        return ActionResult(True, elapsed, f"nudged {target.label} {target.id}")

    def say(self, text: str) -> ActionResult:
        if not isinstance(text, str) or not text.strip():
            raise WorldError("utterance must be non-empty")
        self._advance(self.config.speech_time)
        self._log("spoke", text)
        return ActionResult(True, self.config.speech_time, "spoke")

    def wait_for_user(self, prompt_text: str = "", max_wait: float | None = None) -> ActionResult:
        if self.config.mode == "headless":
            waited = self.config.auto_delay
            ok = max_wait is None or waited <= max_wait
            if not ok:
                waited = max_wait
        else:
            self.user_signal.reset()
            began = time.monotonic()
            if self.on_wait is not None:
                self.on_wait(prompt_text, self.user_signal)
            ok = self.user_signal.wait(max_wait)
            waited = time.monotonic() - began
        self._advance(waited)
        self._log("waited", f"{waited:.3f} s" + ("" if ok else " (timeout)"))
        return ActionResult(ok, waited, "user ready" if ok else "timed out waiting for user")


def visible_fiducials(world: WorldState) -> list[Fiducial]:
    # Visibility is total: every fiducial in the room counts as in view.
    return list(world.fiducials)


def nearest(world: WorldState, label: str) -> Fiducial | None:
    """Closest fiducial with ``label`` to the robot; ties go to the lowest id."""
    best: Fiducial | None = None
    best_d = math.inf
    for f in visible_fiducials(world):
        if f.label != label:
            continue
        d = distance(world.robot.position, f.position)
        if d < best_d:
            best, best_d = f, d
    return best


def layout_from_dict(doc: dict, config: WorldConfig | None = None) -> WorldState:
    b = doc["bounds"]
    bounds = Bounds(float(b["xmin"]), float(b["xmax"]), float(b["ymin"]), float(b["ymax"]))
    r = doc.get("robot", {})
    robot = RobotState(float(r.get("x", 0.0)), float(r.get("y", 0.0)), float(r.get("heading", 0.0)))
    fids = [Fiducial(int(f["id"]), str(f["label"]), float(f["x"]), float(f["y"])) for f in doc["fiducials"]]
    return WorldState(bounds, fids, robot, config, doc.get("context_id"))


def layout_to_dict(world: WorldState) -> dict:
    b = world.bounds
    return {
        "context_id": world.context_id,
        "bounds": {"xmin": b.xmin, "xmax": b.xmax, "ymin": b.ymin, "ymax": b.ymax},
        "robot": {"x": world.robot.x, "y": world.robot.y, "heading": world.robot.heading},
        "fiducials": [{"id": f.id, "label": f.label, "x": f.x, "y": f.y} for f in world.fiducials],
    }


def load_layout(path: str | Path, config: WorldConfig | None = None) -> WorldState:
    return layout_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), config)


def spawn_world(context_id: int, config: WorldConfig | None = None) -> WorldState:
    """Build the canonical room for one of the seven trial contexts."""
    if not isinstance(context_id, int) or not 1 <= context_id <= 7:
        raise UnknownContext(f"unknown context id {context_id!r}; expected 1-7")
    text = resources.files("robocollab.data.layouts").joinpath(f"trial_{context_id}.json").read_text("utf-8")
    return layout_from_dict(json.loads(text), config)


def export_trace(events: Iterable[WorldEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[WorldEvent]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(WorldEvent(float(d["time"]), d["kind"], d["detail"]))
    return out
