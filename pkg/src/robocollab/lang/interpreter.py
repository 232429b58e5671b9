"""Resource-limited interpreter binding programs to a simulated world."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..world import Fiducial, WorldError, WorldEvent, WorldState, distance, nearest, visible_fiducials
from .builtins import BUILTINS
from .nodes import (
    Assign,
    BinOp,
    Call,
    ForEach,
    If,
    Index,
    Let,
    ListLit,
    Literal,
    Program,
    Return,
    UnaryOp,
    Var,
    While,
)
from .parser import ParseError, parse
from .printer import format_number

STATUSES = ("success", "parse_error", "runtime_error", "step_limit_exceeded")

MAX_STRING = 10_000


@dataclass(frozen=True)
class Limits:
    max_steps: int = 100_000
    max_sim_time: float = 3600.0
    max_wait: float = 600.0

    def __post_init__(self) -> None:
        if self.max_steps <= 0 or self.max_sim_time <= 0 or self.max_wait <= 0:
            raise ValueError("all limits must be positive")


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    error_detail: str | None = None
    steps_used: int = 0
    sim_time_elapsed: float = 0.0
    action_trace: tuple[WorldEvent, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "error_detail": self.error_detail,
            "steps_used": self.steps_used,
            "sim_time_elapsed": self.sim_time_elapsed,
            "action_trace": [e.to_dict() for e in self.action_trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExecutionOutcome:
        trace = tuple(WorldEvent(e["time"], e["kind"], e["detail"]) for e in d.get("action_trace", ()))
        return cls(d["status"], d.get("error_detail"), d.get("steps_used", 0), d.get("sim_time_elapsed", 0.0), trace)


class RuntimeFault(Exception):
    def __init__(self, message: str, node=None) -> None:
        where = f"{node.line}:{node.col}: " if node is not None and node.line else ""
        super().__init__(where + message)


class _StepLimit(Exception):
    pass


class _ReturnSignal(Exception):
    pass


def type_name(v) -> str:
    if v is None:
        return "nil"
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, tuple):
        return "list"
    if isinstance(v, Fiducial):
        return "fiducial"
    return type(v).__name__


def to_text(v) -> str:
    if v is None:
        return "nil"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_number(v) if math.isfinite(v) else repr(v)
    if isinstance(v, str):
        return v
    if isinstance(v, tuple):
        return "[" + ", ".join(to_text(x) for x in v) + "]"
    if isinstance(v, Fiducial):
        return f"{v.label} {v.id}"
    return str(v)


def _values_equal(a, b) -> bool:
    return type_name(a) == type_name(b) and a == b


class Interpreter:
    def __init__(self, world: WorldState, limits: Limits) -> None:
        self.world = world
        self.limits = limits
        self.steps = 0
        self.scopes: list[dict] = [{}]
        self.clock_start = world.sim_clock

    def tick(self) -> None:
        if self.steps >= self.limits.max_steps:
            raise _StepLimit
        self.steps += 1

    # scopes

    def lookup(self, name: str, node):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        raise RuntimeFault(f"unbound variable {name!r}", node)

    def assign(self, name: str, value, node) -> None:
        for scope in reversed(self.scopes):
            if name in scope:
                scope[name] = value
                return
        raise RuntimeFault(f"assignment to unbound variable {name!r}", node)

    def run_block(self, stmts, bindings: dict | None = None) -> None:
        self.scopes.append(dict(bindings or {}))
        try:
            for s in stmts:
                self.exec(s)
        finally:
            self.scopes.pop()

    # statements

    def exec(self, node) -> None:
        self.tick()
        if isinstance(node, Let):
            self.scopes[-1][node.name] = self.eval(node.value)
        elif isinstance(node, Assign):
            self.assign(node.name, self.eval(node.value), node)
        elif isinstance(node, If):
            if self.truth(self.eval(node.cond), node):
                self.run_block(node.then)
            else:
                self.run_block(node.orelse)
        elif isinstance(node, While):
            while self.truth(self.eval(node.cond), node):
                self.run_block(node.body)
        elif isinstance(node, ForEach):
            seq = self.eval(node.iterable)
            if not isinstance(seq, tuple):
                raise RuntimeFault(f"cannot iterate over {type_name(seq)}", node)
            for item in seq:
                self.run_block(node.body, {node.var: item})
        elif isinstance(node, Return):
            if node.value is not None:
                self.eval(node.value)
            raise _ReturnSignal
        else:
            self.eval(node)

    def truth(self, value, node) -> bool:
        if not isinstance(value, bool):
            raise RuntimeFault(f"condition must be bool, got {type_name(value)}", node)
        return value

    # expressions

    def eval(self, node):
        self.tick()
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, Var):
            return self.lookup(node.name, node)
        if isinstance(node, ListLit):
            return tuple(self.eval(x) for x in node.items)
        if isinstance(node, Index):
            return self.index(self.eval(node.target), self.eval(node.index), node)
        if isinstance(node, UnaryOp):
            v = self.eval(node.operand)
            if node.op == "not":
                return not self.truth(v, node)
            if not isinstance(v, float):
                raise RuntimeFault(f"cannot negate {type_name(v)}", node)
            return -v
        if isinstance(node, BinOp):
            return self.binop(node)
        if isinstance(node, Call):
            args = [self.eval(a) for a in node.args]
            return self.call(node, args)
        raise RuntimeFault(f"unknown node {type(node).__name__}", node)

    def binop(self, node: BinOp):
        op = node.op
        if op in ("and", "or"):
            left = self.truth(self.eval(node.left), node)
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            return self.truth(self.eval(node.right), node)
        a = self.eval(node.left)
        b = self.eval(node.right)
        if op == "==":
            return _values_equal(a, b)
        if op == "!=":
            return not _values_equal(a, b)
        if op == "+" and isinstance(a, str) and isinstance(b, str):
            if len(a) + len(b) > MAX_STRING:
                raise RuntimeFault("string too long", node)
            return a + b
        if op in ("<", ">", "<=", ">="):
            if not (isinstance(a, float) and isinstance(b, float)) and not (isinstance(a, str) and isinstance(b, str)):
                raise RuntimeFault(f"cannot compare {type_name(a)} {op} {type_name(b)}", node)
            return {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]
        if not (isinstance(a, float) and isinstance(b, float)):
            raise RuntimeFault(f"type mismatch: {type_name(a)} {op} {type_name(b)}", node)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0.0:
            raise RuntimeFault("division by zero", node)
        return a / b

    def index(self, target, idx, node):
        if isinstance(target, tuple):
            if not isinstance(idx, float) or not idx.is_integer():
                raise RuntimeFault("list index must be a whole number", node)
            i = int(idx)
            if not 0 <= i < len(target):
                raise RuntimeFault(f"list index {i} out of range", node)
            return target[i]
        if isinstance(target, Fiducial):
            if idx == "id":
                return float(target.id)
            if idx == "label":
                return target.label
            if idx == "x":
                return target.x
            if idx == "y":
                return target.y
            raise RuntimeFault(f"fiducial has no field {to_text(idx)!r}", node)
        raise RuntimeFault(f"cannot index {type_name(target)}", node)

    # builtins

    def point(self, v, node) -> tuple[float, float]:
        if isinstance(v, Fiducial):
            return v.position
        if isinstance(v, tuple) and len(v) == 2 and all(isinstance(c, float) for c in v):
            return (v[0], v[1])
        raise RuntimeFault(f"expected a fiducial or [x, y] point, got {type_name(v)}", node)

    def fiducial_arg(self, v, node) -> Fiducial:
        if isinstance(v, Fiducial):
            return self.world.fiducial(v.id)
        if isinstance(v, float) and v.is_integer():
            return self.world.fiducial(int(v))
        raise RuntimeFault(f"expected a fiducial, got {type_name(v)}", node)

    def number_arg(self, v, node) -> float:
        if not isinstance(v, float):
            raise RuntimeFault(f"expected a number, got {type_name(v)}", node)
        return v

    def check_clock(self, node) -> None:
        if self.world.sim_clock - self.clock_start > self.limits.max_sim_time:
            raise RuntimeFault("simulated time limit exceeded", node)

    def call(self, node: Call, args: list):
        sig = BUILTINS.get(node.name)
        if sig is None:
            raise RuntimeFault(f"unknown builtin {node.name!r}", node)
        if not sig.min_args <= len(args) <= sig.max_args:
            raise RuntimeFault(f"{node.name} called with {len(args)} argument(s)", node)
        name = node.name
        w = self.world
        if name == "fiducials":
            return tuple(visible_fiducials(w))
        if name == "nearest":
            label = args[0]
            if not isinstance(label, str):
                raise RuntimeFault("nearest expects a label string", node)
            found = nearest(w, label)
            if found is None:
                raise RuntimeFault(f"no fiducial labelled {label!r} present", node)
            return found
        if name == "walk_to":
            if len(args) == 2:
                target = (self.number_arg(args[0], node), self.number_arg(args[1], node))
            else:
                target = self.point(args[0], node)
            result = w.walk_to(target)
            self.check_clock(node)
            return result.ok
        if name == "nudge":
            result = w.nudge(self.fiducial_arg(args[0], node).id)
            self.check_clock(node)
            return result.ok
        if name == "say":
            if not isinstance(args[0], str):
                raise RuntimeFault("say expects text", node)
            w.say(args[0])
            self.check_clock(node)
            return None
        if name == "wait_for_user":
            text = to_text(args[0]) if args else ""
            result = w.wait_for_user(text, max_wait=self.limits.max_wait)
            self.check_clock(node)
            return result.ok
        if name == "distance":
            return distance(self.point(args[0], node), self.point(args[1], node))
        if name == "near":
            d = distance(self.point(args[0], node), self.point(args[1], node))
            return d <= w.config.proximity_radius
        if name == "robot_position":
            return (w.robot.x, w.robot.y)
        if name == "len":
            if not isinstance(args[0], (tuple, str)):
                raise RuntimeFault(f"len of {type_name(args[0])}", node)
            return float(len(args[0]))
        if name == "str":
            text = to_text(args[0])
            if len(text) > MAX_STRING:
                raise RuntimeFault("string too long", node)
            return text
        if name == "abs":
            return abs(self.number_arg(args[0], node))
        if name == "sqrt":
            v = self.number_arg(args[0], node)
            if v < 0:
                raise RuntimeFault("sqrt of negative number", node)
            return math.sqrt(v)
        raise RuntimeFault(f"builtin {name!r} not bound", node)


def execute(program: Program, world: WorldState, limits: Limits | None = None) -> ExecutionOutcome:
    """Run ``program`` against ``world``. Never raises; failures become statuses."""
    limits = limits or Limits()
    interp = Interpreter(world, limits)
    first_event = len(world.events)
    status, detail = "success", None
    try:
        interp.run_block(program.statements)
    except _ReturnSignal:
        pass
    except _StepLimit:
        status, detail = "step_limit_exceeded", f"step limit of {limits.max_steps} reached"
    except RuntimeFault as exc:
        status, detail = "runtime_error", str(exc)
    except WorldError as exc:
        status, detail = "runtime_error", str(exc)
    except RecursionError:
        status, detail = "runtime_error", "evaluation nested too deeply"
    except Exception as exc:  # noqa: BLE001 - sandbox must classify every failure
        status, detail = "runtime_error", f"internal error: {type(exc).__name__}: {exc}"
    return ExecutionOutcome(
        status=status,
        error_detail=detail,
        steps_used=interp.steps,
        sim_time_elapsed=world.sim_clock - interp.clock_start,
        action_trace=tuple(world.events[first_event:]),
    )


def run_source(source: str, world: WorldState, limits: Limits | None = None) -> ExecutionOutcome:
    """Parse and execute in one step, reporting parse failures as an outcome."""
    try:
        program = parse(source)
    except ParseError as exc:
        return ExecutionOutcome("parse_error", str(exc))
    return execute(program, world, limits)
