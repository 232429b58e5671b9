"""Builtin function table shared by the static checker and the interpreter."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BuiltinSig:
    name: str
    min_args: int
    max_args: int
    usage: str
    doc: str


BUILTINS: dict[str, BuiltinSig] = {
    sig.name: sig
    for sig in (
        BuiltinSig("fiducials", 0, 0, "fiducials()", "list of every visible fiducial, ordered by id"),
        BuiltinSig("nearest", 1, 1, 'nearest(label)', "closest fiducial with that label; error if none exists"),
        BuiltinSig("walk_to", 1, 2, "walk_to(fiducial) | walk_to([x, y]) | walk_to(x, y)",
                   "walk in a straight line; stops at the safety standoff from people; returns true if no safety violation"),
        BuiltinSig("nudge", 1, 1, "nudge(fiducial)", "approach to contact distance and nudge; returns true"),
        BuiltinSig("say", 1, 1, 'say(text)', "speak a non-empty sentence to the user"),
        BuiltinSig("wait_for_user", 0, 1, "wait_for_user() | wait_for_user(text)",
                   "pause until the user signals they are ready; returns false on timeout"),
        BuiltinSig("distance", 2, 2, "distance(a, b)", "meters between two fiducials or [x, y] points"),
        BuiltinSig("near", 2, 2, "near(a, b)", "true if a and b are within the configured proximity radius"),
        BuiltinSig("robot_position", 0, 0, "robot_position()", "current robot position as [x, y]"),
        BuiltinSig("len", 1, 1, "len(list_or_text)", "number of elements or characters"),
        BuiltinSig("str", 1, 1, "str(value)", "text form of any value"),
        BuiltinSig("abs", 1, 1, "abs(number)", "absolute value"),
        BuiltinSig("sqrt", 1, 1, "sqrt(number)", "square root of a non-negative number"),
    )
}


def api_reference() -> str:
    """Builtin reference text embedded in agent system prompts."""
    lines = [f"- {sig.usage}: {sig.doc}" for sig in BUILTINS.values()]
    lines.append('- fiducial fields: f["id"], f["label"], f["x"], f["y"]')
    return "\n".join(lines)
