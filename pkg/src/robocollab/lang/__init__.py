"""The sandboxed robot-command language: parser, printer, checker, interpreter."""

from .builtins import BUILTINS, api_reference
from .checker import Diagnostic, static_check
from .interpreter import STATUSES, ExecutionOutcome, Limits, execute, run_source
from .nodes import Program
from .parser import ParseError, parse, tokenize
from .printer import pretty_print

__all__ = [
    "BUILTINS",
    "Diagnostic",
    "ExecutionOutcome",
    "Limits",
    "ParseError",
    "Program",
    "STATUSES",
    "api_reference",
    "execute",
    "parse",
    "pretty_print",
    "run_source",
    "static_check",
    "tokenize",
]
