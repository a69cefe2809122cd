"""MiniLang: the toy statically-typed language, its checker, and its interpreter."""

from rlcf.lang.checker import (
    CompileResult,
    Diagnostic,
    DiagnosticKind,
    check_program,
    compile_check,
    parse_program,
    prompt_code,
)
from rlcf.lang.interpreter import ExecResult, ExecStatus, execute

__all__ = [
    "CompileResult",
    "Diagnostic",
    "DiagnosticKind",
    "ExecResult",
    "ExecStatus",
    "check_program",
    "compile_check",
    "execute",
    "parse_program",
    "prompt_code",
]
