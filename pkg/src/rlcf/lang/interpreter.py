"""Tree-walking MiniLang interpreter with a fuel bound.

Used only at evaluation time: training never executes generated code. Every
statement and expression node costs one unit of fuel, so non-terminating loops
hit the FUEL_EXHAUSTED guard. Integer division truncates toward zero and `%`
is the matching remainder; `&&`/`||` evaluate both operands.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from rlcf import vocab
from rlcf.lang import checker
from rlcf.lang.checker import (
    Assign, Binary, BoolLit, If, IntLit, Let, Print, Program, Read, Unary, Var, While,
)

DEFAULT_FUEL = 10_000


class ExecStatus(Enum):
    COMPLETED = "Completed"
    RUNTIME_ERROR = "RuntimeError"
    FUEL_EXHAUSTED = "FuelExhausted"


@dataclass(frozen=True)
class ExecResult:
    status: ExecStatus
    outputs: tuple[int, ...]
    fuel_used: int


class _Halt(Exception):
    def __init__(self, status: ExecStatus):
        self.status = status


class _Machine:
    def __init__(self, input_values, fuel: int):
        self.inputs = list(input_values)
        self.input_pos = 0
        self.fuel_left = fuel
        self.outputs: list[int] = []
        self.scopes: list[dict[int, object]] = [{}]

    def burn(self):
        if self.fuel_left <= 0:
            raise _Halt(ExecStatus.FUEL_EXHAUSTED)
        self.fuel_left -= 1

    def find_scope(self, name: int) -> dict:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope
        raise KeyError(vocab.lexeme(name))

    def run_body(self, body: list):
        for stmt in body:
            self.run_stmt(stmt)

    def run_stmt(self, stmt):
        self.burn()
        if isinstance(stmt, Let):
            self.scopes[-1][stmt.name] = self.eval(stmt.value)
        elif isinstance(stmt, Assign):
            self.find_scope(stmt.name)[stmt.name] = self.eval(stmt.value)
        elif isinstance(stmt, If):
            branch = stmt.then_body if self.eval(stmt.cond) else stmt.else_body
            if branch is not None:
                self.scopes.append({})
                self.run_body(branch)
                self.scopes.pop()
        elif isinstance(stmt, While):
            while self.eval(stmt.cond):
                self.scopes.append({})
                self.run_body(stmt.body)
                self.scopes.pop()
                self.burn()  # each re-check of the loop costs like the statement
        elif isinstance(stmt, Print):
            self.outputs.append(self.eval(stmt.value))
        elif isinstance(stmt, Read):
            if self.input_pos >= len(self.inputs):
                raise _Halt(ExecStatus.RUNTIME_ERROR)
            self.find_scope(stmt.name)[stmt.name] = self.inputs[self.input_pos]
            self.input_pos += 1
        else:  # pragma: no cover
            raise TypeError(f"unknown statement {stmt!r}")

    def eval(self, expr):
        self.burn()
        if isinstance(expr, IntLit):
            return expr.value
        if isinstance(expr, BoolLit):
            return expr.value
        if isinstance(expr, Var):
            return self.find_scope(expr.name)[expr.name]
        if isinstance(expr, Unary):
            val = self.eval(expr.operand)
            return -val if expr.op == checker._MINUS else not val
        if isinstance(expr, Binary):
            left = self.eval(expr.left)
            right = self.eval(expr.right)
            return _apply(expr.op, left, right)
        raise TypeError(f"unknown expression {expr!r}")  # pragma: no cover


def _trunc_div(a: int, b: int) -> int:
    if b == 0:
        raise _Halt(ExecStatus.RUNTIME_ERROR)
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


_BINARY_FNS = {
    vocab.id_of("+"): lambda a, b: a + b,
    vocab.id_of("-"): lambda a, b: a - b,
    vocab.id_of("*"): lambda a, b: a * b,
    vocab.id_of("/"): _trunc_div,
    vocab.id_of("%"): lambda a, b: a - _trunc_div(a, b) * b,
    vocab.id_of("<"): lambda a, b: a < b,
    vocab.id_of("<="): lambda a, b: a <= b,
    vocab.id_of("=="): lambda a, b: a == b,
    vocab.id_of("!="): lambda a, b: a != b,
    vocab.id_of("&&"): lambda a, b: a and b,
    vocab.id_of("||"): lambda a, b: a or b,
}


def _apply(op: int, left, right):
    return _BINARY_FNS[op](left, right)


def execute(program: list[int], input_values, fuel: int = DEFAULT_FUEL) -> ExecResult:
    """Run a compiling program on the given input integers.

    The caller is responsible for the program passing check_program; feeding a
    non-parsing sequence is a programming error and raises ValueError.
    """
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    ast, syntax_diag = checker.parse_program(program)
    if ast is None:
        raise ValueError(f"program does not parse: {syntax_diag.message}")
    machine = _Machine(input_values, fuel)
    try:
        machine.run_body(ast.body)
        status = ExecStatus.COMPLETED
    except _Halt as halt:
        status = halt.status
    return ExecResult(status, tuple(machine.outputs), fuel - machine.fuel_left)
