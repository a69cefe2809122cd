import pytest

from rlcf import vocab
from rlcf.lang.interpreter import ExecStatus, execute


def run(text, inputs=(), fuel=10_000):
    return execute(vocab.encode(text), list(inputs), fuel)


def test_constant_arithmetic():
    result = run("print 1 + 2 ; <eop>")
    assert result.status is ExecStatus.COMPLETED
    assert result.outputs == (3,)


def test_unbounded_loop_exhausts_fuel():
    result = run("while true { } <eop>")
    assert result.status is ExecStatus.FUEL_EXHAUSTED
    assert result.fuel_used == 10_000


def test_read_two_and_sum():
    result = run("let a : int = 0 ; read a ; let b : int = 0 ; read b ; print a + b ; <eop>",
                 [2, 3])
    assert result.status is ExecStatus.COMPLETED
    assert result.outputs == (5,)


def test_missing_input_is_runtime_error():
    result = run("let a : int = 0 ; read a ; <eop>", [])
    assert result.status is ExecStatus.RUNTIME_ERROR


def test_division_and_modulo_by_zero():
    assert run("print 1 / 0 ; <eop>").status is ExecStatus.RUNTIME_ERROR
    assert run("print 1 % 0 ; <eop>").status is ExecStatus.RUNTIME_ERROR


def test_truncating_division():
    assert run("print 7 / 2 ; <eop>").outputs == (3,)
    assert run("print 0 - 7 / 2 ; <eop>").outputs == (-3,)  # -(7/2) with unary binding
    assert run("print ( 0 - 7 ) / 2 ; <eop>").outputs == (-3,)
    assert run("print ( 0 - 7 ) % 2 ; <eop>").outputs == (-1,)


def test_while_countdown():
    result = run("let x : int = 5 ; while 0 < x { print x ; x = x - 2 ; } <eop>")
    assert result.outputs == (5, 3, 1)


def test_if_else_branching():
    text = "let x : int = 0 ; read x ; if x <= 10 { print 1 ; } else { print 0 ; } <eop>"
    assert run(text, [4]).outputs == (1,)
    assert run(text, [11]).outputs == (0,)


def test_strict_boolean_operands():
    # both operands evaluate: a division by zero on the right is an error even
    # when the left side already decides the value
    result = run("let b : bool = false && 1 / 0 == 1 ; print 0 ; <eop>")
    assert result.status is ExecStatus.RUNTIME_ERROR


def test_determinism_and_fuel_accounting():
    a = run("print 1 + 2 ; <eop>")
    b = run("print 1 + 2 ; <eop>")
    assert a == b
    assert a.fuel_used == 4  # print stmt + binary + two literals


def test_completed_within_fuel_limit():
    result = run("print 1 ; <eop>", fuel=2)
    assert result.status is ExecStatus.COMPLETED
    assert result.fuel_used <= 2


def test_rejects_nonparsing_program():
    with pytest.raises(ValueError):
        execute(vocab.encode("let ; <eop>"), [])
    with pytest.raises(ValueError):
        execute(vocab.encode("print 1 ; <eop>"), [], fuel=0)
