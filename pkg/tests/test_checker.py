import numpy as np
import pytest

from rlcf import vocab
from rlcf.lang.checker import (
    DiagnosticKind, check_program, compile_check, prompt_code,
)


def check(text):
    return check_program(vocab.encode(text))


def test_minimal_valid_program():
    result = check("let a : int = 1 ; print a ; <eop>")
    assert result.ok
    assert result.first_error_index is None
    assert result.diagnostics == ()


def test_unknown_symbol_localized():
    # 4-token program: print b ; <eop>, error at the index of b
    result = check("print b ; <eop>")
    assert not result.ok
    assert result.first_error_index == 1
    assert result.diagnostics[0].kind is DiagnosticKind.UNKNOWN_SYMBOL


def test_unused_declaration_is_warning_not_error():
    result = check("let a : int = 1 ; <eop>")
    assert result.ok
    assert result.unused_decl_indices == (1,)
    kinds = [d.kind for d in result.diagnostics]
    assert kinds == [DiagnosticKind.UNUSED_VARIABLE]


def test_variable_read_in_branch_not_flagged():
    result = check("let a : int = 1 ; if true { print a ; } <eop>")
    assert result.ok
    assert result.unused_decl_indices == ()


def test_write_only_variable_flagged_once():
    result = check("let a : int = 0 ; read a ; a = 3 ; <eop>")
    assert result.ok
    assert result.unused_decl_indices == (1,)
    unused = [d for d in result.diagnostics if d.kind is DiagnosticKind.UNUSED_VARIABLE]
    assert len(unused) == 1


def test_type_mismatch():
    result = check("let a : int = true ; print a ; <eop>")
    assert not result.ok
    assert any(d.kind is DiagnosticKind.TYPE_MISMATCH for d in result.diagnostics)


def test_condition_must_be_bool():
    result = check("if 3 { } <eop>")
    assert not result.ok
    assert result.diagnostics[0].kind is DiagnosticKind.TYPE_MISMATCH
    assert result.first_error_index == 1


def test_redeclaration_same_scope():
    result = check("let a : int = 1 ; let a : int = 2 ; print a ; <eop>")
    assert not result.ok
    assert any(d.kind is DiagnosticKind.REDECLARATION for d in result.diagnostics)


def test_shadowing_in_inner_scope_allowed():
    result = check(
        "let a : int = 1 ; if true { let a : bool = false ; print 1 ; } print a ; <eop>"
    )
    errors = [d for d in result.diagnostics if d.kind is not DiagnosticKind.UNUSED_VARIABLE]
    assert result.ok, errors
    # inner shadow is never read
    assert len(result.unused_decl_indices) == 1


def test_eop_required_and_final():
    result = check("print 1 ;")
    assert not result.ok
    assert result.diagnostics[0].kind is DiagnosticKind.SYNTAX_ERROR
    result = check("<eop> print 1 ;")
    assert not result.ok
    assert result.first_error_index == 1  # first token after the end marker

    result = check("if true { <eop> } <eop>")
    assert not result.ok


def test_operator_precedence_and_types():
    assert check("print 1 + 2 * 3 ; <eop>").ok
    assert check("let b : bool = 1 < 2 && 3 <= 4 ; print 1 ; <eop>").ok
    assert check("let b : bool = true == false ; print 0 ; <eop>").ok
    assert not check("print true + 1 ; <eop>").ok
    assert not check("let b : bool = 1 && 2 ; <eop>").ok


def test_multiple_semantic_errors_reported():
    result = check("print b ; print c ; <eop>")
    assert not result.ok
    unknown = [d for d in result.diagnostics if d.kind is DiagnosticKind.UNKNOWN_SYMBOL]
    assert len(unknown) == 2
    assert result.first_error_index == min(d.token_index for d in unknown)


def test_determinism():
    tokens = vocab.encode("let a : int = 1 ; print b ; <eop>")
    assert check_program(tokens) == check_program(tokens)


def test_prompt_code_strips_descriptor_and_hole():
    prompt = vocab.encode("<desc> sum n= 2 c= 0 </desc> let a : int = 1 ; <hole>")
    code = prompt_code(prompt)
    assert vocab.decode(code) == "let a : int = 1 ;"


def test_compile_check_concatenates():
    prompt = vocab.encode("<desc> sum n= 2 c= 0 </desc> let a : int = 1 ; <hole>")
    result = compile_check(prompt, vocab.encode("print a ; <eop>"))
    assert result.ok
    # error index is relative to the checked sequence (starter + response)
    result = compile_check(prompt, vocab.encode("print b ; <eop>"))
    assert not result.ok
    assert result.first_error_index == 8  # 7 starter tokens, then 'print', 'b'


def _random_program_tokens(rng):
    """Random token soup biased toward code tokens; mostly non-compiling."""
    pool = [i for i in range(vocab.VOCAB_SIZE)
            if i not in (vocab.PAD, vocab.CLS, vocab.DESC_OPEN, vocab.DESC_CLOSE, vocab.HOLE)]
    n = int(rng.integers(1, 30))
    toks = [int(pool[rng.integers(0, len(pool))]) for _ in range(n)]
    return toks


def test_localization_soundness_fuzz():
    """Re-checking any prefix cut strictly after the first error never moves an
    error-class diagnostic before the original index."""
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(500):
        tokens = _random_program_tokens(rng)
        result = check_program(tokens)
        if result.ok:
            continue
        e = result.first_error_index
        checked += 1
        for cut in range(e, len(tokens)):
            prefix = tokens[:cut + 1]
            again = check_program(prefix)
            if not again.ok:
                assert again.first_error_index >= e, (tokens, e, cut)
    assert checked > 300  # the fuzz actually exercised non-compiling programs
