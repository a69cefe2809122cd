"""Static checker for MiniLang: recursive-descent parser, scope/type checking,
and unused-variable analysis, all with token-level error localization.

Programs are sequences of vocabulary ids. The grammar:

    program := stmt* EOP
    stmt    := "let" IDENT ":" type "=" expr ";"
             | IDENT "=" expr ";"
             | "if" expr "{" stmt* "}" [ "else" "{" stmt* "}" ]
             | "while" expr "{" stmt* "}"
             | "print" expr ";"  |  "read" IDENT ";"
    type    := "int" | "bool"
    expr    := INT | "true" | "false" | IDENT | "(" expr ")"
             | "-" expr | "!" expr | expr BINOP expr

Precedence, loosest first: ||, &&, comparisons (< <= == !=), additive,
multiplicative, unary. Every diagnostic points at the token where checking
first fails; malformed input is reported through diagnostics, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from rlcf import vocab

TokenSeq = list[int]


class DiagnosticKind(Enum):
    SYNTAX_ERROR = "SyntaxError"
    UNKNOWN_SYMBOL = "UnknownSymbol"
    TYPE_MISMATCH = "TypeMismatch"
    REDECLARATION = "Redeclaration"
    UNUSED_VARIABLE = "UnusedVariable"


ERROR_KINDS = frozenset(
    k for k in DiagnosticKind if k is not DiagnosticKind.UNUSED_VARIABLE
)


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagnosticKind
    token_index: int
    message: str


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    first_error_index: int | None
    diagnostics: tuple[Diagnostic, ...]
    unused_decl_indices: tuple[int, ...]

    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.kind in ERROR_KINDS]


# --- AST ---

INT, BOOL = "int", "bool"


@dataclass
class IntLit:
    value: int
    pos: int


@dataclass
class BoolLit:
    value: bool
    pos: int


@dataclass
class Var:
    name: int  # identifier token id
    pos: int


@dataclass
class Unary:
    op: int
    operand: object
    pos: int


@dataclass
class Binary:
    op: int
    left: object
    right: object
    pos: int  # index of the operator token


@dataclass
class Let:
    name: int
    declared_type: str
    value: object
    name_pos: int
    span: tuple[int, int] = (0, 0)


@dataclass
class Assign:
    name: int
    value: object
    name_pos: int
    span: tuple[int, int] = (0, 0)


@dataclass
class If:
    cond: object
    then_body: list
    else_body: list | None
    pos: int
    span: tuple[int, int] = (0, 0)


@dataclass
class While:
    cond: object
    body: list
    pos: int
    span: tuple[int, int] = (0, 0)


@dataclass
class Print:
    value: object
    pos: int
    span: tuple[int, int] = (0, 0)


@dataclass
class Read:
    name: int
    name_pos: int
    pos: int = 0
    span: tuple[int, int] = (0, 0)


@dataclass
class Program:
    body: list


class _SyntaxFailure(Exception):
    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index
        self.message = message


_CMP_OPS = tuple(vocab.id_of(op) for op in ("<", "<=", "==", "!="))
_ADD_OPS = tuple(vocab.id_of(op) for op in ("+", "-"))
_MUL_OPS = tuple(vocab.id_of(op) for op in ("*", "/", "%"))
_OR = vocab.id_of("||")
_AND = vocab.id_of("&&")
_NOT = vocab.id_of("!")
_MINUS = vocab.id_of("-")
_EQ_OPS = (vocab.id_of("=="), vocab.id_of("!="))

_KW = {
    name: vocab.id_of(name)
    for name in ("let", ":", "=", ";", "if", "else", "while", "print", "read",
                 "true", "false", "int", "bool", "{", "}", "(", ")")
}


class _Parser:
    def __init__(self, tokens: TokenSeq):
        self.tokens = tokens
        self.i = 0

    def _fail(self, message: str):
        # Blame the offending token; at end of input, blame the last token.
        idx = min(self.i, len(self.tokens) - 1)
        raise _SyntaxFailure(max(idx, 0), message)

    def peek(self) -> int | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self) -> int:
        tok = self.peek()
        if tok is None:
            self._fail("unexpected end of program")
        self.i += 1
        return tok

    def expect(self, lexeme: str) -> int:
        pos = self.i
        tok = self.peek()
        if tok != _KW[lexeme]:
            self._fail(f"expected '{lexeme}'")
        self.i += 1
        return pos

    def parse_program(self) -> Program:
        body = self.parse_block_body(stop_at_eop=True)
        if self.peek() != vocab.EOP:
            self._fail("expected end-of-program token")
        self.i += 1
        if self.i < len(self.tokens):
            raise _SyntaxFailure(self.i, "tokens after end-of-program")
        return Program(body)

    def parse_block_body(self, stop_at_eop: bool = False) -> list:
        stmts = []
        while True:
            tok = self.peek()
            if tok is None or tok == _KW["}"] or (stop_at_eop and tok == vocab.EOP):
                return stmts
            stmts.append(self.parse_stmt())

    def parse_stmt(self):
        start = self.i
        tok = self.peek()
        if tok == _KW["let"]:
            self.i += 1
            name_pos = self.i
            name = self.advance()
            if not vocab.is_identifier(name):
                raise _SyntaxFailure(name_pos, "expected identifier after 'let'")
            self.expect(":")
            tpos = self.i
            ttok = self.advance()
            if ttok == _KW["int"]:
                declared = INT
            elif ttok == _KW["bool"]:
                declared = BOOL
            else:
                raise _SyntaxFailure(tpos, "expected type 'int' or 'bool'")
            self.expect("=")
            value = self.parse_expr()
            self.expect(";")
            return Let(name, declared, value, name_pos, span=(start, self.i))
        if tok == _KW["if"]:
            pos = self.i
            self.i += 1
            cond = self.parse_expr()
            self.expect("{")
            then_body = self.parse_block_body()
            self.expect("}")
            else_body = None
            if self.peek() == _KW["else"]:
                self.i += 1
                self.expect("{")
                else_body = self.parse_block_body()
                self.expect("}")
            return If(cond, then_body, else_body, pos, span=(start, self.i))
        if tok == _KW["while"]:
            pos = self.i
            self.i += 1
            cond = self.parse_expr()
            self.expect("{")
            body = self.parse_block_body()
            self.expect("}")
            return While(cond, body, pos, span=(start, self.i))
        if tok == _KW["print"]:
            pos = self.i
            self.i += 1
            value = self.parse_expr()
            self.expect(";")
            return Print(value, pos, span=(start, self.i))
        if tok == _KW["read"]:
            pos = self.i
            self.i += 1
            name_pos = self.i
            name = self.advance()
            if not vocab.is_identifier(name):
                raise _SyntaxFailure(name_pos, "expected identifier after 'read'")
            self.expect(";")
            return Read(name, name_pos, pos, span=(start, self.i))
        if tok is not None and vocab.is_identifier(tok):
            name_pos = self.i
            name = self.advance()
            self.expect("=")
            value = self.parse_expr()
            self.expect(";")
            return Assign(name, value, name_pos, span=(start, self.i))
        self._fail("expected a statement")

    # Expression levels, loosest binding first.
    def parse_expr(self):
        return self._binary_level(0)

    _LEVELS = ((_OR,), (_AND,), _CMP_OPS, _ADD_OPS, _MUL_OPS)

    def _binary_level(self, level: int):
        if level == len(self._LEVELS):
            return self.parse_unary()
        left = self._binary_level(level + 1)
        while self.peek() in self._LEVELS[level]:
            op_pos = self.i
            op = self.advance()
            right = self._binary_level(level + 1)
            left = Binary(op, left, right, op_pos)
        return left

    def parse_unary(self):
        tok = self.peek()
        if tok == _MINUS or tok == _NOT:
            pos = self.i
            self.i += 1
            return Unary(tok, self.parse_unary(), pos)
        return self.parse_atom()

    def parse_atom(self):
        pos = self.i
        tok = self.peek()
        if tok is None:
            self._fail("expected an expression")
        value = vocab.token_int(tok)
        if value is not None:
            self.i += 1
            return IntLit(value, pos)
        if tok == _KW["true"]:
            self.i += 1
            return BoolLit(True, pos)
        if tok == _KW["false"]:
            self.i += 1
            return BoolLit(False, pos)
        if vocab.is_identifier(tok):
            self.i += 1
            return Var(tok, pos)
        if tok == _KW["("]:
            self.i += 1
            inner = self.parse_expr()
            self.expect(")")
            return inner
        self._fail("expected an expression")


def parse_program(tokens: TokenSeq) -> tuple[Program | None, Diagnostic | None]:
    """Parse a full program. Returns (ast, None) or (None, syntax diagnostic)."""
    if not tokens:
        return None, Diagnostic(DiagnosticKind.SYNTAX_ERROR, 0, "empty program")
    try:
        return _Parser(list(tokens)).parse_program(), None
    except _SyntaxFailure as exc:
        return None, Diagnostic(DiagnosticKind.SYNTAX_ERROR, exc.index, exc.message)


# --- semantic checking ---


@dataclass
class _Decl:
    type: str
    pos: int
    used: bool = False


class _Checker:
    def __init__(self):
        self.scopes: list[dict[int, _Decl]] = [{}]
        self.diagnostics: list[Diagnostic] = []
        self.unused: list[int] = []

    def report(self, kind: DiagnosticKind, pos: int, message: str):
        self.diagnostics.append(Diagnostic(kind, pos, message))

    def lookup(self, name: int) -> _Decl | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def push(self):
        self.scopes.append({})

    def pop(self):
        for decl in self.scopes.pop().values():
            if not decl.used:
                self.unused.append(decl.pos)

    def check_program(self, program: Program):
        self.check_body(program.body)
        self.pop()
        self.unused.sort()
        for pos in self.unused:
            self.report(DiagnosticKind.UNUSED_VARIABLE, pos,
                        "variable is never read")

    def check_body(self, body: list):
        for stmt in body:
            self.check_stmt(stmt)

    def check_stmt(self, stmt):
        if isinstance(stmt, Let):
            value_type = self.check_expr(stmt.value)
            if stmt.name in self.scopes[-1]:
                self.report(DiagnosticKind.REDECLARATION, stmt.name_pos,
                            f"'{vocab.lexeme(stmt.name)}' already declared in this scope")
            else:
                self.scopes[-1][stmt.name] = _Decl(stmt.declared_type, stmt.name_pos)
            if value_type != stmt.declared_type:
                self.report(DiagnosticKind.TYPE_MISMATCH, _expr_start(stmt.value),
                            f"initializer is {value_type}, expected {stmt.declared_type}")
        elif isinstance(stmt, Assign):
            decl = self.lookup(stmt.name)
            if decl is None:
                self.report(DiagnosticKind.UNKNOWN_SYMBOL, stmt.name_pos,
                            f"'{vocab.lexeme(stmt.name)}' is not declared")
            value_type = self.check_expr(stmt.value)
            if decl is not None and value_type != decl.type:
                self.report(DiagnosticKind.TYPE_MISMATCH, _expr_start(stmt.value),
                            f"assigning {value_type} to {decl.type} variable")
        elif isinstance(stmt, If):
            if self.check_expr(stmt.cond) != BOOL:
                self.report(DiagnosticKind.TYPE_MISMATCH, _expr_start(stmt.cond),
                            "condition must be bool")
            self.push()
            self.check_body(stmt.then_body)
            self.pop()
            if stmt.else_body is not None:
                self.push()
                self.check_body(stmt.else_body)
                self.pop()
        elif isinstance(stmt, While):
            if self.check_expr(stmt.cond) != BOOL:
                self.report(DiagnosticKind.TYPE_MISMATCH, _expr_start(stmt.cond),
                            "condition must be bool")
            self.push()
            self.check_body(stmt.body)
            self.pop()
        elif isinstance(stmt, Print):
            if self.check_expr(stmt.value) != INT:
                self.report(DiagnosticKind.TYPE_MISMATCH, _expr_start(stmt.value),
                            "print takes an int")
        elif isinstance(stmt, Read):
            decl = self.lookup(stmt.name)
            if decl is None:
                self.report(DiagnosticKind.UNKNOWN_SYMBOL, stmt.name_pos,
                            f"'{vocab.lexeme(stmt.name)}' is not declared")
            elif decl.type != INT:
                self.report(DiagnosticKind.TYPE_MISMATCH, stmt.name_pos,
                            "read target must be int")
        else:  # pragma: no cover - parser produces no other nodes
            raise TypeError(f"unknown statement {stmt!r}")

    def check_expr(self, expr) -> str:
        # Unknown symbols and operand mismatches recover as int so checking
        # can continue past the first semantic error.
        if isinstance(expr, IntLit):
            return INT
        if isinstance(expr, BoolLit):
            return BOOL
        if isinstance(expr, Var):
            decl = self.lookup(expr.name)
            if decl is None:
                self.report(DiagnosticKind.UNKNOWN_SYMBOL, expr.pos,
                            f"'{vocab.lexeme(expr.name)}' is not declared")
                return INT
            decl.used = True
            return decl.type
        if isinstance(expr, Unary):
            operand = self.check_expr(expr.operand)
            if expr.op == _MINUS:
                if operand != INT:
                    self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                                "unary '-' takes an int")
                return INT
            if operand != BOOL:
                self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                            "'!' takes a bool")
            return BOOL
        if isinstance(expr, Binary):
            left = self.check_expr(expr.left)
            right = self.check_expr(expr.right)
            op = expr.op
            if op in _MUL_OPS or op in _ADD_OPS:
                if left != INT or right != INT:
                    self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                                "arithmetic takes int operands")
                return INT
            if op in _EQ_OPS:
                if left != right:
                    self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                                "comparison operands must have the same type")
                return BOOL
            if op in _CMP_OPS:
                if left != INT or right != INT:
                    self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                                "ordering takes int operands")
                return BOOL
            # && and ||
            if left != BOOL or right != BOOL:
                self.report(DiagnosticKind.TYPE_MISMATCH, expr.pos,
                            "logical operator takes bool operands")
            return BOOL
        raise TypeError(f"unknown expression {expr!r}")  # pragma: no cover


def _expr_start(expr) -> int:
    while isinstance(expr, (Unary, Binary)):
        if isinstance(expr, Unary):
            return expr.pos
        expr = expr.left
    return expr.pos


def check_program(tokens: TokenSeq) -> CompileResult:
    """Check a standalone token sequence. Diagnostics index into `tokens`."""
    ast, syntax_diag = parse_program(tokens)
    if ast is None:
        return CompileResult(False, syntax_diag.token_index, (syntax_diag,), ())
    checker = _Checker()
    checker.check_program(ast)
    diagnostics = sorted(checker.diagnostics, key=lambda d: d.token_index)
    error_indices = [d.token_index for d in diagnostics if d.kind in ERROR_KINDS]
    first = min(error_indices) if error_indices else None
    return CompileResult(
        ok=first is None,
        first_error_index=first,
        diagnostics=tuple(diagnostics),
        unused_decl_indices=tuple(checker.unused),
    )


def prompt_code(prompt: TokenSeq) -> list[int]:
    """Code portion of a prompt: descriptor block and hole marker stripped."""
    out = []
    in_desc = False
    for tok in prompt:
        if tok == vocab.DESC_OPEN:
            in_desc = True
        elif tok == vocab.DESC_CLOSE:
            in_desc = False
        elif not in_desc and tok != vocab.HOLE:
            out.append(tok)
    return out


def compile_check(prompt: TokenSeq, response: TokenSeq) -> CompileResult:
    """Check the program formed by the prompt's code portion plus the response.

    Diagnostic indices refer to the checked sequence, i.e. the concatenation of
    the stripped prompt code and the response. Pure and deterministic.
    """
    return check_program(prompt_code(prompt) + list(response))
