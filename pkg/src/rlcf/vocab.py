"""Fixed token vocabulary shared by the language, the models, and the datasets.

Every program, prompt and response in the system is a sequence of ids over this
table. The manifest (id <-> lexeme, with a version header) is the bit-exact
contract: datasets record its hash and checkpoints refuse to load against a
different vocabulary.
"""

from __future__ import annotations

import hashlib

VOCAB_VERSION = "minilang-vocab-1"

_SPECIALS = ["<pad>", "<eop>", "<cls>", "<desc>", "</desc>", "<hole>"]
_KEYWORDS = [
    "let", ":", "=", ";", "if", "else", "while", "print", "read",
    "true", "false", "int", "bool", "{", "}", "(", ")",
]
_OPERATORS = ["+", "-", "*", "/", "%", "<", "<=", "==", "!=", "&&", "||", "!"]
_INT_LITERALS = [str(i) for i in range(21)]
_IDENTIFIERS = ["a", "b", "c", "d", "e", "i", "j", "k", "m", "n", "s", "x"]
_FAMILY_TAGS = ["sum", "max", "threshold", "count", "linear"]
_PARAM_KEYS = ["n=", "c=", "t=", "d=", "m=", "s=", "a=", "b="]

LEXEMES: tuple[str, ...] = tuple(
    _SPECIALS + _KEYWORDS + _OPERATORS + _INT_LITERALS
    + _IDENTIFIERS + _FAMILY_TAGS + _PARAM_KEYS
)
VOCAB_SIZE = len(LEXEMES)

_ID_OF = {lex: i for i, lex in enumerate(LEXEMES)}
assert len(_ID_OF) == VOCAB_SIZE, "lexemes must be unique"
assert VOCAB_SIZE <= 96

PAD = _ID_OF["<pad>"]
EOP = _ID_OF["<eop>"]
CLS = _ID_OF["<cls>"]
DESC_OPEN = _ID_OF["<desc>"]
DESC_CLOSE = _ID_OF["</desc>"]
HOLE = _ID_OF["<hole>"]

INT_BASE = _ID_OF["0"]
MAX_INT_LITERAL = 20
IDENT_IDS = frozenset(_ID_OF[name] for name in _IDENTIFIERS)
IDENT_NAMES = tuple(_IDENTIFIERS)
FAMILY_TAG_IDS = frozenset(_ID_OF[t] for t in _FAMILY_TAGS)
PARAM_KEY_IDS = frozenset(_ID_OF[p] for p in _PARAM_KEYS)
SPECIAL_IDS = frozenset(range(len(_SPECIALS)))


def id_of(lexeme: str) -> int:
    return _ID_OF[lexeme]


def lexeme(token_id: int) -> str:
    return LEXEMES[token_id]


def int_token(value: int) -> int:
    """Id of an integer literal token. Only 0..20 exist as single tokens."""
    if not 0 <= value <= MAX_INT_LITERAL:
        raise ValueError(f"no literal token for {value}")
    return INT_BASE + value


def token_int(token_id: int) -> int | None:
    """Integer value of a literal token, or None."""
    if INT_BASE <= token_id <= INT_BASE + MAX_INT_LITERAL:
        return token_id - INT_BASE
    return None


def is_identifier(token_id: int) -> bool:
    return token_id in IDENT_IDS


def encode(text: str) -> list[int]:
    """Encode whitespace-separated lexemes to ids."""
    return [_ID_OF[part] for part in text.split()]


def decode(ids: list[int] | tuple[int, ...]) -> str:
    return " ".join(LEXEMES[i] for i in ids)


def manifest_text() -> str:
    lines = [f"# vocabulary {VOCAB_VERSION}"]
    lines += [f"{i}\t{lex}" for i, lex in enumerate(LEXEMES)]
    return "\n".join(lines) + "\n"


def vocab_hash() -> str:
    return hashlib.sha256(manifest_text().encode("utf-8")).hexdigest()


def write_manifest(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(manifest_text())


def read_manifest(path) -> list[str]:
    """Read a manifest file and verify it against the built-in table."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# vocabulary "):
        raise ValueError("missing vocabulary version header")
    version = lines[0][len("# vocabulary "):]
    if version != VOCAB_VERSION:
        raise ValueError(f"vocabulary version mismatch: {version!r} != {VOCAB_VERSION!r}")
    table = []
    for line in lines[1:]:
        idx, lex = line.split("\t")
        table.append((int(idx), lex))
    lexemes = [lex for _, lex in sorted(table)]
    if tuple(lexemes) != LEXEMES:
        raise ValueError("vocabulary table does not match this build")
    return lexemes
