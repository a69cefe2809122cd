import pytest

from rlcf import vocab


def test_reserved_tokens_distinct():
    ids = {vocab.PAD, vocab.EOP, vocab.CLS, vocab.DESC_OPEN, vocab.DESC_CLOSE, vocab.HOLE}
    assert len(ids) == 6
    assert vocab.VOCAB_SIZE <= 96


def test_encode_decode_roundtrip():
    text = "let a : int = 20 ; print a ; <eop>"
    ids = vocab.encode(text)
    assert vocab.decode(ids) == text
    assert all(i < vocab.VOCAB_SIZE for i in ids)


def test_every_id_has_unique_lexeme():
    lexemes = [vocab.lexeme(i) for i in range(vocab.VOCAB_SIZE)]
    assert len(set(lexemes)) == vocab.VOCAB_SIZE


def test_int_tokens():
    assert vocab.token_int(vocab.int_token(0)) == 0
    assert vocab.token_int(vocab.int_token(20)) == 20
    assert vocab.token_int(vocab.EOP) is None
    with pytest.raises(ValueError):
        vocab.int_token(21)


def test_manifest_roundtrip(tmp_path):
    path = tmp_path / "vocab.tsv"
    vocab.write_manifest(path)
    assert vocab.read_manifest(path) == list(vocab.LEXEMES)
    text = path.read_text()
    assert text.startswith("# vocabulary ")
    assert vocab.vocab_hash() == vocab.vocab_hash()


def test_manifest_rejects_tampering(tmp_path):
    path = tmp_path / "vocab.tsv"
    vocab.write_manifest(path)
    body = path.read_text().replace("\tlet\n", "\tlett\n")
    path.write_text(body)
    with pytest.raises(ValueError):
        vocab.read_manifest(path)
