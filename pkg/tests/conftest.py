import numpy as np
import pytest

from rlcf import vocab
from rlcf.nn.models import ModelConfig, init_discriminator, init_lm


def micro_config(**kw):
    base = dict(vocab_size=9, d_model=8, n_layers=1, n_heads=2, max_seq_len=24)
    base.update(kw)
    return ModelConfig(**base)


def small_config(**kw):
    base = dict(vocab_size=vocab.VOCAB_SIZE, d_model=16, n_layers=1, n_heads=2,
                max_seq_len=160)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_lm(rng):
    return init_lm(micro_config(), rng)


@pytest.fixture
def small_lm(rng):
    return init_lm(small_config(), rng)


@pytest.fixture
def small_disc(rng):
    return init_discriminator(small_config(), rng)
