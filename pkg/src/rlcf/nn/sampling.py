"""Autoregressive decoding: temperature scaling, nucleus truncation, greedy mode."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from rlcf import vocab
from rlcf.nn.models import DecodeCache, Model


class Termination(Enum):
    EOP = "eop"
    HORIZON = "horizon"


@dataclass(frozen=True)
class SampledResponse:
    tokens: tuple[int, ...]
    logprobs: tuple[float, ...]
    terminated_by: Termination


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def greedy_from_logits(logits: np.ndarray) -> tuple[int, float]:
    token = int(np.argmax(logits))
    return token, float(_log_softmax(logits)[token])


def sample_from_logits(
    logits: np.ndarray, temperature: float, top_p: float, rng: np.random.Generator
) -> tuple[int, float]:
    """Temperature-scale, truncate to the smallest nucleus with mass >= top_p,
    renormalize, sample. Returns the token and its log-probability under the
    truncated distribution (the one actually sampled from)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive; use greedy=True for argmax")
    if not 0 < top_p <= 1:
        raise ValueError("top_p must be in (0, 1]")
    scaled = logits / temperature
    probs = np.exp(_log_softmax(scaled))
    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    cumulative = np.cumsum(sorted_probs)
    cut = int(np.searchsorted(cumulative, top_p)) + 1
    kept = order[:cut]
    kept_probs = sorted_probs[:cut] / cumulative[cut - 1]
    choice = int(rng.choice(len(kept), p=kept_probs))
    return int(kept[choice]), float(np.log(kept_probs[choice]))


def sample_response(
    policy: Model,
    prompt,
    *,
    max_len: int,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    top_p: float = 1.0,
    greedy: bool = False,
) -> SampledResponse:
    """Sample y' ~ f(.|x) until the end-of-program token or the horizon."""
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    if len(prompt) + max_len > policy.config.max_seq_len:
        raise ValueError("prompt length plus horizon exceeds the model context")
    if not greedy and temperature <= 0:
        raise ValueError("temperature must be positive; use greedy=True for argmax")
    if not greedy and rng is None:
        raise ValueError("sampling needs an rng")
    cache = DecodeCache(policy)
    logits = cache.prime(list(prompt))
    tokens: list[int] = []
    logprobs: list[float] = []
    terminated = Termination.HORIZON
    for _ in range(max_len):
        if greedy:
            token, logprob = greedy_from_logits(logits)
        else:
            token, logprob = sample_from_logits(logits, temperature, top_p, rng)
        tokens.append(token)
        logprobs.append(logprob)
        if token == vocab.EOP:
            terminated = Termination.EOP
            break
        logits = cache.step(token)
    return SampledResponse(tuple(tokens), tuple(logprobs), terminated)


def greedy_decode(policy: Model, prompt, *, max_len: int) -> SampledResponse:
    return sample_response(policy, prompt, max_len=max_len, greedy=True)
