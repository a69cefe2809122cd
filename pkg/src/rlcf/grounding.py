"""Reward oracle coordinating the static checker with the learned comparator,
rollout production with error-localized truncation, and per-token reward
assembly.

Compile/no-compile asymmetry decides the outcome at +/-1 before the comparator
network is ever consulted; only when both candidates compile does the
tanh-difference score decide. A non-compiling rollout is truncated at the
blamed token (inclusive) and handed a terminal reward of -1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from rlcf.lang.checker import CompileResult, compile_check, prompt_code
from rlcf.nn.models import Model, np_discriminator_score, np_sequence_log_probs
from rlcf.nn.sampling import SampledResponse, sample_response

log = logging.getLogger(__name__)


class GroundingSource(Enum):
    COMPILER_RULE = "compiler_rule"
    DISCRIMINATOR = "discriminator"
    DEGENERATE = "degenerate"


class GroundingMode(Enum):
    FULL = "full"
    DISC_ONLY = "disc-only"
    COMPILER_ONLY = "compiler-only"


@dataclass(frozen=True)
class GroundingOutcome:
    score: float
    source: GroundingSource
    details: tuple[CompileResult, CompileResult] | None = None


def ground(x, y0, y1, disc: Model) -> GroundingOutcome:
    """Score which of two candidate responses belongs with the prompt.

    +1 means y0 wins, -1 means y1 wins. If exactly one candidate compiles the
    checker decides outright; the comparator is only evaluated when both
    compile. When neither compiles the outcome is a defined 0 (the training
    loop never reaches this branch because references always compile).
    """
    r0 = compile_check(list(x), list(y0))
    r1 = compile_check(list(x), list(y1))
    details = (r0, r1)
    if r0.ok and not r1.ok:
        return GroundingOutcome(1.0, GroundingSource.COMPILER_RULE, details)
    if r1.ok and not r0.ok:
        return GroundingOutcome(-1.0, GroundingSource.COMPILER_RULE, details)
    if not r0.ok and not r1.ok:
        log.warning("grounding called with two non-compiling candidates")
        return GroundingOutcome(0.0, GroundingSource.DEGENERATE, details)
    score = np_discriminator_score(disc, list(x), list(y0), list(y1))
    return GroundingOutcome(float(score), GroundingSource.DISCRIMINATOR, details)


class CorpusError(RuntimeError):
    """A corpus reference failed to compile; the dataset is corrupt."""


@dataclass
class Rollout:
    prompt: tuple[int, ...]
    tokens: tuple[int, ...]            # possibly truncated at the blamed token
    full_tokens: tuple[int, ...]       # as sampled, before truncation
    reward: float
    truncated: bool
    error_index: int | None            # response-relative blamed token index
    compile_result: CompileResult
    unused_decl_indices: tuple[int, ...]
    sample_logprobs: tuple[float, ...]


def rollout_trajectory(
    x,
    y,
    policy: Model,
    disc: Model | None,
    *,
    horizon: int,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    top_p: float = 1.0,
    mode: GroundingMode = GroundingMode.FULL,
    sample_fn=None,
) -> Rollout:
    """Sample a response and score it: the comparator's value if it compiles,
    else -1 with the response truncated just past the first blamed token.

    `sample_fn(prompt)` may replace the policy sampler (stub policies in tests).
    A response that hits the horizon without EOP is checked as-is.
    """
    prompt = tuple(x)
    if not compile_check(list(x), list(y)).ok:
        raise CorpusError("reference response does not compile with its prompt")
    if sample_fn is not None:
        sampled = sample_fn(prompt)
        if not isinstance(sampled, SampledResponse):
            sampled = SampledResponse(tuple(sampled), (0.0,) * len(sampled), None)
    else:
        sampled = sample_response(
            policy, prompt, max_len=horizon, rng=rng,
            temperature=temperature, top_p=top_p,
        )
    full = tuple(sampled.tokens)
    result = compile_check(list(x), list(full))
    starter_len = len(prompt_code(list(x)))

    if mode is GroundingMode.DISC_ONLY:
        reward = np_discriminator_score(disc, list(x), list(full), list(y))
        return Rollout(prompt, full, full, float(reward), False, None, result,
                       (), sampled.logprobs)

    if result.ok:
        if mode is GroundingMode.COMPILER_ONLY:
            reward = 1.0
        else:
            reward = float(np_discriminator_score(disc, list(x), list(full), list(y)))
        unused = tuple(
            i - starter_len for i in result.unused_decl_indices if i >= starter_len
        )
        return Rollout(prompt, full, full, reward, False, None, result,
                       unused, sampled.logprobs)

    error_index = result.first_error_index - starter_len
    if error_index < 0:
        raise CorpusError("compile error located inside the prompt's starter code")
    tokens = full[:error_index + 1]
    return Rollout(prompt, tokens, full, -1.0, True, error_index, result,
                   (), sampled.logprobs[:error_index + 1])


@dataclass
class Trajectory:
    prompt: tuple[int, ...]
    tokens: tuple[int, ...]
    old_logprobs: np.ndarray
    truncated: bool
    unused_decl_indices: tuple[int, ...]
    terminal_reward: float = 0.0
    rewards: np.ndarray | None = None
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    ref_logprobs: np.ndarray | None = None
    full_tokens: tuple[int, ...] = ()
    reference_tokens: tuple[int, ...] = ()
    compiled: bool = False


def make_trajectory(rollout: Rollout, policy: Model,
                    reference_tokens: tuple[int, ...] = ()) -> Trajectory:
    """Attach the rollout policy's own (full-distribution) log-probs; these are
    the 'old' side of the update ratio."""
    old = np_sequence_log_probs(policy, list(rollout.prompt), list(rollout.tokens))
    return Trajectory(
        prompt=rollout.prompt,
        tokens=rollout.tokens,
        old_logprobs=old,
        truncated=rollout.truncated,
        unused_decl_indices=rollout.unused_decl_indices,
        terminal_reward=rollout.reward,
        full_tokens=rollout.full_tokens,
        reference_tokens=tuple(reference_tokens),
        compiled=rollout.compile_result.ok,
    )


def assemble_rewards(
    traj: Trajectory,
    terminal_reward: float,
    new_logprobs: np.ndarray,
    ref_logprobs: np.ndarray,
    beta: float,
    unused_penalty: float,
) -> Trajectory:
    """Per-token rewards: the policy-drift penalty -beta*(log f' - log f) at
    every step, the grounding reward added at the last token, and the
    unused-declaration penalty at each flagged declaration."""
    n = len(traj.tokens)
    new_logprobs = np.asarray(new_logprobs, dtype=np.float64)
    ref_logprobs = np.asarray(ref_logprobs, dtype=np.float64)
    if len(new_logprobs) != n or len(ref_logprobs) != n:
        raise ValueError("log-prob lists must align with the trajectory tokens")
    rewards = -beta * (new_logprobs - ref_logprobs)
    rewards[-1] += terminal_reward
    for idx in traj.unused_decl_indices:
        rewards[idx] -= unused_penalty
    traj.rewards = rewards
    traj.terminal_reward = float(terminal_reward)
    return traj
