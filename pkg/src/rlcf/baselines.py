"""Ablation baselines: plain supervised continuation (mono), token-wise
bipolar ramp with checker-localized penalties, and an actor-critic variant
rewarded on compilation alone."""

from __future__ import annotations

import numpy as np

from rlcf.lang.checker import compile_check, prompt_code
from rlcf.nn import autodiff as ad
from rlcf.nn.autodiff import Tensor
from rlcf.nn.models import (
    Model, hidden_states, np_sequence_log_probs, sequence_log_probs, token_scores,
)
from rlcf.nn.optim import TrainingError, optimizer_step
from rlcf.nn.sampling import greedy_decode, sample_response
from rlcf.tasks import TaskSample
from rlcf.training import _supervised_steps


def train_mono(
    policy: Model,
    corpus: list[TaskSample],
    episodes: int,
    lr: float,
    *,
    batch_size: int = 8,
    corpus_rng: np.random.Generator | None = None,
    metrics_cb=None,
) -> Model:
    """Supervised cross-entropy for the same sample budget as an RL run; with
    no corpus_rng the corpus is consumed cyclically in order, which makes the
    procedure identical to the bootstrap pass."""
    if episodes == 0 or not corpus:
        return policy
    if corpus_rng is not None:
        indices = [int(corpus_rng.integers(0, len(corpus))) for _ in range(episodes)]
    else:
        indices = [i % len(corpus) for i in range(episodes)]
    seq = [corpus[i] for i in indices]

    def cb(record):
        if metrics_cb is not None:
            consumed = min((record["step"] + 1) * batch_size, episodes)
            metrics_cb(_baseline_record(consumed, policy_loss=record["loss"]))

    return _supervised_steps(policy, seq, lr, batch_size, cb)


def _baseline_record(episode: int, *, mean_reward=float("nan"),
                     compile_rate=float("nan"), policy_loss=float("nan"),
                     value_loss=float("nan")) -> dict:
    return {
        "episode": episode,
        "mean_reward": mean_reward,
        "compile_rate": compile_rate,
        "mean_kl": float("nan"),
        "beta": float("nan"),
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "disc_loss": float("nan"),
    }


def _failure_index(prompt, response) -> int | None:
    """Response-relative index of the first blamed token, or None if it compiles."""
    result = compile_check(list(prompt), list(response))
    if result.ok:
        return None
    idx = result.first_error_index - len(prompt_code(list(prompt)))
    if idx < 0:
        raise ValueError("compile error inside the prompt's starter code")
    return idx


def train_bipolar_ramp(
    policy: Model,
    corpus: list[TaskSample],
    episodes: int,
    lr: float,
    *,
    batch_size: int = 8,
    horizon: int = 64,
    temperature: float = 1.0,
    top_p: float = 0.95,
    corpus_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
    metrics_cb=None,
) -> Model:
    """Raise reference likelihood at every token; lower the sampled response's
    likelihood at the single checker-blamed token. A sampled response that
    compiles contributes only the reference term.

    The penalizing sign is used for the negative weight: descent on the loss
    must reduce the blamed token's probability.
    """
    total_steps = (episodes + batch_size - 1) // batch_size
    step = 0
    done = 0
    while done < episodes:
        batch_n = min(batch_size, episodes - done)
        policy.zero_grad()
        total = None
        n_pos_tokens = 0
        n_failures = 0
        for _ in range(batch_n):
            sample = corpus[int(corpus_rng.integers(0, len(corpus)))]
            sampled = sample_response(
                policy, list(sample.prompt), max_len=horizon, rng=rollout_rng,
                temperature=temperature, top_p=top_p,
            )
            pos_lp = sequence_log_probs(policy, list(sample.prompt), list(sample.reference))
            term = ad.mul(ad.sum_(pos_lp), -1.0)
            n_pos_tokens += len(sample.reference)
            fail = _failure_index(sample.prompt, sampled.tokens)
            if fail is not None:
                n_failures += 1
                neg_lp = sequence_log_probs(
                    policy, list(sample.prompt), list(sampled.tokens[:fail + 1])
                )
                blamed = ad.reshape(ad.take_rows(neg_lp, np.array([fail])), ())
                term = ad.add(term, blamed)
            total = term if total is None else ad.add(total, term)
        loss = ad.mul(total, 1.0 / n_pos_tokens)
        if not np.isfinite(loss.data):
            raise TrainingError("non-finite ramp loss")
        loss.backward()
        optimizer_step(policy, lr, step, total_steps)
        done += batch_n
        if metrics_cb is not None:
            record = _baseline_record(done, policy_loss=float(loss.data),
                                      compile_rate=1.0 - n_failures / batch_n)
            metrics_cb(record)
        step += 1
    return policy


# --- compile-classifier actor-critic baseline ---


def init_compile_critic(policy: Model, rng) -> Model:
    """Classifier over responses: shared body, scalar head; max-pooled hidden
    states give the response-level compile probability, the same head applied
    positionwise gives per-token probabilities."""
    from rlcf.nn.models import init_critic

    return init_critic(policy, rng)


def compile_logit(critic: Model, prompt, response) -> Tensor:
    ids = list(prompt) + list(response)
    h = hidden_states(critic, ids)
    rows = np.arange(len(prompt), len(ids))
    states = ad.take_rows(h, rows)
    pooled = ad.max_(states, axis=0)
    out = ad.add(ad.matmul(ad.reshape(pooled, (1, -1)), critic.params["w_head"]),
                 critic.params["b_head"])
    return ad.reshape(out, ())


def compile_probability(critic: Model, prompt, response) -> float:
    with ad.no_grad():
        return float(ad.sigmoid(compile_logit(critic, prompt, response)).data)


def token_returns(critic: Model, prompt, response, compiled: bool) -> np.ndarray:
    """Per-token intermediate returns in (0, 1): p_t if the response compiles,
    1 - p_t otherwise."""
    with ad.no_grad():
        scores = token_scores(critic, list(prompt), list(response))
        p = 1.0 / (1.0 + np.exp(-scores.data))
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return p if compiled else 1.0 - p


def pretrain_compile_critic(
    critic: Model,
    policy: Model,
    corpus: list[TaskSample],
    n_samples: int,
    *,
    lr: float = 3e-4,
    epochs: int = 2,
    batch_size: int = 8,
    horizon: int = 64,
    temperature: float = 0.6,
    top_p: float = 0.95,
    corpus_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
    metrics_cb=None,
    labeled: list[tuple[tuple, tuple, bool]] | None = None,
) -> Model:
    """Fit the compile/no-compile classifier on policy samples (or a provided
    labeled set) with binary cross-entropy on the pooled output."""
    if labeled is None:
        labeled = []
        for _ in range(n_samples):
            sample = corpus[int(corpus_rng.integers(0, len(corpus)))]
            sampled = sample_response(
                policy, list(sample.prompt), max_len=horizon, rng=rollout_rng,
                temperature=temperature, top_p=top_p,
            )
            ok = compile_check(list(sample.prompt), list(sampled.tokens)).ok
            labeled.append((tuple(sample.prompt), tuple(sampled.tokens), ok))
    total_steps = epochs * ((len(labeled) + batch_size - 1) // batch_size)
    step = 0
    for _ in range(epochs):
        order = corpus_rng.permutation(len(labeled))
        for start in range(0, len(labeled), batch_size):
            batch = [labeled[i] for i in order[start:start + batch_size]]
            critic.zero_grad()
            total = None
            for prompt, response, ok in batch:
                logit = compile_logit(critic, prompt, response)
                # binary cross-entropy: -log sigmoid(z) = softplus(-z)
                z = logit if ok else ad.mul(logit, -1.0)
                term = ad.softplus(ad.mul(z, -1.0))
                total = term if total is None else ad.add(total, term)
            loss = ad.mul(total, 1.0 / len(batch))
            loss.backward()
            optimizer_step(critic, lr, step, total_steps)
            if metrics_cb is not None:
                metrics_cb({"phase": "critic", "step": step, "loss": float(loss.data)})
            step += 1
    return critic


def train_coderl(
    policy: Model,
    critic: Model,
    corpus: list[TaskSample],
    episodes: int,
    lr: float,
    *,
    batch_size: int = 8,
    horizon: int = 64,
    temperature: float = 1.0,
    top_p: float = 0.95,
    corpus_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
    metrics_cb=None,
) -> Model:
    """Policy gradient with returns from compilation alone: +1/-1 scalar
    returns against a greedy baseline, token credit from the classifier."""
    total_steps = (episodes + batch_size - 1) // batch_size
    step = 0
    done = 0
    while done < episodes:
        batch_n = min(batch_size, episodes - done)
        policy.zero_grad()
        greedy_cache: dict[tuple, float] = {}
        total = None
        n_tokens = 0
        returns = []
        for _ in range(batch_n):
            sample = corpus[int(corpus_rng.integers(0, len(corpus)))]
            sampled = sample_response(
                policy, list(sample.prompt), max_len=horizon, rng=rollout_rng,
                temperature=temperature, top_p=top_p,
            )
            compiled = compile_check(list(sample.prompt), list(sampled.tokens)).ok
            r = 1.0 if compiled else -1.0
            key = tuple(sample.prompt)
            if key not in greedy_cache:
                baseline = greedy_decode(policy, list(sample.prompt), max_len=horizon)
                greedy_cache[key] = 1.0 if compile_check(
                    list(sample.prompt), list(baseline.tokens)).ok else -1.0
            r_b = greedy_cache[key]
            returns.append(r)
            n_tokens += len(sampled.tokens)
            coef = r - r_b
            if coef == 0.0:
                continue
            credit = token_returns(critic, sample.prompt, sampled.tokens, compiled)
            lp = sequence_log_probs(policy, list(sample.prompt), list(sampled.tokens))
            weighted = ad.sum_(ad.mul(lp, credit))
            total_term = ad.mul(weighted, -coef)
            total = total_term if total is None else ad.add(total, total_term)
        if total is not None:
            loss = ad.mul(total, 1.0 / n_tokens)
            loss.backward()
            optimizer_step(policy, lr, step, total_steps)
            loss_value = float(loss.data)
        else:
            loss_value = 0.0
        done += batch_n
        if metrics_cb is not None:
            metrics_cb(_baseline_record(
                done, mean_reward=float(np.mean(returns)),
                compile_rate=float(np.mean([r > 0 for r in returns])),
                policy_loss=loss_value,
            ))
        step += 1
    return policy
