"""The coarse-tuning pipeline: supervised bootstrap, comparator pretraining
(triplet phase, then scoring phase against the bootstrapped policy), and the
clipped-surrogate RL loop with advantage estimation and an adaptive per-token
drift coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rlcf.grounding import (
    GroundingMode, Trajectory, assemble_rewards, make_trajectory, rollout_trajectory,
)
from rlcf.nn import autodiff as ad
from rlcf.nn.autodiff import Tensor
from rlcf.nn.models import (
    Model, candidate_score, discriminator_score, init_critic,
    np_discriminator_score, np_critic_values, np_sequence_log_probs,
    pooled_embedding, sequence_log_probs, critic_values,
)
from rlcf.nn.optim import TrainingError, optimizer_step
from rlcf.nn.sampling import sample_response
from rlcf.tasks import EquivalenceTriple, TaskSample, build_triples


@dataclass
class RlcfConfig:
    episodes: int
    batch_size: int = 8
    lr_policy: float = 3e-4
    lr_critic: float = 3e-4
    lr_disc: float = 1.5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    beta_init: float = 0.1
    kl_target: float = 0.05
    kl_kp: float = 0.1
    kl_adaptive: bool = True
    freeze_disc: bool = False
    horizon: int = 64
    temperature: float = 1.0
    top_p: float = 0.95
    unused_penalty: float = 0.1
    inner_epochs: int = 1
    mode: GroundingMode = GroundingMode.FULL

    def validate(self) -> None:
        if self.episodes < 0 or self.batch_size <= 0 or self.horizon <= 0:
            raise ValueError("episodes, batch_size and horizon must be positive")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.beta_init < 0:
            raise ValueError("beta_init must be nonnegative")


# --- supervised training (bootstrap, mono baseline, fine-tuning) ---


def _supervised_steps(policy, samples: list[TaskSample], lr: float, batch_size: int,
                      metrics_cb=None) -> Model:
    total_steps = (len(samples) + batch_size - 1) // batch_size
    step = 0
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        policy.zero_grad()
        total = None
        n_tokens = 0
        for sample in batch:
            lp = sequence_log_probs(policy, list(sample.prompt), list(sample.reference))
            neg = ad.mul(ad.sum_(lp), -1.0)
            total = neg if total is None else ad.add(total, neg)
            n_tokens += len(sample.reference)
        loss = ad.mul(total, 1.0 / n_tokens)
        if not np.isfinite(loss.data):
            raise TrainingError("non-finite supervised loss")
        loss.backward()
        optimizer_step(policy, lr, step, total_steps)
        if metrics_cb is not None:
            metrics_cb({"step": step, "loss": float(loss.data)})
        step += 1
    return policy


def bootstrap_supervised(policy: Model, corpus: list[TaskSample], epochs: int, lr: float,
                         *, batch_size: int = 8, shuffle_rng=None, metrics_cb=None) -> Model:
    """Token-level cross-entropy on references given prompts. The caller
    freezes a clone of the result as the drift anchor."""
    if epochs == 0 or not corpus:
        return policy
    seq: list[TaskSample] = []
    for _ in range(epochs):
        if shuffle_rng is not None:
            order = shuffle_rng.permutation(len(corpus))
        else:
            order = range(len(corpus))
        seq.extend(corpus[i] for i in order)
    return _supervised_steps(policy, seq, lr, batch_size, metrics_cb)


# --- comparator pretraining ---


@dataclass
class DiscPretrainConfig:
    triplet_epochs: int = 3
    triplet_lr: float = 3e-4
    margin: float = 0.5
    per_sample_triples: int = 2
    phase2_epochs: int = 5
    phase2_lr: float = 1.5e-4
    temperature: float = 0.6
    top_p: float = 0.95
    horizon: int = 64
    batch_size: int = 8


def triplet_loss(disc: Model, triple: EquivalenceTriple, margin: float) -> Tensor:
    """Hinged margin loss pulling equivalent responses together in the
    encoder's pooled embedding space."""
    prompt = list(triple.prompt)
    e_a = pooled_embedding(disc, prompt, list(triple.anchor))
    e_p = pooled_embedding(disc, prompt, list(triple.positive))
    e_n = pooled_embedding(disc, prompt, list(triple.negative))
    d_ap = ad.sum_(ad.power(ad.add(e_a, ad.mul(e_p, -1.0)), 2.0))
    d_an = ad.sum_(ad.power(ad.add(e_a, ad.mul(e_n, -1.0)), 2.0))
    z = ad.add(ad.add(d_ap, ad.mul(d_an, -1.0)), margin)
    return ad.clip(z, 0.0, np.inf)


def triplet_separation(disc: Model, triples: list[EquivalenceTriple]) -> float:
    """Fraction of triples whose anchor sits closer to the positive."""
    from rlcf.nn.models import np_pooled_embedding
    hits = 0
    with ad.no_grad():
        for t in triples:
            e_a = np_pooled_embedding(disc, list(t.prompt), list(t.anchor))
            e_p = np_pooled_embedding(disc, list(t.prompt), list(t.positive))
            e_n = np_pooled_embedding(disc, list(t.prompt), list(t.negative))
            if np.sum((e_a - e_p) ** 2) < np.sum((e_a - e_n) ** 2):
                hits += 1
    return hits / len(triples) if triples else 0.0


def pretrain_discriminator(
    disc: Model,
    corpus: list[TaskSample],
    policy: Model,
    config: DiscPretrainConfig,
    *,
    seed: int,
    rng: np.random.Generator,
    metrics_cb=None,
) -> Model:
    """Phase 1: triplet loss on functionally equivalent response variants.
    Phase 2: minimize the pairwise score of policy samples against references.
    """
    triples = build_triples(corpus, seed, per_sample=config.per_sample_triples)
    total_steps = config.triplet_epochs * ((len(triples) + config.batch_size - 1)
                                           // config.batch_size)
    step = 0
    for _ in range(config.triplet_epochs):
        order = rng.permutation(len(triples))
        for start in range(0, len(triples), config.batch_size):
            batch = [triples[i] for i in order[start:start + config.batch_size]]
            disc.zero_grad()
            total = None
            for triple in batch:
                term = triplet_loss(disc, triple, config.margin)
                total = term if total is None else ad.add(total, term)
            loss = ad.mul(total, 1.0 / len(batch))
            loss.backward()
            optimizer_step(disc, config.triplet_lr, step, total_steps)
            if metrics_cb is not None:
                metrics_cb({"phase": 1, "step": step, "loss": float(loss.data)})
            step += 1

    total_steps = config.phase2_epochs * ((len(corpus) + config.batch_size - 1)
                                          // config.batch_size)
    step = 0
    for _ in range(config.phase2_epochs):
        order = rng.permutation(len(corpus))
        for start in range(0, len(corpus), config.batch_size):
            batch = [corpus[i] for i in order[start:start + config.batch_size]]
            disc.zero_grad()
            total = None
            for sample in batch:
                response = sample_response(
                    policy, list(sample.prompt), max_len=config.horizon, rng=rng,
                    temperature=config.temperature, top_p=config.top_p,
                )
                score = discriminator_score(
                    disc, list(sample.prompt), list(response.tokens), list(sample.reference)
                )
                total = score if total is None else ad.add(total, score)
            loss = ad.mul(total, 1.0 / len(batch))
            loss.backward()
            optimizer_step(disc, config.phase2_lr, step, total_steps)
            if metrics_cb is not None:
                metrics_cb({"phase": 2, "step": step, "loss": float(loss.data)})
            step += 1
    return disc


# --- advantage estimation and policy/critic updates ---


def gae(rewards, values, gamma: float, lam: float):
    """Exponentially weighted temporal-difference sums; the value after the
    terminal step is 0. Returns (returns, advantages)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must align")
    n = len(rewards)
    advantages = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    return advantages + values, advantages


def ppo_objective_terms(ratios, advantages, clip_eps: float):
    """min(rho*A, clip(rho, 1-eps, 1+eps)*A) per token; ratios may be a graph
    Tensor (training) or a plain array (tests)."""
    if not isinstance(ratios, Tensor):
        ratios = Tensor(np.asarray(ratios, dtype=np.float64))
    adv = Tensor(np.asarray(advantages, dtype=np.float64))
    unclipped = ad.mul(ratios, adv)
    clipped = ad.mul(ad.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps), adv)
    return ad.minimum(unclipped, clipped)


def normalize_advantages(trajectories: list[Trajectory]) -> list[np.ndarray]:
    flat = np.concatenate([t.advantages for t in trajectories])
    mu = flat.mean()
    sd = flat.std()
    if sd < 1e-8:
        sd = 1.0
    return [(t.advantages - mu) / sd for t in trajectories]


def ppo_policy_update(
    policy: Model,
    trajectories: list[Trajectory],
    clip_eps: float,
    lr: float,
    *,
    schedule_step: int = 0,
    total_steps: int = 1,
    inner_epochs: int = 1,
    normalize: bool = True,
) -> float:
    """Maximize the clipped surrogate over the batch (gradient ascent via one
    or more descent steps on its negation). Returns the last surrogate loss."""
    if normalize:
        advantages = normalize_advantages(trajectories)
    else:
        advantages = [t.advantages for t in trajectories]
    n_tokens = sum(len(t.tokens) for t in trajectories)
    loss_value = 0.0
    for _ in range(inner_epochs):
        policy.zero_grad()
        total = None
        for traj, adv in zip(trajectories, advantages):
            new_lp = sequence_log_probs(policy, list(traj.prompt), list(traj.tokens))
            ratios = ad.exp(ad.add(new_lp, -np.asarray(traj.old_logprobs)))
            if not np.all(np.isfinite(ratios.data)):
                raise TrainingError("non-finite likelihood ratio")
            terms = ad.sum_(ppo_objective_terms(ratios, adv, clip_eps))
            total = terms if total is None else ad.add(total, terms)
        loss = ad.mul(total, -1.0 / n_tokens)
        loss.backward()
        optimizer_step(policy, lr, schedule_step, total_steps)
        loss_value = float(loss.data)
    return loss_value


def critic_update(
    critic: Model,
    trajectories: list[Trajectory],
    lr: float,
    *,
    schedule_step: int = 0,
    total_steps: int = 1,
) -> float:
    """One descent step on the squared error against the estimated returns."""
    critic.zero_grad()
    total = None
    n_tokens = sum(len(t.tokens) for t in trajectories)
    for traj in trajectories:
        v = critic_values(critic, list(traj.prompt), list(traj.tokens))
        err = ad.add(v, -np.asarray(traj.returns))
        term = ad.sum_(ad.power(err, 2.0))
        total = term if total is None else ad.add(total, term)
    loss = ad.mul(total, 1.0 / n_tokens)
    loss.backward()
    optimizer_step(critic, lr, schedule_step, total_steps)
    return float(loss.data)


def adapt_kl(beta: float, observed_kl: float, kl_target: float, kp: float = 0.1) -> float:
    """Proportional controller nudging beta toward the divergence target."""
    if beta <= 0 or kl_target <= 0:
        raise ValueError("beta and kl_target must be positive")
    err = np.clip((observed_kl - kl_target) / kl_target, -0.2, 0.2)
    return float(beta * (1.0 + kp * err))


# --- the episode loop ---


@dataclass
class TrainState:
    episode: int = 0
    beta: float = 0.1
    batch_index: int = 0


def train_rlcf(
    config: RlcfConfig,
    corpus: list[TaskSample],
    policy: Model,
    disc: Model | None,
    *,
    corpus_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
    init_rng: np.random.Generator,
    critic: Model | None = None,
    reference: Model | None = None,
    metrics_cb=None,
    checkpoint_cb=None,
    checkpoint_every: int = 0,
    state: TrainState | None = None,
) -> tuple[Model, Model, Model | None]:
    """Run the batched episode loop; mutates and returns (policy, critic, disc).

    Per batch: roll out; per-token drift rewards plus the terminal grounding
    reward; optional adversarial comparator step (on the untruncated samples);
    advantage estimation; clipped-surrogate policy step; critic step; beta
    adjustment from the batch-mean per-token divergence.
    """
    config.validate()
    if config.mode is not GroundingMode.COMPILER_ONLY and disc is None:
        raise ValueError("this grounding mode needs a comparator model")
    if reference is None:
        reference = policy.clone(role=None, trainable=False)
    if critic is None:
        critic = init_critic(policy, init_rng)
    state = state or TrainState(beta=config.beta_init)
    if state.episode == 0:
        state.beta = config.beta_init
    n_batches = (config.episodes + config.batch_size - 1) // config.batch_size

    while state.episode < config.episodes:
        batch_n = min(config.batch_size, config.episodes - state.episode)
        trajectories: list[Trajectory] = []
        for _ in range(batch_n):
            sample = corpus[int(corpus_rng.integers(0, len(corpus)))]
            rollout = rollout_trajectory(
                sample.prompt, sample.reference, policy, disc,
                horizon=config.horizon, rng=rollout_rng,
                temperature=config.temperature, top_p=config.top_p,
                mode=config.mode,
            )
            traj = make_trajectory(rollout, policy, reference_tokens=sample.reference)
            ref_lp = np_sequence_log_probs(reference, list(traj.prompt), list(traj.tokens))
            penalty = 0.0 if config.mode is GroundingMode.DISC_ONLY else config.unused_penalty
            assemble_rewards(traj, rollout.reward, traj.old_logprobs, ref_lp,
                             state.beta, penalty)
            traj.ref_logprobs = ref_lp
            trajectories.append(traj)

        disc_loss = float("nan")
        if disc is not None:
            if config.freeze_disc:
                disc_loss = _batch_disc_value(disc, trajectories)
            else:
                disc.zero_grad()
                total = None
                for traj in trajectories:
                    score = discriminator_score(
                        disc, list(traj.prompt), list(traj.full_tokens), list(traj.reference_tokens)
                    )
                    total = score if total is None else ad.add(total, score)
                loss = ad.mul(total, 1.0 / batch_n)
                loss.backward()
                optimizer_step(disc, config.lr_disc, state.batch_index, n_batches)
                disc_loss = float(loss.data)

        for traj in trajectories:
            with ad.no_grad():
                values = np_critic_values(critic, list(traj.prompt), list(traj.tokens))
            returns, advantages = gae(traj.rewards, values, config.gamma, config.gae_lambda)
            traj.values = values
            traj.returns = returns
            traj.advantages = advantages

        policy_loss = ppo_policy_update(
            policy, trajectories, config.clip_eps, config.lr_policy,
            schedule_step=state.batch_index, total_steps=n_batches,
            inner_epochs=config.inner_epochs,
        )
        value_loss = critic_update(
            critic, trajectories, config.lr_critic,
            schedule_step=state.batch_index, total_steps=n_batches,
        )

        kl_sum = sum(float(np.sum(t.old_logprobs - t.ref_logprobs)) for t in trajectories)
        kl_tokens = sum(len(t.tokens) for t in trajectories)
        mean_kl = kl_sum / kl_tokens
        if config.kl_adaptive and state.beta > 0:
            state.beta = adapt_kl(state.beta, mean_kl, config.kl_target, config.kl_kp)

        state.episode += batch_n
        state.batch_index += 1
        if metrics_cb is not None:
            metrics_cb({
                "episode": state.episode,
                "mean_reward": float(np.mean([t.terminal_reward for t in trajectories])),
                "compile_rate": float(np.mean([1.0 if t.compiled else 0.0
                                               for t in trajectories])),
                "mean_kl": mean_kl,
                "beta": state.beta,
                "policy_loss": policy_loss,
                "value_loss": value_loss,
                "disc_loss": disc_loss,
            })
        if checkpoint_cb is not None and checkpoint_every > 0 \
                and state.batch_index % checkpoint_every == 0:
            checkpoint_cb(state, policy, critic, disc)
    return policy, critic, disc


def _batch_disc_value(disc: Model, trajectories: list[Trajectory]) -> float:
    with ad.no_grad():
        vals = [
            np_discriminator_score(disc, list(t.prompt), list(t.full_tokens),
                                   list(t.reference_tokens))
            for t in trajectories
        ]
    return float(np.mean(vals))
