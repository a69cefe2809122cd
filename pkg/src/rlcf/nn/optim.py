"""Decoupled-weight-decay adaptive-moment optimizer with linear LR decay and
global gradient-norm clipping."""

from __future__ import annotations

import numpy as np

from rlcf.nn.models import Model

BETA1, BETA2 = 0.9, 0.99
EPS = 1e-8
DEFAULT_WEIGHT_DECAY = 0.01
DEFAULT_CLIP_NORM = 1.0


class TrainingError(RuntimeError):
    """Fatal, non-recoverable training failure (non-finite loss or gradient)."""


def linear_lr(lr: float, schedule_step: int, total_steps: int) -> float:
    """Linear decay from lr to 0 over total_steps."""
    if total_steps <= 0:
        return lr
    return lr * max(0.0, 1.0 - schedule_step / total_steps)


def global_grad_norm(model: Model) -> float:
    total = 0.0
    for p in model.params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def optimizer_step(
    model: Model,
    lr: float,
    schedule_step: int,
    total_steps: int,
    *,
    weight_decay: float = DEFAULT_WEIGHT_DECAY,
    clip_norm: float | None = DEFAULT_CLIP_NORM,
    betas: tuple[float, float] = (BETA1, BETA2),
    eps: float = EPS,
) -> None:
    """One update on every parameter that has a gradient; clears gradients.

    Raises TrainingError on non-finite gradients.
    """
    b1, b2 = betas
    effective_lr = linear_lr(lr, schedule_step, total_steps)
    scale = 1.0
    if clip_norm is not None:
        norm = global_grad_norm(model)
        if not np.isfinite(norm):
            raise TrainingError("non-finite gradient norm")
        if norm > clip_norm:
            scale = clip_norm / norm
    model.opt_t += 1
    t = model.opt_t
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in model.params.items():
        if p.grad is None:
            continue
        g = p.grad * scale
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name!r}")
        m = model.opt_m.get(name)
        v = model.opt_v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        model.opt_m[name] = m
        model.opt_v[name] = v
        update = (m / bias1) / (np.sqrt(v / bias2) + eps)
        p.data = p.data - effective_lr * (update + weight_decay * p.data)
        p.grad = None
