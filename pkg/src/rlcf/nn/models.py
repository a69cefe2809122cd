"""Transformer networks: causal policy/reference/critic LMs and the
bidirectional comparator encoder, with both a graph-building forward (for
training) and a plain-numpy forward with a decode cache (for sampling and
no-gradient scoring). The two paths compute the same function; tests pin them
together at 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from rlcf import vocab
from rlcf.nn import autodiff as ad
from rlcf.nn.autodiff import Tensor

INIT_STD = 0.02
_NEG_INF = -1e30


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = vocab.VOCAB_SIZE
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 256

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "d_model": self.d_model,
            "n_layers": self.n_layers, "n_heads": self.n_heads,
            "max_seq_len": self.max_seq_len,
        }


class Role(Enum):
    POLICY = "policy"
    REFERENCE = "reference"
    CRITIC = "critic"
    DISCRIMINATOR = "discriminator"


class Model:
    """Named parameter store for one network, with per-parameter optimizer slots."""

    def __init__(self, config: ModelConfig, role: Role, params: dict[str, Tensor]):
        self.config = config
        self.role = role
        self.params = params
        self.opt_m: dict[str, np.ndarray] = {}
        self.opt_v: dict[str, np.ndarray] = {}
        self.opt_t = 0

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def clone(self, role: Role | None = None, trainable: bool = True) -> "Model":
        params = {
            name: Tensor(p.data.copy(), requires_grad=trainable)
            for name, p in self.params.items()
        }
        return Model(self.config, role or self.role, params)

    @property
    def causal(self) -> bool:
        return self.role is not Role.DISCRIMINATOR


def _linear_init(rng, fan_in, fan_out):
    return ad.parameter(rng.normal(0.0, INIT_STD, size=(fan_in, fan_out)))


def _body_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    d = config.d_model
    params: dict[str, Tensor] = {
        "wte": ad.parameter(rng.normal(0.0, INIT_STD, size=(config.vocab_size, d))),
        "wpe": ad.parameter(rng.normal(0.0, INIT_STD, size=(config.max_seq_len, d))),
        "ln_f_g": ad.parameter(np.ones(d)),
        "ln_f_b": ad.parameter(np.zeros(d)),
    }
    for layer in range(config.n_layers):
        pre = f"h{layer}."
        params[pre + "ln1_g"] = ad.parameter(np.ones(d))
        params[pre + "ln1_b"] = ad.parameter(np.zeros(d))
        for proj in ("q", "k", "v", "o"):
            params[pre + f"w_{proj}"] = _linear_init(rng, d, d)
            params[pre + f"b_{proj}"] = ad.parameter(np.zeros(d))
        params[pre + "ln2_g"] = ad.parameter(np.ones(d))
        params[pre + "ln2_b"] = ad.parameter(np.zeros(d))
        params[pre + "w_up"] = _linear_init(rng, d, 4 * d)
        params[pre + "b_up"] = ad.parameter(np.zeros(4 * d))
        params[pre + "w_down"] = _linear_init(rng, 4 * d, d)
        params[pre + "b_down"] = ad.parameter(np.zeros(d))
    return params


def init_lm(config: ModelConfig, rng, role: Role = Role.POLICY) -> Model:
    params = _body_params(config, rng)
    params["w_lm"] = _linear_init(rng, config.d_model, config.vocab_size)
    params["b_lm"] = ad.parameter(np.zeros(config.vocab_size))
    return Model(config, role, params)


def attach_scalar_head(model: Model, rng) -> None:
    """Add a per-position scalar head (value estimation / per-token scoring)."""
    model.params["w_head"] = _linear_init(rng, model.config.d_model, 1)
    model.params["b_head"] = ad.parameter(np.zeros(1))


def init_critic(policy: Model, rng) -> Model:
    """Critic sharing the policy architecture; body copied, head fresh."""
    critic = policy.clone(role=Role.CRITIC)
    critic.params.pop("w_lm", None)
    critic.params.pop("b_lm", None)
    attach_scalar_head(critic, rng)
    return critic


def init_discriminator(config: ModelConfig, rng) -> Model:
    d = config.d_model
    params = _body_params(config, rng)
    params["mlp_w1"] = _linear_init(rng, d, d)
    params["mlp_b1"] = ad.parameter(np.zeros(d))
    params["mlp_w2"] = _linear_init(rng, d, 1)
    params["mlp_b2"] = ad.parameter(np.zeros(1))
    return Model(config, Role.DISCRIMINATOR, params)


_MASK_CACHE: dict[int, np.ndarray] = {}


def _causal_mask(t: int) -> np.ndarray:
    mask = _MASK_CACHE.get(t)
    if mask is None:
        mask = np.triu(np.full((t, t), _NEG_INF), k=1)
        _MASK_CACHE[t] = mask
    return mask


# --- graph forward (training) ---


def hidden_states(model: Model, ids) -> Tensor:
    """Full transformer body over a token sequence; returns [T, d_model]."""
    ids = np.asarray(ids, dtype=np.intp)
    t = len(ids)
    cfg = model.config
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max {cfg.max_seq_len}")
    h_dim, n_heads = cfg.head_dim, cfg.n_heads
    p = model.params
    x = ad.add(ad.embedding(p["wte"], ids), ad.embedding(p["wpe"], np.arange(t)))
    mask = Tensor(_causal_mask(t)) if model.causal else None
    scale = 1.0 / np.sqrt(h_dim)
    for layer in range(cfg.n_layers):
        pre = f"h{layer}."
        h = ad.layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
        heads = []
        for proj in ("q", "k", "v"):
            y = ad.add(ad.matmul(h, p[pre + f"w_{proj}"]), p[pre + f"b_{proj}"])
            y = ad.reshape(y, (t, n_heads, h_dim))
            heads.append(ad.transpose(y, (1, 0, 2)))  # [H, T, hd]
        q, k, v = heads
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), scale)
        if mask is not None:
            scores = ad.add(scores, mask)
        ctx = ad.matmul(ad.softmax(scores, axis=-1), v)  # [H, T, hd]
        merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (t, cfg.d_model))
        x = ad.add(x, ad.add(ad.matmul(merged, p[pre + "w_o"]), p[pre + "b_o"]))
        h = ad.layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
        u = ad.gelu(ad.add(ad.matmul(h, p[pre + "w_up"]), p[pre + "b_up"]))
        x = ad.add(x, ad.add(ad.matmul(u, p[pre + "w_down"]), p[pre + "b_down"]))
    return ad.layer_norm(x, p["ln_f_g"], p["ln_f_b"])


def lm_logits(model: Model, ids) -> Tensor:
    h = hidden_states(model, ids)
    return ad.add(ad.matmul(h, model.params["w_lm"]), model.params["b_lm"])


def sequence_log_probs(model: Model, prompt, response) -> Tensor:
    """log f(y_j | x, y_<j) for each response token, full (untruncated)
    distribution; differentiable in the model parameters."""
    if not response:
        raise ValueError("response must be nonempty")
    ids = list(prompt) + list(response)
    logits = lm_logits(model, ids[:-1])
    logp = ad.log_softmax(logits, axis=-1)
    rows = np.arange(len(prompt) - 1, len(ids) - 1)
    return ad.take_pairs(logp, rows, np.asarray(response, dtype=np.intp))


def critic_values(model: Model, prompt, response) -> Tensor:
    """v(x, y_<j) for j = 1..|response|: value of the state before each token."""
    ids = list(prompt) + list(response)
    h = hidden_states(model, ids[:-1])
    rows = np.arange(len(prompt) - 1, len(ids) - 1)
    states = ad.take_rows(h, rows)
    out = ad.add(ad.matmul(states, model.params["w_head"]), model.params["b_head"])
    return ad.reshape(out, (len(response),))


def token_scores(model: Model, prompt, response) -> Tensor:
    """Scalar head applied at each response token's own position (not shifted);
    used by the compile-classifier critic."""
    ids = list(prompt) + list(response)
    h = hidden_states(model, ids)
    rows = np.arange(len(prompt), len(ids))
    states = ad.take_rows(h, rows)
    out = ad.add(ad.matmul(states, model.params["w_head"]), model.params["b_head"])
    return ad.reshape(out, (len(response),))


def pooled_embedding(disc: Model, prompt, candidate) -> Tensor:
    """Encoder representation at the prepended pooling token."""
    ids = [vocab.CLS] + list(prompt) + list(candidate)
    h = hidden_states(disc, ids)
    return ad.reshape(ad.take_rows(h, np.array([0])), (disc.config.d_model,))


def candidate_score(disc: Model, prompt, candidate) -> Tensor:
    """Belief that the candidate is the corpus response for this prompt."""
    pooled = pooled_embedding(disc, prompt, candidate)
    hidden = ad.tanh(ad.add(ad.matmul(ad.reshape(pooled, (1, -1)), disc.params["mlp_w1"]),
                            disc.params["mlp_b1"]))
    out = ad.add(ad.matmul(hidden, disc.params["mlp_w2"]), disc.params["mlp_b2"])
    return ad.reshape(out, ())


def tanh_difference(s0: float, s1: float) -> float:
    return float(np.tanh(s0 - s1))


def discriminator_score(disc: Model, prompt, y0, y1) -> Tensor:
    """tanh of the score difference; antisymmetric by construction because
    both candidates run through the same encoder and head."""
    s0 = candidate_score(disc, prompt, y0)
    s1 = candidate_score(disc, prompt, y1)
    return ad.tanh(ad.add(s0, ad.mul(s1, -1.0)))


# --- plain-numpy forward (sampling and no-grad scoring) ---


def _np_layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * g + b


def _np_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _np_softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def np_hidden_states(model: Model, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.intp)
    t = len(ids)
    cfg = model.config
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max {cfg.max_seq_len}")
    h_dim, n_heads = cfg.head_dim, cfg.n_heads
    p = {name: tensor.data for name, tensor in model.params.items()}
    x = p["wte"][ids] + p["wpe"][:t]
    mask = _causal_mask(t) if model.causal else None
    scale = 1.0 / np.sqrt(h_dim)
    for layer in range(cfg.n_layers):
        pre = f"h{layer}."
        h = _np_layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
        q = (h @ p[pre + "w_q"] + p[pre + "b_q"]).reshape(t, n_heads, h_dim).transpose(1, 0, 2)
        k = (h @ p[pre + "w_k"] + p[pre + "b_k"]).reshape(t, n_heads, h_dim).transpose(1, 0, 2)
        v = (h @ p[pre + "w_v"] + p[pre + "b_v"]).reshape(t, n_heads, h_dim).transpose(1, 0, 2)
        scores = q @ k.transpose(0, 2, 1) * scale
        if mask is not None:
            scores = scores + mask
        ctx = _np_softmax(scores) @ v
        x = x + ctx.transpose(1, 0, 2).reshape(t, cfg.d_model) @ p[pre + "w_o"] + p[pre + "b_o"]
        h = _np_layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
        x = x + _np_gelu(h @ p[pre + "w_up"] + p[pre + "b_up"]) @ p[pre + "w_down"] + p[pre + "b_down"]
    return _np_layer_norm(x, p["ln_f_g"], p["ln_f_b"])


def np_lm_logits(model: Model, ids) -> np.ndarray:
    h = np_hidden_states(model, ids)
    return h @ model.params["w_lm"].data + model.params["b_lm"].data


def np_sequence_log_probs(model: Model, prompt, response) -> np.ndarray:
    ids = list(prompt) + list(response)
    logits = np_lm_logits(model, ids[:-1])
    logp = logits - _np_logsumexp(logits)
    rows = np.arange(len(prompt) - 1, len(ids) - 1)
    return logp[rows, np.asarray(response, dtype=np.intp)]


def _np_logsumexp(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def np_critic_values(model: Model, prompt, response) -> np.ndarray:
    ids = list(prompt) + list(response)
    h = np_hidden_states(model, ids[:-1])
    rows = np.arange(len(prompt) - 1, len(ids) - 1)
    return (h[rows] @ model.params["w_head"].data + model.params["b_head"].data).reshape(-1)


def np_pooled_embedding(disc: Model, prompt, candidate) -> np.ndarray:
    ids = [vocab.CLS] + list(prompt) + list(candidate)
    return np_hidden_states(disc, ids)[0]


def np_candidate_score(disc: Model, prompt, candidate) -> float:
    pooled = np_pooled_embedding(disc, prompt, candidate)
    hidden = np.tanh(pooled @ disc.params["mlp_w1"].data + disc.params["mlp_b1"].data)
    return float(hidden @ disc.params["mlp_w2"].data + disc.params["mlp_b2"].data)


def np_discriminator_score(disc: Model, prompt, y0, y1) -> float:
    return tanh_difference(
        np_candidate_score(disc, prompt, y0), np_candidate_score(disc, prompt, y1)
    )


class DecodeCache:
    """Per-layer key/value cache for incremental autoregressive decoding."""

    def __init__(self, model: Model):
        self.model = model
        cfg = model.config
        self.k = [np.empty((cfg.max_seq_len, cfg.d_model)) for _ in range(cfg.n_layers)]
        self.v = [np.empty((cfg.max_seq_len, cfg.d_model)) for _ in range(cfg.n_layers)]
        self.length = 0
        self._p = {name: t.data for name, t in model.params.items()}

    def prime(self, ids) -> np.ndarray:
        """Process a prefix in one vectorized pass; returns last-position logits."""
        ids = np.asarray(ids, dtype=np.intp)
        t = len(ids)
        cfg, p = self.model.config, self._p
        h_dim, n_heads = cfg.head_dim, cfg.n_heads
        x = p["wte"][ids] + p["wpe"][:t]
        mask = _causal_mask(t)
        scale = 1.0 / np.sqrt(h_dim)
        for layer in range(cfg.n_layers):
            pre = f"h{layer}."
            h = _np_layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
            k_flat = h @ p[pre + "w_k"] + p[pre + "b_k"]
            v_flat = h @ p[pre + "w_v"] + p[pre + "b_v"]
            self.k[layer][:t] = k_flat
            self.v[layer][:t] = v_flat
            q = (h @ p[pre + "w_q"] + p[pre + "b_q"]).reshape(t, n_heads, h_dim).transpose(1, 0, 2)
            k = k_flat.reshape(t, n_heads, h_dim).transpose(1, 0, 2)
            v = v_flat.reshape(t, n_heads, h_dim).transpose(1, 0, 2)
            ctx = _np_softmax(q @ k.transpose(0, 2, 1) * scale + mask) @ v
            x = x + ctx.transpose(1, 0, 2).reshape(t, cfg.d_model) @ p[pre + "w_o"] + p[pre + "b_o"]
            h = _np_layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
            x = x + _np_gelu(h @ p[pre + "w_up"] + p[pre + "b_up"]) @ p[pre + "w_down"] + p[pre + "b_down"]
        self.length = t
        final = _np_layer_norm(x[-1], p["ln_f_g"], p["ln_f_b"])
        return final @ p["w_lm"] + p["b_lm"]

    def step(self, token_id: int) -> np.ndarray:
        """Append one token and return next-token logits."""
        cfg, p = self.model.config, self._p
        pos = self.length
        if pos >= cfg.max_seq_len:
            raise ValueError("decode cache is full")
        h_dim, n_heads = cfg.head_dim, cfg.n_heads
        scale = 1.0 / np.sqrt(h_dim)
        x = p["wte"][token_id] + p["wpe"][pos]
        for layer in range(cfg.n_layers):
            pre = f"h{layer}."
            h = _np_layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
            q = h @ p[pre + "w_q"] + p[pre + "b_q"]
            self.k[layer][pos] = h @ p[pre + "w_k"] + p[pre + "b_k"]
            self.v[layer][pos] = h @ p[pre + "w_v"] + p[pre + "b_v"]
            k = self.k[layer][:pos + 1].reshape(pos + 1, n_heads, h_dim)
            v = self.v[layer][:pos + 1].reshape(pos + 1, n_heads, h_dim)
            qh = q.reshape(n_heads, h_dim)
            scores = np.einsum("hd,thd->ht", qh, k) * scale
            att = _np_softmax(scores, axis=-1)
            ctx = np.einsum("ht,thd->hd", att, v).reshape(cfg.d_model)
            x = x + ctx @ p[pre + "w_o"] + p[pre + "b_o"]
            h = _np_layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
            x = x + _np_gelu(h @ p[pre + "w_up"] + p[pre + "b_up"]) @ p[pre + "w_down"] + p[pre + "b_down"]
        self.length = pos + 1
        final = _np_layer_norm(x, p["ln_f_g"], p["ln_f_b"])
        return final @ p["w_lm"] + p["b_lm"]
