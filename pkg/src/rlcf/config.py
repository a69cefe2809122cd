"""Run configuration: defaults, schema validation, hashing, seed streams."""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

METHODS = ("rlcf", "rlcf-fixdisc", "mono", "ramp", "coderl", "disc-only", "compiler-only")

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "max_seq_len": 256},
    "data": {"coarse": 200, "finetune": 50, "test": 50},
    "bootstrap": {"epochs": 12, "lr": 3e-4, "batch_size": 8},
    "disc": {
        "triplet_epochs": 3, "triplet_lr": 3e-4, "margin": 0.5,
        "per_sample_triples": 2, "phase2_epochs": 5, "phase2_lr": 1.5e-4,
        "temperature": 0.6, "top_p": 0.95, "batch_size": 8,
    },
    "train": {
        "method": "rlcf", "episodes": 2000, "batch_size": 8,
        "lr_policy": 3e-4, "lr_critic": 3e-4, "lr_disc": 1.5e-4,
        "gamma": 0.99, "gae_lambda": 0.95, "clip_eps": 0.2,
        "beta_init": 0.1, "kl_target": 0.05, "kl_kp": 0.1, "kl_adaptive": True,
        "horizon": 64, "temperature": 1.0, "top_p": 0.95,
        "unused_penalty": 0.1, "inner_epochs": 1, "checkpoint_every": 50,
        "coderl_critic_samples": 4000, "coderl_critic_epochs": 2,
    },
    "eval": {
        "n": 20, "k_list": [1, 5, 10], "temperatures": [0.2, 0.6, 0.8],
        "top_p": 0.95, "fuel": 10000, "horizon": 64,
        "finetune_epochs": 2, "finetune_lr": 1e-4,
    },
}


class ConfigError(ValueError):
    pass


def _num(lo=None, hi=None, integer=False, strict_lo=False):
    def check(value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if integer and not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if lo is not None and (value <= lo if strict_lo else value < lo):
            raise ConfigError(f"{path}: {value} below minimum {lo}")
        if hi is not None and value > hi:
            raise ConfigError(f"{path}: {value} above maximum {hi}")
    return check


def _boolean(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true/false, got {value!r}")


def _choice(options):
    def check(value, path):
        if value not in options:
            raise ConfigError(f"{path}: {value!r} not one of {options}")
    return check


def _num_list(lo=None, hi=None, integer=False):
    item = _num(lo, hi, integer)

    def check(value, path):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a nonempty list")
        for i, v in enumerate(value):
            item(v, f"{path}[{i}]")
    return check


SCHEMA = {
    "seed": _num(0, integer=True),
    "model.d_model": _num(4, 512, integer=True),
    "model.n_layers": _num(1, 16, integer=True),
    "model.n_heads": _num(1, 16, integer=True),
    "model.max_seq_len": _num(16, 4096, integer=True),
    "data.coarse": _num(1, integer=True),
    "data.finetune": _num(0, integer=True),
    "data.test": _num(1, integer=True),
    "bootstrap.epochs": _num(0, integer=True),
    "bootstrap.lr": _num(0, strict_lo=True),
    "bootstrap.batch_size": _num(1, integer=True),
    "disc.triplet_epochs": _num(0, integer=True),
    "disc.triplet_lr": _num(0, strict_lo=True),
    "disc.margin": _num(0),
    "disc.per_sample_triples": _num(1, integer=True),
    "disc.phase2_epochs": _num(0, integer=True),
    "disc.phase2_lr": _num(0, strict_lo=True),
    "disc.temperature": _num(0, strict_lo=True),
    "disc.top_p": _num(0, 1, strict_lo=True),
    "disc.batch_size": _num(1, integer=True),
    "train.method": _choice(METHODS),
    "train.episodes": _num(0, integer=True),
    "train.batch_size": _num(1, integer=True),
    "train.lr_policy": _num(0, strict_lo=True),
    "train.lr_critic": _num(0, strict_lo=True),
    "train.lr_disc": _num(0, strict_lo=True),
    "train.gamma": _num(0, 1),
    "train.gae_lambda": _num(0, 1),
    "train.clip_eps": _num(0, strict_lo=True),
    "train.beta_init": _num(0),
    "train.kl_target": _num(0, strict_lo=True),
    "train.kl_kp": _num(0),
    "train.kl_adaptive": _boolean,
    "train.horizon": _num(1, integer=True),
    "train.temperature": _num(0, strict_lo=True),
    "train.top_p": _num(0, 1, strict_lo=True),
    "train.unused_penalty": _num(0),
    "train.inner_epochs": _num(1, integer=True),
    "train.checkpoint_every": _num(0, integer=True),
    "train.coderl_critic_samples": _num(1, integer=True),
    "train.coderl_critic_epochs": _num(1, integer=True),
    "eval.n": _num(1, integer=True),
    "eval.k_list": _num_list(1, integer=True),
    "eval.temperatures": _num_list(0),
    "eval.top_p": _num(0, 1, strict_lo=True),
    "eval.fuel": _num(1, integer=True),
    "eval.horizon": _num(1, integer=True),
    "eval.finetune_epochs": _num(0, integer=True),
    "eval.finetune_lr": _num(0, strict_lo=True),
}


def _walk(config: dict, prefix: str = ""):
    for key, value in config.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _walk(value, path + ".")
        else:
            yield path, value


def validate_config(config: dict) -> None:
    for path, value in _walk(config):
        check = SCHEMA.get(path)
        if check is None:
            raise ConfigError(f"unknown configuration key {path!r}")
        check(value, path)
    missing = set(SCHEMA) - {p for p, _ in _walk(config)}
    if missing:
        raise ConfigError(f"missing configuration keys: {sorted(missing)}")


def merge_config(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in out:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a section")
            out[key] = merge_config(out[key], value, path + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Defaults, then a JSON config file, then --set key=value flags."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: {exc}") from exc
        config = merge_config(config, file_cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        section = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in section or not isinstance(section[part], dict):
                raise ConfigError(f"unknown configuration key {key!r}")
            section = section[part]
        if parts[-1] not in section:
            raise ConfigError(f"unknown configuration key {key!r}")
        section[parts[-1]] = value
    validate_config(config)
    return config


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def budget_hash(config: dict) -> str:
    """Covers everything that fixes the training budget but not the method, so
    budget-matched ablation runs share it."""
    fields = {
        "seed": config["seed"],
        "model": config["model"],
        "data": config["data"],
        "episodes": config["train"]["episodes"],
        "batch_size": config["train"]["batch_size"],
        "horizon": config["train"]["horizon"],
    }
    return hashlib.sha256(canonical_json(fields).encode("utf-8")).hexdigest()


_STREAMS = {
    "taskgen": 1, "init": 2, "bootstrap": 3, "disc": 4, "corpus": 5,
    "rollout": 6, "eval": 7, "finetune": 8, "coderl": 9, "disc-init": 10,
}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """All randomness flows from the run seed through named substreams."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, _STREAMS[name])))
    )


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = state
    return gen
