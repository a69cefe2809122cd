"""Versioned checkpoint container: architecture config, raw 64-bit parameters,
optimizer state, RNG state, and the vocabulary-manifest hash (verified on load).
"""

from __future__ import annotations

import json

import numpy as np

from rlcf import vocab
from rlcf.nn import autodiff as ad
from rlcf.nn.models import Model, ModelConfig, Role

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, models: dict[str, Model], *, rng_states: dict | None = None,
                    meta: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    header: dict = {
        "version": CHECKPOINT_VERSION,
        "vocab_hash": vocab.vocab_hash(),
        "models": {},
        "rng_states": rng_states or {},
        "meta": meta or {},
    }
    for name, model in models.items():
        header["models"][name] = {
            "config": model.config.to_dict(),
            "role": model.role.value,
            "opt_t": model.opt_t,
            "params": list(model.params.keys()),
            "opt_params": sorted(model.opt_m.keys()),
        }
        for pname, p in model.params.items():
            arrays[f"{name}.param.{pname}"] = p.data
        for pname, m in model.opt_m.items():
            arrays[f"{name}.opt_m.{pname}"] = m
            arrays[f"{name}.opt_v.{pname}"] = model.opt_v[pname]
    arrays["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[dict[str, Model], dict, dict]:
    """Returns (models, rng_states, meta). Refuses a vocabulary mismatch."""
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header['version']}")
        if header["vocab_hash"] != vocab.vocab_hash():
            raise CheckpointError("checkpoint was written against a different vocabulary")
        models: dict[str, Model] = {}
        for name, spec in header["models"].items():
            config = ModelConfig(**spec["config"])
            params = {
                pname: ad.parameter(data[f"{name}.param.{pname}"])
                for pname in spec["params"]
            }
            model = Model(config, Role(spec["role"]), params)
            model.opt_t = spec["opt_t"]
            for pname in spec["opt_params"]:
                model.opt_m[pname] = data[f"{name}.opt_m.{pname}"].copy()
                model.opt_v[pname] = data[f"{name}.opt_v.{pname}"].copy()
            models[name] = model
    return models, header["rng_states"], header["meta"]
