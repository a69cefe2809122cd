"""Command-line orchestration for the whole pipeline.

Subcommands: gen-data, bootstrap, pretrain-disc, train, eval, profile-errors,
report. Exit codes: 0 success, 1 usage or configuration error, 2 runtime
failure. All output files carry a version header and the configuration hash;
a rerun with the same seed and config is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from rlcf import config as cfgmod
from rlcf import report as reportmod
from rlcf import tasks as tasksmod
from rlcf import vocab
from rlcf.baselines import (
    init_compile_critic, pretrain_compile_critic, train_bipolar_ramp, train_coderl,
    train_mono,
)
from rlcf.config import ConfigError, budget_hash, config_hash, load_config, rng_stream
from rlcf.evaluation import (
    error_profile, evaluate_model, fine_tune, write_report, write_table,
)
from rlcf.grounding import GroundingMode
from rlcf.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from rlcf.nn.models import Model, ModelConfig, Role, init_discriminator, init_lm
from rlcf.nn.optim import TrainingError
from rlcf.training import (
    DiscPretrainConfig, RlcfConfig, TrainState, bootstrap_supervised,
    pretrain_discriminator, train_rlcf,
)

log = logging.getLogger("rlcf")

FORMAT_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


class MetricsWriter:
    """Line-delimited metric records behind a version header."""

    def __init__(self, path, header: dict, append: bool = False):
        self._fh = open(path, "a" if append else "w", encoding="utf-8")
        if not append:
            record = {"type": "header", "version": FORMAT_VERSION}
            record.update(header)
            self._write(record)

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def __call__(self, record: dict) -> None:
        self._write(record)

    def close(self) -> None:
        self._fh.close()


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(vocab_size=vocab.VOCAB_SIZE, **cfg["model"])


def _write_run_meta(out_dir: str, cfg: dict, command: str, method: str | None = None):
    meta = {
        "version": FORMAT_VERSION,
        "command": command,
        "method": method,
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "budget_hash": budget_hash(cfg),
    }
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_corpus(data_dir: str, split: str, with_tests: bool):
    path = os.path.join(data_dir, "dataset.jsonl")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    corpus = tasksmod.load_dataset(path, split=split, with_tests=with_tests)
    if not corpus:
        raise FileNotFoundError(f"dataset {path} has no samples in split {split!r}")
    return corpus


def _load_model(path: str, name: str) -> Model:
    models, _, _ = load_checkpoint(path)
    if name not in models:
        raise CheckpointError(f"checkpoint {path} does not contain model {name!r}")
    return models[name]


# --- commands ---


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    counts = {"coarse": cfg["data"]["coarse"], "finetune": cfg["data"]["finetune"],
              "test": cfg["data"]["test"]}
    samples = tasksmod.generate_dataset(cfg["seed"], counts)
    tasksmod.write_dataset(os.path.join(args.out, "dataset.jsonl"), samples)
    vocab.write_manifest(os.path.join(args.out, "vocab.tsv"))
    manifest = {
        "version": FORMAT_VERSION,
        "vocab_version": vocab.VOCAB_VERSION,
        "vocab_hash": vocab.vocab_hash(),
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "split_sizes": {s: sum(1 for x in samples if x.split == s) for s in tasksmod.SPLITS},
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_run_meta(args.out, cfg, "gen-data")
    log.info("wrote %d samples to %s", len(samples), args.out)
    return 0


def cmd_bootstrap(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    corpus = _load_corpus(args.data, "coarse", with_tests=False)
    policy = init_lm(_model_config(cfg), rng_stream(cfg["seed"], "init"))
    metrics = MetricsWriter(os.path.join(args.out, "metrics.jsonl"),
                            {"command": "bootstrap", "config_hash": config_hash(cfg)})
    try:
        bootstrap_supervised(
            policy, corpus, cfg["bootstrap"]["epochs"], cfg["bootstrap"]["lr"],
            batch_size=cfg["bootstrap"]["batch_size"],
            shuffle_rng=rng_stream(cfg["seed"], "bootstrap"),
            metrics_cb=metrics,
        )
    finally:
        metrics.close()
    save_checkpoint(os.path.join(args.out, "policy.ckpt"), {"policy": policy},
                    meta={"config_hash": config_hash(cfg), "stage": "bootstrap"})
    _write_run_meta(args.out, cfg, "bootstrap")
    return 0


def cmd_pretrain_disc(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    corpus = _load_corpus(args.data, "coarse", with_tests=True)
    policy = _load_model(args.policy, "policy")
    disc = init_discriminator(_model_config(cfg), rng_stream(cfg["seed"], "disc-init"))
    dcfg = DiscPretrainConfig(
        triplet_epochs=cfg["disc"]["triplet_epochs"], triplet_lr=cfg["disc"]["triplet_lr"],
        margin=cfg["disc"]["margin"], per_sample_triples=cfg["disc"]["per_sample_triples"],
        phase2_epochs=cfg["disc"]["phase2_epochs"], phase2_lr=cfg["disc"]["phase2_lr"],
        temperature=cfg["disc"]["temperature"], top_p=cfg["disc"]["top_p"],
        horizon=cfg["train"]["horizon"], batch_size=cfg["disc"]["batch_size"],
    )
    metrics = MetricsWriter(os.path.join(args.out, "metrics.jsonl"),
                            {"command": "pretrain-disc", "config_hash": config_hash(cfg)})
    try:
        pretrain_discriminator(disc, corpus, policy, dcfg, seed=cfg["seed"],
                               rng=rng_stream(cfg["seed"], "disc"), metrics_cb=metrics)
    finally:
        metrics.close()
    save_checkpoint(os.path.join(args.out, "disc.ckpt"), {"disc": disc},
                    meta={"config_hash": config_hash(cfg), "stage": "pretrain-disc"})
    _write_run_meta(args.out, cfg, "pretrain-disc")
    return 0


_RL_METHODS = {
    "rlcf": (GroundingMode.FULL, False),
    "rlcf-fixdisc": (GroundingMode.FULL, True),
    "disc-only": (GroundingMode.DISC_ONLY, False),
    "compiler-only": (GroundingMode.COMPILER_ONLY, False),
}


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.method is not None:
        cfg["train"]["method"] = args.method
    method = cfg["train"]["method"]
    os.makedirs(args.out, exist_ok=True)
    corpus = _load_corpus(args.data, "coarse", with_tests=False)
    policy = _load_model(args.policy, "policy")
    tr = cfg["train"]
    seed = cfg["seed"]
    metrics = MetricsWriter(
        os.path.join(args.out, "metrics.jsonl"),
        {"command": "train", "method": method, "config_hash": config_hash(cfg),
         "budget_hash": budget_hash(cfg)},
        append=bool(args.resume),
    )
    try:
        if method in _RL_METHODS:
            mode, freeze = _RL_METHODS[method]
            disc = None
            if mode is not GroundingMode.COMPILER_ONLY:
                if args.disc is None:
                    raise ConfigError(f"--disc checkpoint is required for method {method!r}")
                disc = _load_model(args.disc, "disc")
            rl_cfg = RlcfConfig(
                episodes=tr["episodes"], batch_size=tr["batch_size"],
                lr_policy=tr["lr_policy"], lr_critic=tr["lr_critic"],
                lr_disc=tr["lr_disc"], gamma=tr["gamma"], gae_lambda=tr["gae_lambda"],
                clip_eps=tr["clip_eps"], beta_init=tr["beta_init"],
                kl_target=tr["kl_target"], kl_kp=tr["kl_kp"],
                kl_adaptive=tr["kl_adaptive"], freeze_disc=freeze,
                horizon=tr["horizon"], temperature=tr["temperature"],
                top_p=tr["top_p"], unused_penalty=tr["unused_penalty"],
                inner_epochs=tr["inner_epochs"], mode=mode,
            )
            corpus_rng = rng_stream(seed, "corpus")
            rollout_rng = rng_stream(seed, "rollout")
            state = TrainState(beta=rl_cfg.beta_init)
            critic = None
            if args.resume:
                ckpt_path = os.path.join(args.out, "checkpoint.ckpt")
                models, rng_states, meta = load_checkpoint(ckpt_path)
                if meta.get("config_hash") != config_hash(cfg):
                    raise ConfigError("resume refused: config hash does not match checkpoint")
                policy = models["policy"]
                critic = models.get("critic")
                disc = models.get("disc", disc)
                state = TrainState(**meta["train_state"])
                corpus_rng = cfgmod.restore_rng(rng_states["corpus"])
                rollout_rng = cfgmod.restore_rng(rng_states["rollout"])

            def checkpoint_cb(train_state, pol, crit, dsc):
                models = {"policy": pol, "critic": crit}
                if dsc is not None:
                    models["disc"] = dsc
                save_checkpoint(
                    os.path.join(args.out, "checkpoint.ckpt"), models,
                    rng_states={"corpus": cfgmod.rng_state(corpus_rng),
                                "rollout": cfgmod.rng_state(rollout_rng)},
                    meta={"config_hash": config_hash(cfg),
                          "train_state": {"episode": train_state.episode,
                                          "beta": train_state.beta,
                                          "batch_index": train_state.batch_index}},
                )

            policy, critic, disc = train_rlcf(
                rl_cfg, corpus, policy, disc,
                corpus_rng=corpus_rng, rollout_rng=rollout_rng,
                init_rng=rng_stream(seed, "init"), critic=critic,
                metrics_cb=metrics, checkpoint_cb=checkpoint_cb,
                checkpoint_every=tr["checkpoint_every"], state=state,
            )
            final = {"policy": policy, "critic": critic}
            if disc is not None:
                final["disc"] = disc
        elif method == "mono":
            train_mono(policy, corpus, tr["episodes"], cfg["bootstrap"]["lr"],
                       batch_size=tr["batch_size"],
                       corpus_rng=rng_stream(seed, "corpus"), metrics_cb=metrics)
            final = {"policy": policy}
        elif method == "ramp":
            train_bipolar_ramp(
                policy, corpus, tr["episodes"], tr["lr_policy"],
                batch_size=tr["batch_size"], horizon=tr["horizon"],
                temperature=tr["temperature"], top_p=tr["top_p"],
                corpus_rng=rng_stream(seed, "corpus"),
                rollout_rng=rng_stream(seed, "rollout"), metrics_cb=metrics,
            )
            final = {"policy": policy}
        elif method == "coderl":
            critic = init_compile_critic(policy, rng_stream(seed, "init"))
            pretrain_compile_critic(
                critic, policy, corpus, tr["coderl_critic_samples"],
                lr=tr["lr_critic"], epochs=tr["coderl_critic_epochs"],
                batch_size=tr["batch_size"], horizon=tr["horizon"],
                corpus_rng=rng_stream(seed, "coderl"),
                rollout_rng=rng_stream(seed, "coderl"), metrics_cb=metrics,
            )
            train_coderl(
                policy, critic, corpus, tr["episodes"], tr["lr_policy"],
                batch_size=tr["batch_size"], horizon=tr["horizon"],
                temperature=tr["temperature"], top_p=tr["top_p"],
                corpus_rng=rng_stream(seed, "corpus"),
                rollout_rng=rng_stream(seed, "rollout"), metrics_cb=metrics,
            )
            final = {"policy": policy, "critic": critic}
        else:  # pragma: no cover - schema rejects unknown methods
            raise ConfigError(f"unknown method {method!r}")
    finally:
        metrics.close()
    save_checkpoint(os.path.join(args.out, "policy.ckpt"), final,
                    meta={"config_hash": config_hash(cfg), "stage": "train",
                          "method": method})
    _write_run_meta(args.out, cfg, "train", method=method)
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    policy = _load_model(args.policy, "policy")
    ev = cfg["eval"]
    if ev["finetune_epochs"] > 0:
        finetune_tasks = _load_corpus(args.data, "finetune", with_tests=False)
        policy = fine_tune(
            policy.clone(), finetune_tasks, ev["finetune_epochs"], ev["finetune_lr"],
            batch_size=cfg["bootstrap"]["batch_size"],
            shuffle_rng=rng_stream(cfg["seed"], "finetune"),
        )
    test_tasks = _load_corpus(args.data, "test", with_tests=True)
    report = evaluate_model(
        policy, test_tasks, ev["n"], ev["k_list"], ev["temperatures"],
        top_p=ev["top_p"], horizon=ev["horizon"], fuel=ev["fuel"],
        seed=cfg["seed"], workers=args.workers,
    )
    profile = error_profile(
        policy, test_tasks, ev["n"], report.chosen_temperature[str(max(report.k_list))],
        top_p=ev["top_p"], horizon=ev["horizon"], seed=cfg["seed"],
    )
    report.error_profile = profile
    write_report(os.path.join(args.out, "eval_report.json"), report,
                 header={"config_hash": config_hash(cfg)})
    write_table(os.path.join(args.out, "eval_table.csv"), report)
    _write_run_meta(args.out, cfg, "eval")
    return 0


def cmd_profile_errors(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    policy = _load_model(args.policy, "policy")
    test_tasks = _load_corpus(args.data, "test", with_tests=True)
    profile = error_profile(
        policy, test_tasks, cfg["eval"]["n"], args.temperature,
        top_p=cfg["eval"]["top_p"], horizon=cfg["eval"]["horizon"], seed=cfg["seed"],
    )
    doc = {"version": FORMAT_VERSION, "config_hash": config_hash(cfg),
           "temperature": args.temperature, "n": cfg["eval"]["n"],
           "mean_diagnostics_per_response": profile}
    with open(os.path.join(args.out, "error_profile.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "error_profile.csv"), "w", encoding="utf-8") as fh:
        fh.write("category,mean_per_response\n")
        for kind in sorted(profile):
            fh.write(f"{kind},{profile[kind]:.6f}\n")
    _write_run_meta(args.out, cfg, "profile-errors")
    return 0


def cmd_report(args) -> int:
    summary = reportmod.emit_report(args.runs, args.out)
    missing = {r["dir"]: r["issues"] for r in summary["runs"] if r["issues"]}
    for run_dir, issues in missing.items():
        log.warning("%s: %s", run_dir, "; ".join(issues))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rlcf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, policy=False):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (dotted path)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", required=True, help="gen-data output directory")
        if policy:
            p.add_argument("--policy", required=True, help="policy checkpoint")

    p = sub.add_parser("gen-data", help="generate the task dataset")
    common(p, data=False)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("bootstrap", help="supervised policy initialization")
    common(p)
    p.set_defaults(fn=cmd_bootstrap)

    p = sub.add_parser("pretrain-disc", help="comparator pretraining")
    common(p, policy=True)
    p.set_defaults(fn=cmd_pretrain_disc)

    p = sub.add_parser("train", help="run a training method")
    common(p, policy=True)
    p.add_argument("--method", choices=cfgmod.METHODS, default=None)
    p.add_argument("--disc", default=None, help="comparator checkpoint")
    p.add_argument("--resume", action="store_true",
                   help="resume from this run's checkpoint.ckpt")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="fine-tune on the held-out split, then test")
    common(p, policy=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("profile-errors", help="diagnostic counts per response")
    common(p, policy=True)
    p.add_argument("--temperature", type=float, default=0.6)
    p.set_defaults(fn=cmd_profile_errors)

    p = sub.add_parser("report", help="emit comparison tables across runs")
    p.add_argument("--out", required=True)
    p.add_argument("runs", nargs="+", help="run directories")
    p.set_defaults(fn=cmd_report)

    return parser


def run_command(argv) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, ValueError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
