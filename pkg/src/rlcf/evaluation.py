"""Held-out evaluation: unbiased metric@k estimation over the three tiers
(compiles / executes / passes), temperature selection, and per-category
diagnostic profiling of generated responses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from rlcf.lang.checker import DiagnosticKind, compile_check, prompt_code
from rlcf.lang.interpreter import DEFAULT_FUEL, ExecStatus, execute
from rlcf.nn.models import Model
from rlcf.nn.sampling import sample_response
from rlcf.tasks import TaskSample
from rlcf.training import _supervised_steps

DEFAULT_TEMPERATURES = (0.2, 0.6, 0.8)
METRICS = ("pass", "exec", "comp")


def metric_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimate of P(at least one of k draws succeeds) from n samples
    with c successes: 1 - C(n-c, k)/C(n, k), in stable product form."""
    if not 0 <= c <= n:
        raise ValueError("need 0 <= c <= n")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if n - c < k:
        return 1.0
    return float(1.0 - np.prod(1.0 - k / np.arange(n - c + 1, n + 1, dtype=np.float64)))


@dataclass(frozen=True)
class TierCounts:
    n: int
    comp: int
    exec: int
    passed: int


def classify_response(sample: TaskSample, response, fuel: int = DEFAULT_FUEL):
    """(compiles, executes, passes) for one generated response."""
    result = compile_check(list(sample.prompt), list(response))
    if not result.ok:
        return False, False, False
    program = prompt_code(list(sample.prompt)) + list(response)
    executes = passes = True
    for test in sample.tests:
        run = execute(program, list(test.input), fuel)
        if run.status is not ExecStatus.COMPLETED:
            return True, False, False
        if run.outputs != tuple(test.output):
            passes = False
    return True, executes, passes


@dataclass
class EvalReport:
    n: int
    k_list: tuple[int, ...]
    temperatures: tuple[float, ...]
    seed: int
    estimates: dict  # metric -> {k -> {temperature -> value}}
    chosen_temperature: dict  # k -> temperature maximizing pass@k
    error_profile: dict = field(default_factory=dict)

    def value(self, metric: str, k: int, temperature: float | None = None) -> float:
        temp = self.chosen_temperature[str(k)] if temperature is None else temperature
        return self.estimates[metric][str(k)][_tkey(temp)]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k_list": list(self.k_list),
            "temperatures": list(self.temperatures),
            "seed": self.seed,
            "estimates": self.estimates,
            "chosen_temperature": self.chosen_temperature,
            "error_profile": self.error_profile,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        return cls(
            n=data["n"], k_list=tuple(data["k_list"]),
            temperatures=tuple(data["temperatures"]), seed=data["seed"],
            estimates=data["estimates"], chosen_temperature=data["chosen_temperature"],
            error_profile=data.get("error_profile", {}),
        )

    def table_rows(self) -> list[tuple[str, int, float, float]]:
        rows = []
        for metric in METRICS:
            for k in self.k_list:
                for temp in self.temperatures:
                    rows.append((metric, k, temp, self.estimates[metric][str(k)][_tkey(temp)]))
        return rows


def _tkey(temperature: float) -> str:
    return format(float(temperature), "g")


def _task_rng(seed: int, stream_key: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, 3331, stream_key, index))
    ))


def sample_tier_counts(
    policy: Model,
    tasks: list[TaskSample],
    n: int,
    temperature: float,
    *,
    top_p: float = 0.95,
    horizon: int = 64,
    fuel: int = DEFAULT_FUEL,
    seed: int = 0,
    stream_key: int = 0,
    task_indices=None,
    sample_fn=None,
) -> list[TierCounts]:
    """n samples per task at one temperature, classified into the three tiers.

    task_indices carry each task's position in the full evaluation set so
    chunked parallel workers reproduce the sequential sampling streams.
    """
    counts = []
    if task_indices is None:
        task_indices = range(len(tasks))
    rngs = [_task_rng(seed, stream_key, i) for i in task_indices]
    for task, rng in zip(tasks, rngs):
        comp = ex = ok = 0
        for _ in range(n):
            if sample_fn is not None:
                response = tuple(sample_fn(task.prompt, temperature, rng))
            else:
                response = sample_response(
                    policy, list(task.prompt), max_len=horizon, rng=rng,
                    temperature=temperature, top_p=top_p,
                ).tokens
            c, e, p = classify_response(task, response, fuel)
            comp += c
            ex += e
            ok += p
        counts.append(TierCounts(n=n, comp=comp, exec=ex, passed=ok))
    return counts


_WORKER_CTX: dict = {}


def _worker_init(model_blob, tasks, options):
    from rlcf.nn import autodiff as ad_mod
    from rlcf.nn.models import ModelConfig, Role

    params = {name: ad_mod.parameter(arr) for name, arr in model_blob["params"].items()}
    model = Model(ModelConfig(**model_blob["config"]), Role(model_blob["role"]), params)
    _WORKER_CTX.update(model=model, tasks=tasks, options=options)


def _worker_tier_chunk(indices: list[int], temp_index: int, temperature: float):
    opts = _WORKER_CTX["options"]
    tasks = [_WORKER_CTX["tasks"][i] for i in indices]
    counts = sample_tier_counts(
        _WORKER_CTX["model"], tasks, opts["n"], temperature,
        top_p=opts["top_p"], horizon=opts["horizon"], fuel=opts["fuel"],
        seed=opts["seed"], stream_key=temp_index, task_indices=indices,
    )
    return {i: (c.n, c.comp, c.exec, c.passed) for i, c in zip(indices, counts)}


def _parallel_tier_counts(policy, tasks, temperatures, options, workers):
    from concurrent.futures import ProcessPoolExecutor

    blob = {
        "config": policy.config.to_dict(),
        "role": policy.role.value,
        "params": {name: p.data for name, p in policy.params.items()},
    }
    chunks = [list(c) for c in np.array_split(np.arange(len(tasks)), workers) if len(c)]
    out: dict[int, list[TierCounts]] = {}
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_worker_init, initargs=(blob, tasks, options)
    ) as pool:
        futures = {}
        for temp_index, temp in enumerate(temperatures):
            for chunk in chunks:
                fut = pool.submit(_worker_tier_chunk, [int(i) for i in chunk],
                                  temp_index, float(temp))
                futures[fut] = temp_index
        merged: dict[int, dict[int, tuple]] = {i: {} for i in range(len(temperatures))}
        for fut, temp_index in futures.items():
            merged[temp_index].update(fut.result())
    for temp_index in range(len(temperatures)):
        out[temp_index] = [TierCounts(*merged[temp_index][i]) for i in range(len(tasks))]
    return out


def evaluate_model(
    policy: Model,
    test_tasks: list[TaskSample],
    n: int,
    k_list,
    temperatures=DEFAULT_TEMPERATURES,
    *,
    top_p: float = 0.95,
    horizon: int = 64,
    fuel: int = DEFAULT_FUEL,
    seed: int = 0,
    sample_fn=None,
    workers: int = 1,
) -> EvalReport:
    """Estimate pass/exec/comp@k per temperature and pick, for each k, the
    temperature that maximizes pass@k (ties go to the lower temperature).

    Sampling and grading fan out over (task, temperature) when workers > 1;
    per-(task, temperature) seeding keeps the result identical to workers=1.
    """
    k_list = tuple(int(k) for k in k_list)
    if n <= max(k_list):
        raise ValueError("need n > max(k_list) for the unbiased estimator")
    estimates = {metric: {str(k): {} for k in k_list} for metric in METRICS}
    parallel = None
    if workers > 1 and sample_fn is None and len(test_tasks) > 1:
        options = {"n": n, "top_p": top_p, "horizon": horizon, "fuel": fuel, "seed": seed}
        parallel = _parallel_tier_counts(policy, test_tasks, temperatures, options, workers)
    for temp_index, temp in enumerate(temperatures):
        if parallel is not None:
            tier_counts = parallel[temp_index]
        else:
            tier_counts = sample_tier_counts(
                policy, test_tasks, n, temp, top_p=top_p, horizon=horizon,
                fuel=fuel, seed=seed, stream_key=temp_index, sample_fn=sample_fn,
            )
        for metric, attr in (("pass", "passed"), ("exec", "exec"), ("comp", "comp")):
            for k in k_list:
                vals = [metric_at_k(tc.n, getattr(tc, attr), k) for tc in tier_counts]
                estimates[metric][str(k)][_tkey(temp)] = float(np.mean(vals))
    chosen = {}
    for k in k_list:
        best = max(
            sorted(temperatures),
            key=lambda t: (estimates["pass"][str(k)][_tkey(t)], -t),
        )
        chosen[str(k)] = float(best)
    return EvalReport(
        n=n, k_list=k_list, temperatures=tuple(float(t) for t in temperatures),
        seed=seed, estimates=estimates, chosen_temperature=chosen,
    )


def error_profile(
    policy: Model,
    test_tasks: list[TaskSample],
    n: int,
    temperature: float,
    *,
    top_p: float = 0.95,
    horizon: int = 64,
    seed: int = 0,
    sample_fn=None,
) -> dict[str, float]:
    """Mean number of diagnostics per generated response, by category."""
    totals = {kind.value: 0 for kind in DiagnosticKind}
    responses = 0
    rngs = [_task_rng(seed, 0, i) for i in range(len(test_tasks))]
    for task, rng in zip(test_tasks, rngs):
        for _ in range(n):
            if sample_fn is not None:
                response = tuple(sample_fn(task.prompt, temperature, rng))
            else:
                response = sample_response(
                    policy, list(task.prompt), max_len=horizon, rng=rng,
                    temperature=temperature, top_p=top_p,
                ).tokens
            result = compile_check(list(task.prompt), list(response))
            for diag in result.diagnostics:
                totals[diag.kind.value] += 1
            responses += 1
    return {kind: count / responses for kind, count in totals.items()}


def fine_tune(
    policy: Model,
    finetune_tasks: list[TaskSample],
    epochs: int,
    lr: float,
    *,
    batch_size: int = 8,
    shuffle_rng=None,
) -> Model:
    """Supervised pass over the fine-tuning split (the pre-test protocol)."""
    if epochs == 0 or not finetune_tasks:
        return policy
    seq = []
    for _ in range(epochs):
        if shuffle_rng is not None:
            order = shuffle_rng.permutation(len(finetune_tasks))
        else:
            order = range(len(finetune_tasks))
        seq.extend(finetune_tasks[i] for i in order)
    return _supervised_steps(policy, seq, lr, batch_size)


def write_report(path, report: EvalReport, *, header: dict | None = None) -> None:
    doc = {"format": "eval_report", "version": 1}
    if header:
        doc.update(header)
    doc.update(report.to_json())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_table(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,k,temperature,value\n")
        for metric, k, temp, value in report.table_rows():
            fh.write(f"{metric},{k},{_tkey(temp)},{value:.6f}\n")
