"""Data-only reporting: comparison tables across runs and per-iteration
error-rate series for overlay plotting. No graphics are rendered."""

from __future__ import annotations

import json
import os

from rlcf.evaluation import EvalReport


def _read_metrics(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "header":
                continue
            records.append(rec)
    return records


def collect_run(run_dir: str) -> tuple[dict, list[str]]:
    """Gather one run directory's artifacts; returns (data, issues)."""
    issues = []
    data: dict = {"dir": run_dir, "method": None, "config_hash": None,
                  "records": [], "eval": None}
    run_meta = os.path.join(run_dir, "run.json")
    if os.path.exists(run_meta):
        with open(run_meta, encoding="utf-8") as fh:
            meta = json.load(fh)
        data["method"] = meta.get("method") or meta.get("command")
        data["config_hash"] = meta.get("config_hash")
    else:
        issues.append("missing run.json")
    metrics = os.path.join(run_dir, "metrics.jsonl")
    if os.path.exists(metrics):
        data["records"] = _read_metrics(metrics)
    else:
        issues.append("missing metrics.jsonl")
    eval_path = os.path.join(run_dir, "eval_report.json")
    if os.path.exists(eval_path):
        with open(eval_path, encoding="utf-8") as fh:
            data["eval"] = EvalReport.from_json(json.load(fh))
    else:
        issues.append("missing eval_report.json")
    return data, issues


def emit_report(run_dirs: list[str], out_dir: str) -> dict:
    """Write comparison.csv, error_series.csv and report.json; partial inputs
    produce partial outputs with the gaps recorded per directory."""
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    all_issues: dict[str, list[str]] = {}
    for run_dir in run_dirs:
        data, issues = collect_run(run_dir)
        runs.append(data)
        if issues:
            all_issues[run_dir] = issues

    with open(os.path.join(out_dir, "comparison.csv"), "w", encoding="utf-8") as fh:
        fh.write("run,method,metric,k,temperature,value\n")
        for run in runs:
            report = run["eval"]
            if report is None:
                continue
            for metric, k, temp, value in report.table_rows():
                fh.write(f"{run['dir']},{run['method']},{metric},{k},"
                         f"{format(temp, 'g')},{value:.6f}\n")

    with open(os.path.join(out_dir, "error_series.csv"), "w", encoding="utf-8") as fh:
        fh.write("run,method,episode,compile_error_rate\n")
        for run in runs:
            for rec in run["records"]:
                rate = rec.get("compile_rate")
                if rate is None or rate != rate:  # missing or NaN
                    continue
                fh.write(f"{run['dir']},{run['method']},{rec['episode']},"
                         f"{1.0 - rate:.6f}\n")

    summary = {
        "version": 1,
        "runs": [
            {
                "dir": run["dir"], "method": run["method"],
                "config_hash": run["config_hash"],
                "metric_records": len(run["records"]),
                "has_eval": run["eval"] is not None,
                "issues": all_issues.get(run["dir"], []),
            }
            for run in runs
        ],
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary
