"""Result files of a run.

``trace.csv``, ``buffers.csv``, ``regret.csv``, ``svd.csv`` and
``summary.json`` depend only on the configuration and seeds. Wall-clock
measurements go to ``timings.json`` so that repeated runs produce
byte-identical copies of the others.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .agents import HyperBanditAgent
from .metrics import normalized_accumulated_reward, regret, svd_report, timing_report
from .runner import BufferRecord, RunResult, RunTrace

TRACE_COLUMNS = ("t", "period", "user_id", "item_id", "reward", "cumulative_reward")
BUFFER_COLUMNS = ("n", "steps", "epochs", "train_loss", "validation_loss")


def write_trace(trace: RunTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        rows = zip(
            trace.t.tolist(),
            trace.period.tolist(),
            trace.user_id.tolist(),
            trace.item_id.tolist(),
            trace.reward.tolist(),
            trace.cumulative_reward.tolist(),
        )
        writer.writerows(rows)


def read_trace(path: str | Path) -> RunTrace:
    """Read a ``trace.csv`` back. Step times are not stored and come back as zeros."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[int(v) for v in row] for row in reader], dtype=np.int64).reshape(-1, 6)
    trace = RunTrace(
        t=data[:, 0],
        period=data[:, 1],
        user_id=data[:, 2],
        item_id=data[:, 3],
        reward=data[:, 4],
        step_seconds=np.zeros(len(data)),
    )
    if not np.array_equal(trace.cumulative_reward, data[:, 5]):
        raise ValueError(f"{path}: cumulative_reward column is inconsistent with rewards")
    return trace


def write_buffers(buffers: list[BufferRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BUFFER_COLUMNS)
        for b in buffers:
            writer.writerow([b.n, b.steps, b.epochs, repr(b.train_loss), repr(b.validation_loss)])


def read_buffers(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {"n": int(r["n"]), "steps": int(r["steps"]), "epochs": int(r["epochs"]),
             "train_loss": float(r["train_loss"]), "validation_loss": float(r["validation_loss"])}
            for r in csv.DictReader(fh)
        ]


def write_svd(sigma: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["period", *(f"s{i}" for i in range(sigma.shape[1]))])
        for p, row in enumerate(sigma):
            writer.writerow([p, *(repr(float(v)) for v in row)])


def read_svd(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([[float(v) for v in row[1:]] for row in reader])


def _json_number(x: float) -> float | None:
    return None if math.isnan(x) else x


def summarize(result: RunResult) -> dict[str, Any]:
    trace = result.trace
    epochs = [b.epochs for b in trace.buffers if b.epochs > 0]
    summary: dict[str, Any] = {
        "policy": result.config.policy,
        "n_steps": len(trace),
        "total_reward": trace.total_reward,
        "random_total_reward": result.baseline.total_reward,
        "normalized_accumulated_reward": normalized_accumulated_reward(trace, result.baseline),
        "n_buffers": len(trace.buffers),
        "mean_epochs": float(np.mean(epochs)) if epochs else 0.0,
        "final_cumulative_regret": None,
        "mean_regret_first_quarter": None,
        "mean_regret_last_quarter": None,
    }
    if result.env.has_ground_truth:
        reg = regret(trace, result.env)
        quarter = max(len(trace) // 4, 1)
        summary["final_cumulative_regret"] = float(reg.cumulative[-1])
        summary["mean_regret_first_quarter"] = reg.window_mean(0, quarter)
        summary["mean_regret_last_quarter"] = reg.window_mean(len(trace) - quarter, len(trace))
    summary["buffers"] = [
        {"n": b.n, "epochs": b.epochs, "train_loss": _json_number(b.train_loss),
         "validation_loss": _json_number(b.validation_loss)}
        for b in trace.buffers
    ]
    summary["config"] = result.config.to_dict()
    return summary


def write_outputs(result: RunResult, out_dir: str | Path) -> dict[str, Any]:
    """Write every result file into ``out_dir``; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(result.trace, out / "trace.csv")
    write_buffers(result.trace.buffers, out / "buffers.csv")
    summary = summarize(result)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")

    timing = timing_report(result.trace)
    timings = {
        "mean_step_seconds": timing.mean_step_seconds,
        "mean_training_seconds_per_step": timing.mean_training_seconds_per_step,
        "total_training_seconds": timing.total_training_seconds,
        "buffer_training_seconds": [b.train_seconds for b in result.trace.buffers],
    }
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")

    if result.env.has_ground_truth:
        reg = regret(result.trace, result.env)
        with open(out / "regret.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "regret", "cumulative_regret"])
            for t, r, c in zip(result.trace.t.tolist(), reg.per_step, reg.cumulative):
                writer.writerow([t, repr(float(r)), repr(float(c))])

    if isinstance(result.agent, HyperBanditAgent):
        result.agent.net.save(out / "checkpoint.npz")
        write_svd(svd_report(result.agent.net, result.config.seeds.embedding), out / "svd.csv")
    return summary
