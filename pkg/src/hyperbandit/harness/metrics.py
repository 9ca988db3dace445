"""Run metrics: normalized reward, regret, timings and per-period spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hypernet import Hypernetwork
from ..linalg import singular_values
from ..periods import N_PERIODS, period_embeddings
from .runner import RunTrace


class MetricError(ValueError):
    """A metric is undefined for the given input."""


def normalized_accumulated_reward(policy_trace: RunTrace, random_trace: RunTrace) -> float:
    """Total policy reward over the random baseline's total on the same stream."""
    if len(policy_trace) != len(random_trace):
        raise MetricError(
            f"traces differ in length ({len(policy_trace)} vs {len(random_trace)})"
        )
    denom = random_trace.total_reward
    if denom == 0:
        raise MetricError("random baseline collected no reward; the ratio is undefined")
    return policy_trace.total_reward / denom


@dataclass(frozen=True)
class Regret:
    per_step: np.ndarray
    cumulative: np.ndarray

    def window_mean(self, start: int, stop: int) -> float:
        return float(self.per_step[start:stop].mean())


def regret(trace: RunTrace, env) -> Regret:
    """Gap between the best candidate's true reward and the chosen one's, per step."""
    if not getattr(env, "has_ground_truth", False):
        raise MetricError("regret needs an environment with known true rewards")
    per_step = np.empty(len(trace))
    for k, t in enumerate(trace.t):
        step = env.step(int(t))
        values = env.candidate_rewards(step)
        chosen = env.expected_reward(step.user_id, int(trace.item_id[k]), step.period)
        per_step[k] = values.max() - chosen
    return Regret(per_step=per_step, cumulative=np.cumsum(per_step))


@dataclass(frozen=True)
class TimingReport:
    mean_step_seconds: float
    mean_training_seconds_per_step: float
    total_training_seconds: float


def timing_report(trace: RunTrace) -> TimingReport:
    if len(trace) == 0:
        raise MetricError("timing report of an empty trace")
    total_train = float(sum(b.train_seconds for b in trace.buffers))
    return TimingReport(
        mean_step_seconds=float(np.mean(trace.step_seconds)),
        mean_training_seconds_per_step=total_train / len(trace),
        total_training_seconds=total_train,
    )


def svd_report(net: Hypernetwork, embedding_seed: int) -> np.ndarray:
    """Descending singular values of each period's generated matrix, shape (35, min(d_a, d_u))."""
    thetas, _ = net.forward_batch(period_embeddings(embedding_seed, net.widths[0]))
    return np.stack([singular_values(thetas[p]) for p in range(N_PERIODS)])
