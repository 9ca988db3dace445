"""Agents: policies wrapped behind the act / observe / end_buffer protocol
the runner drives."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from ..envs import Step
from ..hypernet import (
    DEFAULT_HIDDEN,
    AdamState,
    Hypernetwork,
    TrainConfig,
    TrainingBatch,
    TrainResult,
    labels_from_step,
    train_on_buffer,
)
from ..periods import period_embeddings
from ..policy import LatentUCBPolicy, LinUCBPolicy, RandomPolicy


class Agent(Protocol):
    def act(self, step: Step) -> int: ...

    def observe(self, step: Step, index: int, reward: int) -> None: ...

    def end_buffer(self) -> TrainResult | None: ...


class HyperBanditAgent:
    """Hypernetwork-generated preference matrices driving the latent UCB policy.

    Within a buffer the hypernetwork is fixed, so the 35 matrices are
    generated once per buffer and reused. At buffer end the hypernetwork is
    trained on the buffer (unless ``freeze`` is set) and the buffer is
    released.
    """

    def __init__(
        self,
        item_features: np.ndarray,
        d_u: int,
        l_a: int = 10,
        alpha: float = 0.1,
        lam: float = 0.1,
        tau: int | None = 2,
        hidden: Sequence[int] = DEFAULT_HIDDEN,
        embedding_seed: int = 0,
        hypernet_seed: int = 0,
        train_config: TrainConfig = TrainConfig(),
        freeze: bool = False,
    ):
        self.item_features = np.asarray(item_features, dtype=np.float64)
        n_items, o_a = self.item_features.shape
        self.policy = LatentUCBPolicy(n_items, o_a, l_a, alpha=alpha, lam=lam)
        self.net = Hypernetwork(o_a + l_a, d_u, tau=tau, hidden=hidden, seed=hypernet_seed)
        self.embeddings = period_embeddings(embedding_seed, self.net.widths[0])
        self.train_config = train_config
        self.freeze = freeze
        self.adam = AdamState(lr=train_config.lr)
        self._thetas: np.ndarray | None = None
        self._clear_buffer()

    def _clear_buffer(self) -> None:
        self._periods: list[int] = []
        self._users: list[np.ndarray] = []
        self._cands: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []

    def thetas(self) -> np.ndarray:
        if self._thetas is None:
            self._thetas, _ = self.net.forward_batch(self.embeddings)
        return self._thetas

    def act(self, step: Step) -> int:
        theta = self.thetas()[step.period]
        return self.policy.select(step.user_context, step.candidate_ids, step.candidate_features, theta)

    def observe(self, step: Step, index: int, reward: int) -> None:
        theta = self.thetas()[step.period]
        item = int(step.candidate_ids[index])
        self.policy.update(item, step.user_context, step.candidate_features[index], theta, reward)
        self._periods.append(step.period)
        self._users.append(step.user_context)
        self._cands.append(step.candidate_ids)
        self._labels.append(labels_from_step(len(step.candidate_ids), index, reward))

    def buffer_batch(self) -> TrainingBatch:
        cands = np.stack(self._cands)
        # Latent features frozen at their buffer-close values.
        contexts = np.concatenate(
            [self.item_features[cands], self.policy.latent_features(cands)], axis=2
        )
        return TrainingBatch(
            periods=np.asarray(self._periods, dtype=np.int64),
            user_contexts=np.stack(self._users),
            candidate_contexts=contexts,
            labels=np.stack(self._labels),
        )

    @property
    def buffer_len(self) -> int:
        return len(self._periods)

    def end_buffer(self) -> TrainResult | None:
        result = None
        if not self.freeze and self.buffer_len >= self.train_config.min_buffer:
            result = train_on_buffer(
                self.net, self.buffer_batch(), self.embeddings, self.train_config, self.adam
            )
            self._thetas = None
        self._clear_buffer()
        return result


class LinUCBAgent:
    def __init__(self, d_u: int, o_a: int, alpha: float = 0.1, lam: float = 0.1):
        self.policy = LinUCBPolicy(d_u, o_a, alpha=alpha, lam=lam)

    def act(self, step: Step) -> int:
        return self.policy.select(step.user_context, step.candidate_features)

    def observe(self, step: Step, index: int, reward: int) -> None:
        self.policy.update(step.user_context, step.candidate_features[index], reward)

    def end_buffer(self) -> None:
        return None


class RandomAgent:
    def __init__(self, seed: int):
        self.policy = RandomPolicy(seed)

    def act(self, step: Step) -> int:
        return self.policy.select(len(step.candidate_ids))

    def observe(self, step: Step, index: int, reward: int) -> None:
        pass

    def end_buffer(self) -> None:
        return None
