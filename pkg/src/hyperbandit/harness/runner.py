"""The online loop: per step act, observe, update; per buffer, train."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..envs import ReplayEnv, SyntheticConfig, SyntheticEnv
from .agents import Agent, HyperBanditAgent, LinUCBAgent, RandomAgent
from .config import ConfigError, ExperimentConfig


@dataclass(frozen=True)
class BufferRecord:
    n: int
    steps: int
    epochs: int
    train_loss: float
    validation_loss: float
    # Wall time; excluded from deterministic outputs.
    train_seconds: float


@dataclass
class RunTrace:
    """Per-step and per-buffer record of one run."""

    t: np.ndarray
    period: np.ndarray
    user_id: np.ndarray
    item_id: np.ndarray
    reward: np.ndarray
    step_seconds: np.ndarray
    buffers: list[BufferRecord] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.t)
        for name in ("period", "user_id", "item_id", "reward", "step_seconds"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trace column {name} has the wrong length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace steps must be strictly increasing")
        if np.any((self.reward != 0) & (self.reward != 1)):
            raise ValueError("rewards must be 0 or 1")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def cumulative_reward(self) -> np.ndarray:
        return np.cumsum(self.reward)

    @property
    def total_reward(self) -> int:
        return int(self.reward.sum())


def make_env(config: ExperimentConfig) -> SyntheticEnv | ReplayEnv:
    env_args = dict(config.environment)
    kind = env_args.pop("kind")
    if kind == "replay":
        env = ReplayEnv.from_files(
            env_args["interactions"],
            env_args["users"],
            env_args["items"],
            n_candidates=config.n_candidates,
            seed=config.seeds.environment,
        )
        if env.d_u != config.d_u:
            raise ConfigError(f"d_u={config.d_u} but the user table has {env.d_u} features")
        if env.o_a != config.o_a:
            raise ConfigError(f"o_a={config.o_a} but the item table has {env.o_a} features")
        return env
    latent = env_args.pop("latent_dim", 10)
    synth = SyntheticConfig(
        d_u=config.d_u,
        o_a=config.o_a,
        l_a=latent,
        n_candidates=config.n_candidates,
        seed=config.seeds.environment,
        **env_args,
    )
    return SyntheticEnv(synth)


def make_agent(config: ExperimentConfig, env) -> Agent:
    if config.policy == "random":
        return RandomAgent(config.seeds.policy)
    if config.policy == "linucb":
        return LinUCBAgent(config.d_u, config.o_a, alpha=config.alpha, lam=config.lam)
    return HyperBanditAgent(
        env.item_features,
        config.d_u,
        l_a=config.l_a,
        alpha=config.alpha,
        lam=config.lam,
        tau=config.tau,
        hidden=config.hidden,
        embedding_seed=config.seeds.embedding,
        hypernet_seed=config.seeds.hypernetwork,
        train_config=config.training,
        freeze=config.freeze_hypernetwork,
    )


def run_agent(env, agent: Agent, n_steps: int, buffer_size: int) -> RunTrace:
    """Drive ``agent`` through steps ``0..n_steps-1`` of ``env``.

    The buffer closes every ``buffer_size`` steps and after the final step.
    Step timing covers selection and the bandit update only.
    """
    if env.n_steps is not None:
        n_steps = min(n_steps, env.n_steps)
    cols = {name: np.zeros(n_steps, dtype=np.int64) for name in ("period", "user", "item", "reward")}
    seconds = np.zeros(n_steps)
    buffers: list[BufferRecord] = []
    in_buffer = 0
    for t in range(n_steps):
        step = env.step(t)
        start = time.perf_counter()
        index = agent.act(step)
        elapsed = time.perf_counter() - start
        item = int(step.candidate_ids[index])
        reward = env.feedback(step, item)
        start = time.perf_counter()
        agent.observe(step, index, reward)
        seconds[t] = elapsed + time.perf_counter() - start
        cols["period"][t] = step.period
        cols["user"][t] = step.user_id
        cols["item"][t] = item
        cols["reward"][t] = reward
        in_buffer += 1
        if in_buffer == buffer_size or t == n_steps - 1:
            start = time.perf_counter()
            result = agent.end_buffer()
            train_seconds = time.perf_counter() - start
            buffers.append(
                BufferRecord(
                    n=len(buffers),
                    steps=in_buffer,
                    epochs=result.epochs if result else 0,
                    train_loss=result.train_loss if result else float("nan"),
                    validation_loss=result.validation_loss if result else float("nan"),
                    train_seconds=train_seconds,
                )
            )
            in_buffer = 0
    return RunTrace(
        t=np.arange(n_steps, dtype=np.int64),
        period=cols["period"],
        user_id=cols["user"],
        item_id=cols["item"],
        reward=cols["reward"],
        step_seconds=seconds,
        buffers=buffers,
    )


@dataclass
class RunResult:
    config: ExperimentConfig
    env: SyntheticEnv | ReplayEnv
    agent: Agent
    trace: RunTrace
    baseline: RunTrace


def run(config: ExperimentConfig, env=None) -> RunResult:
    """Run the configured policy and the seeded random baseline on the same stream."""
    if env is None:
        env = make_env(config)
    agent = make_agent(config, env)
    trace = run_agent(env, agent, config.n_steps, config.buffer_size)
    baseline = run_agent(env, RandomAgent(config.seeds.random_baseline), config.n_steps, config.buffer_size)
    return RunResult(config=config, env=env, agent=agent, trace=trace, baseline=baseline)
