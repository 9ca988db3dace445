"""Reward model, interaction records and the two environments.

``SyntheticEnv`` has a known, periodic ground truth and supports regret;
``ReplayEnv`` replays logged positives against sampled negatives.

Both environments derive every random quantity of step ``t`` from
``(seed, t)`` alone, so the stream a policy sees does not depend on the
policy's own choices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .linalg import numerical_rank, singular_values
from .periods import N_PERIODS, check_period, period_of

Array = NDArray[np.float64]

_STEP_STREAM = 1


class IngestionError(ValueError):
    """A replay input file is malformed or inconsistent."""


def true_reward(c_u: ArrayLike, c_a: ArrayLike, theta: ArrayLike) -> float:
    """Bilinear expected reward ``c_a^T theta c_u``."""
    c_u = np.asarray(c_u, dtype=np.float64)
    c_a = np.asarray(c_a, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape != (c_a.shape[0], c_u.shape[0]):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({c_a.shape[0]}, {c_u.shape[0]})"
        )
    return float(c_a @ theta @ c_u)


def bernoulli_reward(r_star: float, uniform: float) -> int:
    """Binary reward with mean ``r_star`` given a U(0, 1) draw."""
    return int(uniform < r_star)


@dataclass(frozen=True)
class InteractionRecord:
    user_id: int
    item_id: int
    period: int
    reward: int
    candidates: tuple[int, ...]

    def __post_init__(self):
        if self.item_id not in self.candidates:
            raise ValueError(f"recommended item {self.item_id} not among candidates")
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward}")

    @property
    def chosen_index(self) -> int:
        return self.candidates.index(self.item_id)


@dataclass
class Step:
    """What a policy observes at step ``t``."""

    t: int
    period: int
    user_id: int
    user_context: Array
    candidate_ids: NDArray[np.int64]
    # Observed item features of the candidates, shape (M, o_a).
    candidate_features: Array
    noise: float = field(default=0.0, repr=False)


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 50
    n_items: int = 300
    d_u: int = 25
    o_a: int = 15
    l_a: int = 10
    rank: int = 2
    n_candidates: int = 25
    steps_per_period: int = 5
    # Contexts: one "home" coordinate plus sparse non-negative noise.
    context_density: float = 0.2
    context_noise: float = 0.03
    # Fraction of item coordinates attached to some taste factor.
    taste_density: float = 0.7
    # Weight of the period-specific item factor relative to the shared one.
    period_shift: float = 0.1
    # Spread of the multiplicative weights on taste factors; 0 gives 0/1 factors.
    factor_jitter: float = 0.0
    seed: int = 0

    @property
    def d_a(self) -> int:
        return self.o_a + self.l_a


class SyntheticEnv:
    """Periodic environment with a known rank-``R`` preference matrix per period.

    Every context is a unit-norm, non-negative vector dominated by one home
    coordinate. There are ``R`` tastes: each user coordinate belongs to one
    of them, each item coordinate to one or to none. ``Theta_p* = U_p V_p^T``
    where ``V_p`` is the shared user-taste assignment with jittered weights
    and ``U_p`` is the shared item-taste assignment plus a period-specific
    one weighted by ``period_shift``. So rewards depend on the user-item
    match, which a purely additive model cannot express, and shift with
    the period.

    Each ``Theta_p*`` is scaled so that its largest true reward over the
    pools equals one; all factors are non-negative, so every true reward
    lies in ``[0, 1]``. Periods advance every ``steps_per_period`` steps and
    wrap weekly.
    """

    def __init__(self, config: SyntheticConfig | None = None, **overrides):
        if config is None:
            config = SyntheticConfig(**overrides)
        elif overrides:
            raise TypeError("pass either a config or keyword overrides, not both")
        self.config = config
        if config.n_items < config.n_candidates:
            raise ValueError(
                f"item pool ({config.n_items}) smaller than candidate set ({config.n_candidates})"
            )
        if config.rank < 1 or config.rank > min(config.d_a, config.d_u):
            raise ValueError(f"rank {config.rank} incompatible with dims")
        if config.steps_per_period < 1:
            raise ValueError("steps_per_period must be >= 1")
        rng = np.random.default_rng([config.seed, 0])
        self.user_contexts = self._contexts(rng, config.n_users, config.d_u)
        items = self._contexts(rng, config.n_items, config.d_a)
        self.item_features = items[:, : config.o_a].copy()
        self.item_latent = items[:, config.o_a :].copy()
        self.item_contexts = items
        self.item_tastes = _taste_assignment(rng, config.d_a, config.rank, config.taste_density)
        self.user_tastes = _taste_assignment(rng, config.d_u, config.rank, 1.0)
        self.thetas = np.stack([self._make_theta(rng) for _ in range(N_PERIODS)])
        # (period, user, item) table of expected rewards; desk-scale pools.
        self.reward_table = np.einsum("ia,pab,ub->pui", items, self.thetas, self.user_contexts)
        self._check_invariants()

    def _contexts(self, rng: np.random.Generator, n: int, d: int) -> Array:
        cfg = self.config
        home = rng.integers(d, size=n)
        x = cfg.context_noise * _masked_half_normal(rng, (n, d), cfg.context_density)
        x[np.arange(n), home] += 1.0
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    def _make_theta(self, rng: np.random.Generator) -> Array:
        cfg = self.config
        while True:
            u = self.item_tastes * self._jitter(rng, self.item_tastes.shape)
            u += cfg.period_shift * _taste_assignment(rng, cfg.d_a, cfg.rank, cfg.taste_density)
            v = self.user_tastes * self._jitter(rng, self.user_tastes.shape)
            theta = u @ v.T
            top = (self.item_contexts @ theta @ self.user_contexts.T).max()
            if top <= 0.0:
                continue
            theta = theta / top
            if numerical_rank(singular_values(theta), atol=1e-8) == cfg.rank:
                return theta

    def _jitter(self, rng: np.random.Generator, shape) -> Array:
        return np.abs(1.0 + self.config.factor_jitter * rng.standard_normal(shape))

    def _check_invariants(self) -> None:
        lo, hi = self.reward_table.min(), self.reward_table.max()
        if lo < 0.0 or hi > 1.0 + 1e-12:
            raise AssertionError(f"true rewards span [{lo}, {hi}], outside [0, 1]")
        np.clip(self.reward_table, 0.0, 1.0, out=self.reward_table)

    # -- properties shared with ReplayEnv ---------------------------------
    @property
    def n_items(self) -> int:
        return self.config.n_items

    @property
    def d_u(self) -> int:
        return self.config.d_u

    @property
    def o_a(self) -> int:
        return self.config.o_a

    @property
    def n_candidates(self) -> int:
        return self.config.n_candidates

    @property
    def n_steps(self) -> int | None:
        return None

    @property
    def has_ground_truth(self) -> bool:
        return True

    def period_at(self, t: int) -> int:
        return (t // self.config.steps_per_period) % N_PERIODS

    def step(self, t: int) -> Step:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, _STEP_STREAM, t])
        user = int(rng.integers(cfg.n_users))
        cands = rng.choice(cfg.n_items, size=cfg.n_candidates, replace=False)
        noise = float(rng.random())
        return Step(
            t=t,
            period=self.period_at(t),
            user_id=user,
            user_context=self.user_contexts[user],
            candidate_ids=cands,
            candidate_features=self.item_features[cands],
            noise=noise,
        )

    def expected_reward(self, user_id: int, item_id: int, period: int) -> float:
        return float(self.reward_table[check_period(period), user_id, item_id])

    def candidate_rewards(self, step: Step) -> Array:
        return self.reward_table[step.period, step.user_id, step.candidate_ids]

    def feedback(self, step: Step, item_id: int) -> int:
        r_star = self.expected_reward(step.user_id, item_id, step.period)
        return bernoulli_reward(r_star, step.noise)


def _masked_half_normal(rng: np.random.Generator, shape, density: float) -> Array:
    x = np.abs(rng.standard_normal(shape))
    return x * (rng.random(shape) < density)


def _taste_assignment(rng: np.random.Generator, n: int, rank: int, density: float) -> Array:
    """0/1 matrix with at most one 1 per row.

    ``round(density * n)`` randomly chosen rows are non-empty and are dealt
    to the ``rank`` columns in turn, so the tastes stay balanced.
    """
    m = np.zeros((n, rank))
    alive = rng.permutation(n)[: int(round(density * n))]
    m[alive, np.arange(len(alive)) % rank] = 1.0
    return m


# -- replay ------------------------------------------------------------------


@dataclass(frozen=True)
class LoggedInteraction:
    step: int
    period: int
    user_id: str
    positive_item_id: str


def read_feature_table(path: str | Path) -> tuple[list[str], Array]:
    """Read ``id,f0,...,f{d-1}`` rows."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if not header or header[0] != "id":
            raise IngestionError(f"{path}: header must start with 'id'")
        d = len(header) - 1
        expected = ["id"] + [f"f{i}" for i in range(d)]
        if header != expected:
            raise IngestionError(f"{path}: expected header {','.join(expected)}")
        ids: list[str] = []
        rows: list[list[float]] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise IngestionError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            if row[0] in seen:
                raise IngestionError(f"{path}:{lineno}: duplicate id {row[0]!r}")
            try:
                values = [float(x) for x in row[1:]]
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric feature") from None
            if not all(math.isfinite(x) for x in values):
                raise IngestionError(f"{path}:{lineno}: non-finite feature")
            seen.add(row[0])
            ids.append(row[0])
            rows.append(values)
    return ids, np.asarray(rows, dtype=np.float64).reshape(len(rows), d)


_INTERACTION_COLUMNS = ["step", "day_index", "minutes", "user_id", "positive_item_id"]


def read_interactions(path: str | Path) -> list[LoggedInteraction]:
    path = Path(path)
    log: list[LoggedInteraction] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _INTERACTION_COLUMNS:
            raise IngestionError(f"{path}: expected header {','.join(_INTERACTION_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_INTERACTION_COLUMNS):
                raise IngestionError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                step, day, minutes = int(row[0]), int(row[1]), int(row[2])
                period = period_of(day, minutes)
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            log.append(LoggedInteraction(step, period, row[3], row[4]))
    log.sort(key=lambda rec: rec.step)
    steps = [rec.step for rec in log]
    if len(set(steps)) != len(steps):
        raise IngestionError(f"{path}: duplicate step values")
    return log


class ReplayEnv:
    """Replay of logged positives: one positive plus ``M - 1`` sampled negatives.

    The policy earns reward 1 exactly when it picks the logged positive.
    Log entries are consumed in ``step`` order; step ``t`` of the run is the
    ``t``-th log row.
    """

    def __init__(
        self,
        log: list[LoggedInteraction],
        user_ids: list[str],
        user_features: Array,
        item_ids: list[str],
        item_features: Array,
        n_candidates: int = 25,
        seed: int = 0,
    ):
        if len(item_ids) < n_candidates:
            raise IngestionError(
                f"item table has {len(item_ids)} rows, fewer than candidate set size {n_candidates}"
            )
        self.log = log
        self.user_index = {uid: i for i, uid in enumerate(user_ids)}
        self.item_index = {iid: i for i, iid in enumerate(item_ids)}
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.user_contexts = np.asarray(user_features, dtype=np.float64)
        self.item_features = np.asarray(item_features, dtype=np.float64)
        self._n_candidates = n_candidates
        self.seed = seed
        for rec in log:
            if rec.positive_item_id not in self.item_index:
                raise IngestionError(f"missing feature row for item id {rec.positive_item_id!r}")
            if rec.user_id not in self.user_index:
                raise IngestionError(f"missing feature row for user id {rec.user_id!r}")

    @classmethod
    def from_files(
        cls,
        interactions: str | Path,
        users: str | Path,
        items: str | Path,
        n_candidates: int = 25,
        seed: int = 0,
    ) -> ReplayEnv:
        log = read_interactions(interactions)
        user_ids, user_feats = read_feature_table(users)
        item_ids, item_feats = read_feature_table(items)
        return cls(log, user_ids, user_feats, item_ids, item_feats, n_candidates, seed)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def d_u(self) -> int:
        return self.user_contexts.shape[1]

    @property
    def o_a(self) -> int:
        return self.item_features.shape[1]

    @property
    def n_candidates(self) -> int:
        return self._n_candidates

    @property
    def n_steps(self) -> int:
        return len(self.log)

    @property
    def has_ground_truth(self) -> bool:
        return False

    def step(self, t: int) -> Step:
        if not 0 <= t < len(self.log):
            raise IndexError(f"no log entry for step {t}")
        rec = self.log[t]
        positive = self.item_index[rec.positive_item_id]
        rng = np.random.default_rng([self.seed, _STEP_STREAM, t])
        # Sample from the pool with the positive removed, then shift indices back.
        negatives = rng.choice(self.n_items - 1, size=self._n_candidates - 1, replace=False)
        negatives = negatives + (negatives >= positive)
        cands = np.concatenate([[positive], negatives]).astype(np.int64)
        rng.shuffle(cands)
        user = self.user_index[rec.user_id]
        return Step(
            t=t,
            period=rec.period,
            user_id=user,
            user_context=self.user_contexts[user],
            candidate_ids=cands,
            candidate_features=self.item_features[cands],
        )

    def positive_of(self, t: int) -> int:
        return self.item_index[self.log[t].positive_item_id]

    def feedback(self, step: Step, item_id: int) -> int:
        return int(item_id == self.positive_of(step.t))
