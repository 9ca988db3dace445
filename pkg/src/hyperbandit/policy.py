"""Bandit policies: the latent-feature UCB policy driven by a preference
matrix, plus LinUCB and uniform-random baselines.

The UCB policy keeps, per item, the ridge statistics for its latent
features ``x_a``:

    Psi_a = lambda I + sum P P^T,   b_a = sum P (r - Q^T s_a),   x_a = Psi_a^{-1} b_a

with ``P = Theta_x c_u`` and ``Q = Theta_s c_u``. ``Psi_a^{-1}`` is kept up
to date with rank-one updates and re-factorized every ``refresh_every``
updates of that arm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .linalg import sherman_morrison_inplace, spd_inverse

Array = NDArray[np.float64]

RADICAND_TOL = 1e-12
REFRESH_EVERY = 1000


class NumericalError(ArithmeticError):
    """An internal invariant of the numerics was violated."""


def _exploration(radicand, alpha: float):
    radicand = np.asarray(radicand, dtype=np.float64)
    if np.any(radicand < -RADICAND_TOL):
        raise NumericalError(
            f"negative exploration radicand {float(radicand.min()):.3e}; inverse lost definiteness"
        )
    return alpha * np.sqrt(np.maximum(radicand, 0.0))


def split_theta(theta: ArrayLike, o_a: int) -> tuple[Array, Array]:
    """Split ``theta`` into its observed block (top ``o_a`` rows) and latent block."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or not 0 <= o_a <= theta.shape[0]:
        raise ValueError(f"cannot split theta of shape {theta.shape} at row {o_a}")
    return theta[:o_a], theta[o_a:]


@dataclass
class ArmStats:
    """Ridge statistics for one arm. Arrays may be views into a policy's tables."""

    phi: Array
    psi_inv: Array
    b: Array
    x: Array

    @classmethod
    def fresh(cls, l_a: int, lam: float) -> ArmStats:
        return cls(
            phi=np.zeros((l_a, l_a)),
            psi_inv=np.eye(l_a) / lam,
            b=np.zeros(l_a),
            x=np.zeros(l_a),
        )


def ucb_score(c_u: ArrayLike, s_a: ArrayLike, arm: ArmStats, theta: ArrayLike, alpha: float) -> float:
    """``[s_a; x_a]^T theta c_u + alpha * sqrt(P^T Psi^{-1} P)`` with ``P = theta_x c_u``."""
    c_u = np.asarray(c_u, dtype=np.float64)
    s_a = np.asarray(s_a, dtype=np.float64)
    theta_s, theta_x = split_theta(theta, s_a.shape[0])
    if theta_x.shape[0] != arm.x.shape[0]:
        raise ValueError("latent block of theta does not match arm dimension")
    q = theta_s @ c_u
    p = theta_x @ c_u
    mean = s_a @ q + arm.x @ p
    return float(mean + _exploration(p @ arm.psi_inv @ p, alpha))


def update_arm(
    arm: ArmStats,
    c_u: ArrayLike,
    s_a: ArrayLike,
    theta: ArrayLike,
    reward: float,
    lam: float,
    n_updates: int | None = None,
    refresh_every: int = REFRESH_EVERY,
) -> None:
    """Fold one observation into ``arm`` in place.

    ``n_updates`` is the arm's update count after this one; when it hits a
    multiple of ``refresh_every`` the inverse is recomputed from scratch.
    """
    c_u = np.asarray(c_u, dtype=np.float64)
    s_a = np.asarray(s_a, dtype=np.float64)
    theta_s, theta_x = split_theta(theta, s_a.shape[0])
    p = theta_x @ c_u
    q = theta_s @ c_u
    arm.phi += np.outer(p, p)
    arm.b += p * (reward - q @ s_a)
    if n_updates is not None and n_updates % refresh_every == 0:
        arm.psi_inv[...] = spd_inverse(lam * np.eye(p.shape[0]) + arm.phi)
    else:
        sherman_morrison_inplace(arm.psi_inv, p)
    arm.x[...] = arm.psi_inv @ arm.b


def select(scores: ArrayLike) -> int:
    """Index of the best score; ties go to the earliest candidate."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty candidate list")
    return int(np.argmax(scores))


class LatentUCBPolicy:
    """Per-item latent-feature UCB policy scored through a preference matrix.

    The preference matrix is supplied on every call, which is how the
    hypernetwork-driven agent plugs in; the statistics here are never reset
    when it changes.

    Parameters
    ----------
    n_items : int
        Size of the item pool.
    o_a, l_a : int
        Observed and latent item feature dimensions; ``l_a = 0`` disables the
        ridge-regression part.
    alpha : float
        Exploration weight.
    lam : float
        Ridge regularizer.
    """

    def __init__(self, n_items: int, o_a: int, l_a: int, alpha: float = 0.1, lam: float = 0.1):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if lam <= 0:
            raise ValueError("lambda must be > 0")
        self.o_a = o_a
        self.l_a = l_a
        self.alpha = alpha
        self.lam = lam
        self.phi = np.zeros((n_items, l_a, l_a))
        self.psi_inv = np.broadcast_to(np.eye(l_a) / lam, (n_items, l_a, l_a)).copy()
        self.b = np.zeros((n_items, l_a))
        self.x = np.zeros((n_items, l_a))
        self.counts = np.zeros(n_items, dtype=np.int64)

    def arm(self, item_id: int) -> ArmStats:
        return ArmStats(self.phi[item_id], self.psi_inv[item_id], self.b[item_id], self.x[item_id])

    def scores(self, c_u: Array, candidate_ids: NDArray[np.int64], features: Array, theta: Array) -> Array:
        theta_s, theta_x = split_theta(theta, self.o_a)
        q = theta_s @ c_u
        p = theta_x @ c_u
        mean = features @ q + self.x[candidate_ids] @ p
        radicand = np.einsum("i,mij,j->m", p, self.psi_inv[candidate_ids], p)
        return mean + _exploration(radicand, self.alpha)

    def select(self, c_u: Array, candidate_ids: NDArray[np.int64], features: Array, theta: Array) -> int:
        return select(self.scores(c_u, candidate_ids, features, theta))

    def update(self, item_id: int, c_u: Array, s_a: Array, theta: Array, reward: float) -> None:
        self.counts[item_id] += 1
        update_arm(self.arm(item_id), c_u, s_a, theta, reward, self.lam, int(self.counts[item_id]))

    def latent_features(self, item_ids) -> Array:
        return self.x[item_ids]


class LinUCBPolicy:
    """Shared LinUCB model on the concatenated feature ``z = [c_u; s_a]``.

    Score: ``z^T A^{-1} b + alpha * sqrt(z^T A^{-1} z)`` with
    ``A = lambda I + sum z z^T`` and ``b = sum r z``.
    """

    def __init__(self, d_u: int, o_a: int, alpha: float = 0.1, lam: float = 0.1):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if lam <= 0:
            raise ValueError("lambda must be > 0")
        self.alpha = alpha
        self.lam = lam
        d = d_u + o_a
        self.a = lam * np.eye(d)
        self.a_inv = np.eye(d) / lam
        self.b = np.zeros(d)
        self.weights = np.zeros(d)
        self.n_updates = 0

    @staticmethod
    def features(c_u: Array, candidate_features: Array) -> Array:
        m = candidate_features.shape[0]
        return np.hstack([np.broadcast_to(c_u, (m, c_u.shape[0])), candidate_features])

    def scores(self, c_u: Array, candidate_features: Array) -> Array:
        z = self.features(c_u, candidate_features)
        radicand = np.einsum("mi,ij,mj->m", z, self.a_inv, z)
        return z @ self.weights + _exploration(radicand, self.alpha)

    def select(self, c_u: Array, candidate_features: Array) -> int:
        return select(self.scores(c_u, candidate_features))

    def update(self, c_u: Array, s_a: Array, reward: float) -> None:
        z = np.concatenate([c_u, s_a])
        self.n_updates += 1
        self.a += np.outer(z, z)
        self.b += reward * z
        if self.n_updates % REFRESH_EVERY == 0:
            self.a_inv = spd_inverse(self.a)
        else:
            sherman_morrison_inplace(self.a_inv, z)
        self.weights = self.a_inv @ self.b


class RandomPolicy:
    """Uniform choice among candidates from a seeded stream."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def select(self, n_candidates: int) -> int:
        if n_candidates <= 0:
            raise ValueError("empty candidate list")
        return int(self.rng.integers(n_candidates))
