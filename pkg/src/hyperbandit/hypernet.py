"""Hypernetwork mapping a period embedding to a preference matrix.

An MLP with ReLU hidden layers produces either the ``d_a * d_u`` entries of
``Theta`` directly (full-rank head) or the factors ``A`` (``d_a x tau``) and
``B`` (``d_u x tau``) of ``Theta = A B^T`` (low-rank head). The output vector
is laid out row-major, ``A`` first.

Training uses a ListNet cross-entropy between the softmax of per-step labels
(+1 clicked, -1 skipped, 0 not shown) and the softmax of estimated rewards
``c_a^T Theta_p c_u`` over the candidate list. Gradients are computed by
hand and the parameters are updated with Adam.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .periods import EMBEDDING_DIM

Array = NDArray[np.float64]

DEFAULT_HIDDEN = (256, 512, 1024, 1024, 1024, 1024, 512, 256)
CHECKPOINT_FORMAT = "hyperbandit-checkpoint"
CHECKPOINT_VERSION = 1


def output_dim(d_a: int, d_u: int, tau: int | None) -> int:
    return d_a * d_u if tau is None else tau * (d_a + d_u)


def init_xavier(widths: Sequence[int], seed: int) -> tuple[list[Array], list[Array]]:
    """Xavier-normal weights ``N(0, 2 / (fan_in + fan_out))`` and zero biases.

    Weight ``i`` has shape ``(widths[i], widths[i + 1])`` and acts on row vectors.
    """
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        std = math.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def reshape_lowrank(out: ArrayLike, d_a: int, d_u: int, tau: int) -> tuple[Array, Array]:
    """Split a head output of length ``tau * (d_a + d_u)`` into ``A`` and ``B``."""
    out = np.asarray(out, dtype=np.float64)
    if out.shape[-1] != tau * (d_a + d_u):
        raise ValueError(f"output length {out.shape[-1]} != tau*(d_a+d_u) = {tau * (d_a + d_u)}")
    lead = out.shape[:-1]
    a = out[..., : tau * d_a].reshape(*lead, d_a, tau)
    b = out[..., tau * d_a :].reshape(*lead, d_u, tau)
    return a, b


@dataclass
class ForwardCache:
    inputs: list[Array]
    preacts: list[Array]
    factors: tuple[Array, Array] | None


class Hypernetwork:
    """MLP hypernetwork producing ``(d_a, d_u)`` preference matrices.

    Parameters
    ----------
    d_a, d_u : int
        Item- and user-context dimensions of the generated matrix.
    tau : int or None
        Rank of the factorized head; ``None`` selects the full-rank head.
    hidden : sequence of int
        Hidden layer widths.
    seed : int
        Seed of the Xavier initialization.
    """

    def __init__(
        self,
        d_a: int,
        d_u: int,
        tau: int | None = 2,
        hidden: Sequence[int] = DEFAULT_HIDDEN,
        in_dim: int = EMBEDDING_DIM,
        seed: int = 0,
    ):
        if tau is not None and tau < 1:
            raise ValueError("tau must be >= 1 or None")
        self.d_a = d_a
        self.d_u = d_u
        self.tau = tau
        self.widths = (in_dim, *hidden, output_dim(d_a, d_u, tau))
        self.weights, self.biases = init_xavier(self.widths, seed)

    @property
    def lowrank(self) -> bool:
        return self.tau is not None

    def parameters(self) -> list[Array]:
        """Parameters interleaved as ``[W0, b0, W1, b1, ...]``; arrays are live."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy_parameters(self) -> list[Array]:
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, params: Sequence[Array]) -> None:
        for dst, src in zip(self.parameters(), params, strict=True):
            if dst.shape != src.shape:
                raise ValueError(f"parameter shape {src.shape} != {dst.shape}")
            dst[...] = src

    def forward_batch(self, s: ArrayLike) -> tuple[Array, ForwardCache]:
        """Map embeddings of shape ``(B, in_dim)`` to matrices ``(B, d_a, d_u)``."""
        h = np.asarray(s, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.widths[0]:
            raise ValueError(f"embedding batch must have shape (B, {self.widths[0]}), got {h.shape}")
        inputs, preacts = [], []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = np.maximum(z, 0.0) if i < last else z
        if self.lowrank:
            a, bf = reshape_lowrank(h, self.d_a, self.d_u, self.tau)
            theta = a @ np.swapaxes(bf, 1, 2)
            return theta, ForwardCache(inputs, preacts, (a, bf))
        return h.reshape(-1, self.d_a, self.d_u), ForwardCache(inputs, preacts, None)

    def forward(self, s: ArrayLike) -> Array:
        theta, _ = self.forward_batch(np.asarray(s, dtype=np.float64)[None, :])
        return theta[0]

    def backward(self, cache: ForwardCache, d_theta: ArrayLike) -> list[Array]:
        """Gradients ``[dW0, db0, ...]`` given ``dL/dTheta`` of shape ``(B, d_a, d_u)``."""
        d_theta = np.asarray(d_theta, dtype=np.float64)
        if cache.factors is not None:
            a, bf = cache.factors
            d_a = d_theta @ bf
            d_b = np.swapaxes(d_theta, 1, 2) @ a
            dz = np.concatenate([d_a.reshape(len(a), -1), d_b.reshape(len(bf), -1)], axis=1)
        else:
            dz = d_theta.reshape(d_theta.shape[0], -1)
        grads: list[Array] = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(dz.sum(axis=0))
            grads.append(cache.inputs[i].T @ dz)
            if i > 0:
                dz = (dz @ self.weights[i].T) * (cache.preacts[i - 1] > 0.0)
        grads.reverse()
        return grads

    # -- checkpoints -------------------------------------------------------
    def save(self, path: str | Path) -> None:
        """Write an ``.npz`` checkpoint.

        Keys: ``format``, ``version``, ``widths``, ``d_a``, ``d_u``, ``tau``
        (0 for the full-rank head), then ``W{i}`` / ``b{i}`` per layer.
        """
        arrays = {
            "format": np.array(CHECKPOINT_FORMAT),
            "version": np.array(CHECKPOINT_VERSION),
            "widths": np.array(self.widths, dtype=np.int64),
            "d_a": np.array(self.d_a),
            "d_u": np.array(self.d_u),
            "tau": np.array(0 if self.tau is None else self.tau),
        }
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> Hypernetwork:
        with np.load(path, allow_pickle=False) as data:
            if str(data["format"]) != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not a hypernetwork checkpoint")
            version = int(data["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            widths = tuple(int(w) for w in data["widths"])
            tau = int(data["tau"]) or None
            net = cls(int(data["d_a"]), int(data["d_u"]), tau, hidden=widths[1:-1], in_dim=widths[0])
            if net.widths != widths:
                raise ValueError(f"{path}: widths {widths} inconsistent with head")
            net.load_parameters(
                [data[f"{k}{i}"] for i in range(len(widths) - 1) for k in ("W", "b")]
            )
        return net


# -- ListNet -----------------------------------------------------------------


def log_softmax(x: ArrayLike) -> Array:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(x: ArrayLike) -> Array:
    return np.exp(log_softmax(x))


def labels_from_step(n_candidates: int, chosen_index: int, reward: int) -> Array:
    """+1 for a clicked recommendation, -1 for a skipped one, 0 elsewhere."""
    y = np.zeros(n_candidates)
    y[chosen_index] = 1.0 if reward == 1 else -1.0
    return y


def listnet_loss(y: ArrayLike, rhat: ArrayLike) -> float:
    """``-sum_k softmax(y)_k log softmax(rhat)_k``, summed over leading axes."""
    y = np.asarray(y, dtype=np.float64)
    rhat = np.asarray(rhat, dtype=np.float64)
    if y.shape != rhat.shape:
        raise ValueError(f"label shape {y.shape} != score shape {rhat.shape}")
    return float(-(softmax(y) * log_softmax(rhat)).sum())


def listnet_grad(y: ArrayLike, rhat: ArrayLike) -> Array:
    """Gradient of :func:`listnet_loss` with respect to ``rhat``."""
    return softmax(rhat) - softmax(y)


# -- Adam --------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    def copy(self) -> AdamState:
        return copy.deepcopy(self)


def adam_step(params: Sequence[Array], grads: Sequence[Array], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr / (1.0 - b1**state.step)
    v_scale = 1.0 / math.sqrt(1.0 - b2**state.step)
    for p, g, m, v in zip(params, grads, state.m, state.v, strict=True):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v)
        denom *= v_scale
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= step_size
        p -= denom


# -- buffer training ---------------------------------------------------------


@dataclass
class TrainingBatch:
    """Per-step arrays drawn from one data buffer."""

    periods: NDArray[np.int64]  # (T,)
    user_contexts: Array  # (T, d_u)
    candidate_contexts: Array  # (T, M, d_a), latent part frozen at buffer close
    labels: Array  # (T, M)

    def __len__(self) -> int:
        return len(self.periods)

    def subset(self, sl: slice) -> TrainingBatch:
        return TrainingBatch(
            self.periods[sl], self.user_contexts[sl], self.candidate_contexts[sl], self.labels[sl]
        )

    def repeat(self, k: int) -> TrainingBatch:
        return TrainingBatch(
            np.tile(self.periods, k),
            np.tile(self.user_contexts, (k, 1)),
            np.tile(self.candidate_contexts, (k, 1, 1)),
            np.tile(self.labels, (k, 1)),
        )


def estimated_rewards(thetas: Array, batch: TrainingBatch) -> Array:
    """``rhat[t, k] = c_{a_k}^T Theta_{p_t} c_{u_t}`` for every step and candidate."""
    w = np.einsum("tij,tj->ti", thetas[batch.periods], batch.user_contexts)
    return np.einsum("tmi,ti->tm", batch.candidate_contexts, w)


class BufferObjective:
    """Summed ListNet loss of a batch as a function of the hypernetwork."""

    def __init__(self, net: Hypernetwork, batch: TrainingBatch, embeddings: Array):
        self.net = net
        self.batch = batch
        self.embeddings = embeddings
        self.used = np.unique(batch.periods)
        # Step periods re-indexed into the rows of the forward batch.
        self.local = np.searchsorted(self.used, batch.periods)

    def _thetas(self) -> tuple[Array, ForwardCache]:
        return self.net.forward_batch(self.embeddings[self.used])

    def _local_batch(self) -> TrainingBatch:
        b = self.batch
        return TrainingBatch(self.local, b.user_contexts, b.candidate_contexts, b.labels)

    def loss(self) -> float:
        thetas, _ = self._thetas()
        return listnet_loss(self.batch.labels, estimated_rewards(thetas, self._local_batch()))

    def loss_and_grad(self) -> tuple[float, list[Array]]:
        thetas, cache = self._thetas()
        rhat = estimated_rewards(thetas, self._local_batch())
        loss = listnet_loss(self.batch.labels, rhat)
        g = listnet_grad(self.batch.labels, rhat)
        dw = np.einsum("tm,tmi->ti", g, self.batch.candidate_contexts)
        d_theta = np.zeros_like(thetas)
        for row in range(len(self.used)):
            mask = self.local == row
            d_theta[row] = dw[mask].T @ self.batch.user_contexts[mask]
        return loss, self.net.backward(cache, d_theta)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    validation_fraction: float = 0.1
    patience: int = 3
    lr: float = 1e-3
    min_buffer: int = 10

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class TrainResult:
    epochs: int
    best_epoch: int
    train_loss: float
    validation_loss: float
    train_history: list[float]
    validation_history: list[float]


def train_on_buffer(
    net: Hypernetwork,
    batch: TrainingBatch,
    embeddings: Array,
    config: TrainConfig = TrainConfig(),
    state: AdamState | None = None,
) -> TrainResult:
    """Train ``net`` in place on one buffer with tail-validation early stopping.

    The last ``ceil(validation_fraction * T)`` steps form the validation
    set. Each epoch is one full-batch Adam step on the rest. Training stops
    after ``patience`` epochs without a strict validation improvement, or at
    ``max_epochs``; the parameters (and Adam state) of the best validation
    epoch are restored. Reported losses are per-step means.
    """
    n = len(batch)
    if n < config.min_buffer:
        raise ValueError(f"buffer has {n} steps; at least {config.min_buffer} required")
    n_val = math.ceil(config.validation_fraction * n)
    n_train = n - n_val
    if n_train < 1:
        raise ValueError("buffer too small to hold out a validation split")
    train = BufferObjective(net, batch.subset(slice(0, n_train)), embeddings)
    val = BufferObjective(net, batch.subset(slice(n_train, n)), embeddings)
    if state is None:
        state = AdamState(lr=config.lr)
    params = net.parameters()

    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_params: list[Array] | None = None
    best_state: AdamState | None = None
    bad = 0
    _, grads = train.loss_and_grad()
    epoch = 0
    while epoch < config.max_epochs:
        epoch += 1
        adam_step(params, grads, state)
        train_loss, grads = train.loss_and_grad()
        val_loss = val.loss()
        train_hist.append(train_loss / n_train)
        val_hist.append(val_loss / n_val)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = net.copy_parameters()
            best_state = state.copy()
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    net.load_parameters(best_params)
    state.step = best_state.step
    state.m, state.v = best_state.m, best_state.v
    return TrainResult(
        epochs=epoch,
        best_epoch=best_epoch,
        train_loss=train_hist[best_epoch - 1],
        validation_loss=val_hist[best_epoch - 1],
        train_history=train_hist,
        validation_history=val_hist,
    )
