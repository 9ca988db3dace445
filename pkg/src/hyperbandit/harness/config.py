"""Experiment configuration: a JSON document with a fixed key set.

Example::

    {
      "policy": "hyperbandit",
      "n_steps": 20000,
      "buffer_size": 2000,
      "alpha": 0.1, "lambda": 0.1,
      "n_candidates": 25, "d_u": 25, "o_a": 15, "l_a": 10, "tau": 2,
      "environment": {"kind": "synthetic", "rank": 2},
      "seeds": {"environment": 0, "policy": 0, "random_baseline": 1,
                "hypernetwork": 0, "embedding": 0}
    }

Every key except ``policy`` has a default. ``tau: null`` selects the
full-rank hypernetwork head.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from ..hypernet import DEFAULT_HIDDEN, TrainConfig


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


POLICIES = ("hyperbandit", "linucb", "random")

_SEED_KEYS = ("environment", "policy", "random_baseline", "hypernetwork", "embedding")

_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_UNIT = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["policy"],
    "properties": {
        "policy": {"enum": list(POLICIES)},
        "n_steps": _POS_INT,
        "buffer_size": _POS_INT,
        "alpha": {"type": "number", "minimum": 0},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "n_candidates": {"type": "integer", "minimum": 2},
        "d_u": _POS_INT,
        "o_a": _NONNEG_INT,
        "l_a": _NONNEG_INT,
        "tau": {"oneOf": [_POS_INT, {"type": "null"}]},
        "freeze_hypernetwork": {"type": "boolean"},
        "hidden": {"type": "array", "items": _POS_INT},
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_epochs": _POS_INT,
                "validation_fraction": _UNIT,
                "patience": _POS_INT,
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "min_buffer": _POS_INT,
            },
        },
        "environment": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "synthetic"},
                        "n_users": _POS_INT,
                        "n_items": _POS_INT,
                        "latent_dim": _NONNEG_INT,
                        "rank": _POS_INT,
                        "steps_per_period": _POS_INT,
                        "context_density": _UNIT,
                        "context_noise": {"type": "number", "minimum": 0},
                        "taste_density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "period_shift": {"type": "number", "minimum": 0},
                        "factor_jitter": {"type": "number", "minimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "interactions", "users", "items"],
                    "properties": {
                        "kind": {"const": "replay"},
                        "interactions": {"type": "string"},
                        "users": {"type": "string"},
                        "items": {"type": "string"},
                    },
                },
            ]
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {key: _NONNEG_INT for key in _SEED_KEYS},
        },
        "output_dir": {"type": ["string", "null"]},
    },
}


@dataclass(frozen=True)
class Seeds:
    environment: int = 0
    policy: int = 0
    random_baseline: int = 1
    hypernetwork: int = 0
    embedding: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    policy: str
    n_steps: int = 20000
    buffer_size: int = 2000
    alpha: float = 0.1
    lam: float = 0.1
    n_candidates: int = 25
    d_u: int = 25
    o_a: int = 15
    l_a: int = 10
    tau: int | None = 2
    freeze_hypernetwork: bool = False
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    training: TrainConfig = field(default_factory=TrainConfig)
    environment: dict[str, Any] = field(default_factory=lambda: {"kind": "synthetic"})
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.policy == "hyperbandit" and self.buffer_size < 10:
            raise ConfigError(f"buffer_size must be >= 10 for hyperbandit, got {self.buffer_size}")
        if self.tau is not None and self.tau > min(self.o_a + self.l_a, self.d_u):
            raise ConfigError(f"tau={self.tau} exceeds min(d_a, d_u)")
        if not 0.0 < self.training.validation_fraction < 1.0:
            raise ConfigError("training.validation_fraction must lie in (0, 1)")
        if self.training.patience < 1:
            raise ConfigError("training.patience must be >= 1")
        kind = self.environment.get("kind")
        if kind not in ("synthetic", "replay"):
            raise ConfigError(f"environment.kind must be 'synthetic' or 'replay', got {kind!r}")
        if kind == "synthetic":
            n_items = self.environment.get("n_items", 300)
            if n_items < self.n_candidates:
                raise ConfigError(
                    f"environment.n_items={n_items} is smaller than n_candidates={self.n_candidates}"
                )
            rank = self.environment.get("rank", 2)
            d_a = self.o_a + self.environment.get("latent_dim", 10)
            if rank > min(d_a, self.d_u):
                raise ConfigError(f"environment.rank={rank} exceeds min(d_a, d_u)")

    @property
    def d_a(self) -> int:
        return self.o_a + self.l_a

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        kwargs = dict(data)
        if "lambda" in kwargs:
            kwargs["lam"] = kwargs.pop("lambda")
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(kwargs["hidden"])
        if "seeds" in kwargs:
            kwargs["seeds"] = Seeds(**kwargs["seeds"])
        try:
            if "training" in kwargs:
                kwargs["training"] = TrainConfig(**kwargs["training"])
            return cls(**kwargs)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "n_steps": self.n_steps,
            "buffer_size": self.buffer_size,
            "alpha": self.alpha,
            "lambda": self.lam,
            "n_candidates": self.n_candidates,
            "d_u": self.d_u,
            "o_a": self.o_a,
            "l_a": self.l_a,
            "tau": self.tau,
            "freeze_hypernetwork": self.freeze_hypernetwork,
            "hidden": list(self.hidden),
            "training": dataclasses.asdict(self.training),
            "environment": dict(self.environment),
            "seeds": dataclasses.asdict(self.seeds),
            "output_dir": self.output_dir,
        }

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def reseeded(self, seed: int) -> ExperimentConfig:
        """Copy with every seed derived from ``seed`` (used by sweeps).

        The random baseline keeps a stream distinct from the policy's.
        """
        seeds = Seeds(
            environment=seed,
            policy=seed,
            random_baseline=seed + 1_000_003,
            hypernetwork=seed,
            embedding=seed,
        )
        return self.replace(seeds=seeds)
