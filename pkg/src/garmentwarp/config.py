"""Pipeline configuration: exact keys, strict parsing, JSON round-trip.

Configuration comes from a JSON file with exactly the keys below; unknown
keys are rejected so typos cannot silently fall back to defaults.  CLI flags
override file values; environment variables are never consulted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .errors import ValidationError
from .losses import LossWeights
from .tensor import WindowSpec

_PRECISIONS = ("float32", "float64")


@dataclass(frozen=True)
class PipelineConfig:
    encoder_seed: int = 0
    alpha: float = 100.0
    dense_window: WindowSpec = field(default_factory=lambda: WindowSpec(3, 1, 1))
    tps_window: WindowSpec = field(default_factory=lambda: WindowSpec(4, 4, 0))
    control_grid: int = 5
    lambda_kernel: float = 1e-6
    lambda_radius: float = 1.0
    lambda_slope: float = 1.0
    tps_l1: float = 10.0
    tps_constraint: float = 10.0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    precision: str = "float64"
    workers: int = 1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.control_grid < 2:
            raise ValidationError("control_grid must be at least 2")
        if self.precision not in _PRECISIONS:
            raise ValidationError(f"precision must be one of {_PRECISIONS}")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        if self.lambda_kernel < 0:
            raise ValidationError("lambda_kernel must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "encoder_seed": self.encoder_seed,
            "alpha": self.alpha,
            "dense_window": self.dense_window.to_dict(),
            "tps_window": self.tps_window.to_dict(),
            "control_grid": self.control_grid,
            "lambda_kernel": self.lambda_kernel,
            "lambda_radius": self.lambda_radius,
            "lambda_slope": self.lambda_slope,
            "tps_l1": self.tps_l1,
            "tps_constraint": self.tps_constraint,
            "loss_weights": self.loss_weights.to_dict(),
            "precision": self.precision,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        kwargs = dict(data)
        if "dense_window" in kwargs:
            kwargs["dense_window"] = WindowSpec.from_dict(kwargs["dense_window"])
        if "tps_window" in kwargs:
            kwargs["tps_window"] = WindowSpec.from_dict(kwargs["tps_window"])
        if "loss_weights" in kwargs:
            kwargs["loss_weights"] = LossWeights.from_dict(kwargs["loss_weights"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config root must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **overrides) -> "PipelineConfig":
        merged = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, (WindowSpec, LossWeights)):
                value = value.to_dict()
            merged[key] = value
        return PipelineConfig.from_dict(merged)
