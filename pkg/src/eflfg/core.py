"""Shared vocabulary: samples, losses, budgets and seeded random sub-streams."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError

ModelId = int


@dataclass(frozen=True)
class DataSample:
    features: tuple[float, ...]
    target: float

    def __post_init__(self):
        values = (*self.features, self.target)
        if not all(0.0 <= v <= 1.0 for v in values):
            raise InvalidInputError("sample values must lie in [0, 1] after normalization")


@dataclass(frozen=True)
class Budget:
    """Per-round transmission budget, constant across rounds."""

    per_round: float

    def __post_init__(self):
        if not (math.isfinite(self.per_round) and self.per_round > 0):
            raise ConfigError(f"budget must be a positive finite real, got {self.per_round!r}")

    def check_covers(self, costs) -> None:
        """Every single model must fit the budget on its own."""
        worst = float(np.max(costs))
        if self.per_round < worst:
            raise ConfigError(
                f"budget {self.per_round} is below the largest model cost {worst}; "
                "every model must be transmittable on its own (B >= c_k)"
            )


def clipped_squared_loss(prediction: float, target: float) -> float:
    """Squared error clipped to 1 so that the loss stays in [0, 1]."""
    if not (math.isfinite(prediction) and math.isfinite(target)):
        raise InvalidInputError(f"non-finite loss input: prediction={prediction!r}, target={target!r}")
    return min((prediction - target) ** 2, 1.0)


def clipped_squared_losses(predictions, targets) -> np.ndarray:
    """Vectorized `clipped_squared_loss` with broadcasting."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if not (np.all(np.isfinite(predictions)) and np.all(np.isfinite(targets))):
        raise InvalidInputError("non-finite loss input")
    return np.minimum((predictions - targets) ** 2, 1.0)


def squared_errors(predictions, targets) -> np.ndarray:
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    return (predictions - targets) ** 2


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of randomness.

    The name is hashed with CRC32 so the mapping is stable across Python
    processes (unlike ``hash``).
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
