"""Dataset loading, min-max normalization, synthetic streams and the
pretrain / client-stream split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataSample, substream
from .errors import ParseError, SizingError


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,)

    def __post_init__(self):
        if self.features.ndim != 2 or self.targets.ndim != 1:
            raise ValueError("features must be 2-D and targets 1-D")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on sample count")

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def samples(self) -> list[DataSample]:
        """Row view; only valid once the dataset is normalized."""
        return [DataSample(tuple(map(float, x)), float(y)) for x, y in zip(self.features, self.targets)]


@dataclass(frozen=True)
class SplitPlan:
    pretrain_fraction: float
    seed: int
    rounds: int
    clients: int

    def __post_init__(self):
        if not 0.0 < self.pretrain_fraction < 1.0:
            raise SizingError(f"pretrain_fraction must lie in (0, 1), got {self.pretrain_fraction}")
        if self.rounds < 0 or self.clients < 1:
            raise SizingError("rounds must be >= 0 and clients >= 1")


@dataclass(frozen=True)
class PretrainSet:
    features: np.ndarray
    targets: np.ndarray
    indices: np.ndarray  # row indices into the source dataset

    def __len__(self) -> int:
        return self.targets.shape[0]


@dataclass(frozen=True)
class ClientStream:
    """Per-round, per-client samples.

    ``pool_*`` hold the non-pretrain samples in dataset order; ``slots[t, i]``
    is the pool row observed by client ``i`` in (zero-based) round ``t``.
    """

    pool_features: np.ndarray
    pool_targets: np.ndarray
    pool_indices: np.ndarray  # row indices into the source dataset
    slots: np.ndarray  # (T, N) int
    wrapped: bool = field(default=False)

    @property
    def rounds(self) -> int:
        return self.slots.shape[0]

    @property
    def clients(self) -> int:
        return self.slots.shape[1]

    def sample(self, t: int, i: int) -> tuple[np.ndarray, float]:
        row = self.slots[t, i]
        return self.pool_features[row], float(self.pool_targets[row])


def load_dataset(path, target_column: str | int, name: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row. Values are returned unnormalized."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty, expected a header row") from None
        header = [h.strip() for h in header]
        if isinstance(target_column, int):
            if not -len(header) <= target_column < len(header):
                raise ParseError(f"{path}: target column index {target_column} out of range")
            target_idx = target_column % len(header)
        else:
            try:
                target_idx = header.index(target_column)
            except ValueError:
                raise ParseError(f"{path}: no column named {target_column!r}") from None

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
            values = []
            for col, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {header[col]!r}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: row {lineno}, column {header[col]!r}: non-finite value")
                values.append(v)
            rows.append(values)

    if not rows:
        raise ParseError(f"{path}: dataset is empty (header only)")
    table = np.asarray(rows, dtype=float)
    targets = table[:, target_idx].copy()
    features = np.delete(table, target_idx, axis=1)
    return Dataset(name or path.stem, features, targets)


def _minmax_columns(a: np.ndarray) -> np.ndarray:
    lo = a.min(axis=0)
    hi = a.max(axis=0)
    span = hi - lo
    constant = span == 0
    out = (a - lo) / np.where(constant, 1.0, span)
    out[:, constant] = 0.5
    # guard the endpoints against rounding in (a - lo) / span
    return np.clip(out, 0.0, 1.0)


def normalize_minmax(dataset: Dataset) -> Dataset:
    """Map every feature column and the target affinely onto [0, 1].

    Statistics come from the whole dataset. Constant columns map to 0.5.
    """
    if len(dataset) == 0:
        raise SizingError("cannot normalize an empty dataset")
    features = _minmax_columns(dataset.features)
    targets = _minmax_columns(dataset.targets[:, None])[:, 0]
    return Dataset(dataset.name, features, targets)


def partition(dataset: Dataset, plan: SplitPlan) -> tuple[PretrainSet, ClientStream]:
    """Split into a seeded random pretrain subset and a round-robin client stream.

    Stream slot ``(t, i)`` takes pool row ``(t * N + i) mod M`` where ``M`` is
    the number of non-pretrain samples, so the stream wraps deterministically
    once ``T * N > M``.
    """
    n = len(dataset)
    n_pre = int(math.floor(plan.pretrain_fraction * n + 1e-9))
    if n_pre < 1:
        raise SizingError(
            f"dataset of {n} samples gives no pretrain sample at fraction {plan.pretrain_fraction}"
        )
    n_pool = n - n_pre
    total_slots = plan.rounds * plan.clients
    if n_pool < 1 and total_slots > 0:
        raise SizingError(f"no samples left for the client stream ({n} samples, {n_pre} pretrain)")

    order = substream(plan.seed, "partition").permutation(n)
    pre_idx = np.sort(order[:n_pre])
    pool_idx = np.sort(order[n_pre:])

    if total_slots:
        slots = (np.arange(total_slots) % n_pool).reshape(plan.rounds, plan.clients)
    else:
        slots = np.zeros((plan.rounds, plan.clients), dtype=int)

    pretrain = PretrainSet(dataset.features[pre_idx], dataset.targets[pre_idx], pre_idx)
    stream = ClientStream(
        dataset.features[pool_idx],
        dataset.targets[pool_idx],
        pool_idx,
        slots,
        wrapped=total_slots > n_pool,
    )
    return pretrain, stream


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator parameters for a synthetic regression stream.

    Features are uniform on [0, 1]^d. The target is ``x @ coef`` (linear) or
    ``sin(frequency * x @ coef)`` (sine), plus Gaussian noise of scale
    ``noise``, with ``coef = slope * ones(d)``.
    """

    feature_count: int
    sample_count: int
    noise: float = 0.0
    family: str = "linear"
    slope: float = 1.0
    frequency: float = 3.0
    name: str = "synthetic"

    def target_variance(self) -> float:
        """Closed-form variance of the generated target (linear family only)."""
        if self.family != "linear":
            raise NotImplementedError("closed-form variance is only derived for the linear family")
        return self.feature_count * self.slope**2 / 12.0 + self.noise**2


def synthetic_dataset(spec: SyntheticSpec, seed: int) -> Dataset:
    if spec.feature_count <= 0 or spec.sample_count <= 0:
        raise SizingError("synthetic datasets need feature_count > 0 and sample_count > 0")
    if spec.family not in ("linear", "sine"):
        raise ValueError(f"unknown synthetic family {spec.family!r}")
    rng = substream(seed, "synthetic")
    x = rng.random((spec.sample_count, spec.feature_count))
    signal = x @ np.full(spec.feature_count, float(spec.slope))
    if spec.family == "sine":
        signal = np.sin(spec.frequency * signal)
    y = signal + spec.noise * rng.standard_normal(spec.sample_count)
    return Dataset(spec.name, x, y)
