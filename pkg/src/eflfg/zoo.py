"""Pre-trained predictors: kernel ridge regressors and small ReLU networks,
priced by normalized parameter count."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, NumericStateError, TrainingError

KERNEL_FAMILIES = ("gaussian-kernel", "laplacian-kernel", "polynomial-kernel", "sigmoid-kernel")
FAMILIES = KERNEL_FAMILIES + ("mlp",)

MAX_ANCHORS = 2000
DUMP_VERSION = 1
_PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class ModelSpec:
    """What to train.

    ``hyperparameter`` is the bandwidth (gaussian, laplacian), degree
    (polynomial) or slope (sigmoid). ``layers`` lists hidden widths for mlp.
    """

    family: str
    hyperparameter: float = 1.0
    layers: tuple[int, ...] = ()
    ridge: float = 1e-3
    epochs: int = 500
    step: float = 0.05

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "mlp":
            if not self.layers or any(int(h) < 1 for h in self.layers):
                raise InvalidInputError("mlp needs at least one hidden layer of positive width")
            object.__setattr__(self, "layers", tuple(int(h) for h in self.layers))
            if self.epochs < 0 or self.step <= 0:
                raise InvalidInputError("mlp needs epochs >= 0 and step > 0")
        else:
            if not (self.ridge > 0 and math.isfinite(self.ridge)):
                raise InvalidInputError("kernel ridge must be a positive finite real")
            if self.family == "polynomial-kernel":
                if self.hyperparameter < 1 or int(self.hyperparameter) != self.hyperparameter:
                    raise InvalidInputError("polynomial degree must be a positive integer")
            elif not self.hyperparameter > 0:
                raise InvalidInputError(f"{self.family} hyperparameter must be positive")

    @property
    def label(self) -> str:
        if self.family == "mlp":
            return "mlp-" + "x".join(map(str, self.layers))
        return f"{self.family.removesuffix('-kernel')}-{self.hyperparameter:g}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if "layers" in d:
            d["layers"] = tuple(d["layers"])
        return cls(**d)


def paper_zoo() -> list[ModelSpec]:
    """The 22-model zoo: 5 each of gaussian, laplacian, polynomial and
    sigmoid kernels, plus ReLU networks with one and two hidden layers of 25."""
    grid = (0.01, 0.1, 1.0, 10.0, 100.0)
    specs = [ModelSpec("gaussian-kernel", s) for s in grid]
    specs += [ModelSpec("laplacian-kernel", s) for s in grid]
    specs += [ModelSpec("polynomial-kernel", float(deg)) for deg in range(1, 6)]
    specs += [ModelSpec("sigmoid-kernel", s) for s in grid]
    specs += [ModelSpec("mlp", layers=(25,)), ModelSpec("mlp", layers=(25, 25))]
    return specs


def kernel_matrix(family: str, hyperparameter: float, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Gram block ``k(x_i, z_j)`` for one of the four kernel families."""
    if family == "gaussian-kernel":
        return np.exp(-cdist(x, z, "sqeuclidean") / (2.0 * hyperparameter**2))
    if family == "laplacian-kernel":
        return np.exp(-cdist(x, z, "cityblock") / hyperparameter)
    if family == "polynomial-kernel":
        return (x @ z.T + 1.0) ** int(hyperparameter)
    if family == "sigmoid-kernel":
        return np.tanh(hyperparameter * (x @ z.T))
    raise InvalidInputError(f"{family!r} is not a kernel family")


def mlp_param_count(input_dim: int, layers: Sequence[int]) -> int:
    widths = [input_dim, *layers, 1]
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


@dataclass(frozen=True, eq=False)
class PretrainedModel:
    """A trained predictor.

    Kernel models keep ``anchors``, dual ``coefficients`` and a ``bias``;
    mlp models keep per-layer ``weights`` and ``biases``.
    """

    id: int
    spec: ModelSpec
    input_dim: int
    anchors: np.ndarray | None = None
    coefficients: np.ndarray | None = None
    bias: float = 0.0
    weights: tuple[np.ndarray, ...] = field(default=())
    biases: tuple[np.ndarray, ...] = field(default=())

    @property
    def param_count(self) -> int:
        if self.spec.family == "mlp":
            return mlp_param_count(self.input_dim, self.spec.layers)
        return len(self.coefficients) + 1

    def predict_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise InvalidInputError(f"model {self.id} expects inputs of dimension {self.input_dim}, got shape {x.shape}")
        if self.spec.family == "mlp":
            return _mlp_forward(self.weights, self.biases, x)[-1][:, 0]
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], _PREDICT_CHUNK):
            block = x[start : start + _PREDICT_CHUNK]
            gram = kernel_matrix(self.spec.family, self.spec.hyperparameter, block, self.anchors)
            out[start : start + _PREDICT_CHUNK] = gram @ self.coefficients + self.bias
        return out

    def equals(self, other: "PretrainedModel") -> bool:
        """Bit-level equality of spec and learned parameters."""
        if self.spec != other.spec or self.input_dim != other.input_dim or self.bias != other.bias:
            return False
        pairs = [(self.anchors, other.anchors), (self.coefficients, other.coefficients)]
        pairs += list(zip(self.weights, other.weights)) + list(zip(self.biases, other.biases))
        if len(self.weights) != len(other.weights):
            return False
        for a, b in pairs:
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or a.tobytes() != b.tobytes()):
                return False
        return True


def predict(model: PretrainedModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("predict takes a single feature vector; use predict_batch for matrices")
    return float(model.predict_batch(x[None, :])[0])


def _mlp_forward(weights, biases, x):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _train_kernel(spec: ModelSpec, x: np.ndarray, y: np.ndarray, rng: np.random.Generator, model_id: int):
    if x.shape[0] > MAX_ANCHORS:
        keep = np.sort(rng.choice(x.shape[0], MAX_ANCHORS, replace=False))
        x, y = x[keep], y[keep]
    bias = float(y.mean())
    gram = kernel_matrix(spec.family, spec.hyperparameter, x, x)
    system = gram + spec.ridge * np.eye(x.shape[0])
    rhs = y - bias
    try:
        alpha = np.linalg.solve(system, rhs)
        if not np.all(np.isfinite(alpha)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        # sigmoid Gram matrices are not PSD; fall back to least squares
        alpha = np.linalg.lstsq(system, rhs, rcond=None)[0]
    if not np.all(np.isfinite(alpha)):
        raise NumericStateError(f"model {model_id} ({spec.label}): kernel system has no finite solution")
    return PretrainedModel(model_id, spec, x.shape[1], anchors=x.copy(), coefficients=alpha, bias=bias)


def _train_mlp(spec: ModelSpec, x: np.ndarray, y: np.ndarray, rng: np.random.Generator, model_id: int):
    widths = [x.shape[1], *spec.layers, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, (fan_in, fan_out)))
        biases.append(rng.uniform(-scale, scale, fan_out))

    n = x.shape[0]
    target = y[:, None]
    for epoch in range(spec.epochs):
        acts = _mlp_forward(weights, biases, x)
        grad = 2.0 * (acts[-1] - target) / n
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"model {model_id} ({spec.label}) diverged at epoch {epoch}")
        for layer in range(len(weights) - 1, -1, -1):
            gw = acts[layer].T @ grad
            gb = grad.sum(axis=0)
            if layer > 0:
                grad = (grad @ weights[layer].T) * (acts[layer] > 0)
            weights[layer] = weights[layer] - spec.step * gw
            biases[layer] = biases[layer] - spec.step * gb

    final = _mlp_forward(weights, biases, x)[-1]
    if not np.all(np.isfinite(final)):
        raise TrainingError(f"model {model_id} ({spec.label}) produced non-finite outputs")
    return PretrainedModel(model_id, spec, x.shape[1], weights=tuple(weights), biases=tuple(biases))


def train_model(spec: ModelSpec, pretrain, seed: int | np.random.SeedSequence, model_id: int = 0) -> PretrainedModel:
    """Fit one predictor on the pretrain split, deterministically in ``seed``.

    Kernel models solve ``(K + ridge I) alpha = y - mean(y)`` over at most
    2000 seeded anchors; mlp models run full-batch gradient descent on the
    mean squared error.
    """
    x = np.asarray(pretrain.features, dtype=float)
    y = np.asarray(pretrain.targets, dtype=float)
    if x.shape[0] == 0:
        raise TrainingError("cannot train on an empty pretrain set")
    rng = np.random.default_rng(seed)
    if spec.family == "mlp":
        return _train_mlp(spec, x, y, rng, model_id)
    return _train_kernel(spec, x, y, rng, model_id)


def model_cost(model: PretrainedModel, max_params: int) -> float:
    if not max_params >= model.param_count >= 1:
        raise InvalidInputError(f"need max_params >= param_count >= 1, got {max_params} and {model.param_count}")
    return model.param_count / max_params


@dataclass(frozen=True, eq=False)
class ModelCatalog:
    models: tuple[PretrainedModel, ...]
    costs: np.ndarray

    def __post_init__(self):
        if len(self.models) != len(self.costs) or not self.models:
            raise InvalidInputError("catalog needs one cost per model and at least one model")

    @property
    def size(self) -> int:
        return len(self.models)

    def predict_all(self, x) -> np.ndarray:
        """Predictions of every model on every row, shape (n, K)."""
        x = np.asarray(x, dtype=float)
        return np.column_stack([m.predict_batch(x) for m in self.models])

    @classmethod
    def from_models(cls, models: Sequence[PretrainedModel]) -> "ModelCatalog":
        max_params = max(m.param_count for m in models)
        costs = np.array([model_cost(m, max_params) for m in models])
        return cls(tuple(models), costs)


def build_catalog(specs: Sequence[ModelSpec], pretrain, seed: int) -> ModelCatalog:
    """Train every spec (model ``k`` gets the ``k``-th child of the seed's
    training stream) and price the models by normalized parameter count."""
    children = np.random.SeedSequence([int(seed), 0x7A00]).spawn(len(specs))
    models = []
    for k, (spec, child) in enumerate(zip(specs, children)):
        try:
            models.append(train_model(spec, pretrain, child, model_id=k))
        except (TrainingError, NumericStateError) as exc:
            raise type(exc)(f"training model {k} ({spec.label}) failed: {exc}") from exc
    return ModelCatalog.from_models(models)


def _model_to_dict(model: PretrainedModel) -> dict:
    d = {"id": model.id, "spec": model.spec.to_dict(), "input_dim": model.input_dim, "param_count": model.param_count}
    if model.spec.family == "mlp":
        d["weights"] = [w.tolist() for w in model.weights]
        d["biases"] = [b.tolist() for b in model.biases]
    else:
        d["anchors"] = model.anchors.tolist()
        d["coefficients"] = model.coefficients.tolist()
        d["bias"] = model.bias
    return d


def _model_from_dict(d: dict) -> PretrainedModel:
    spec = ModelSpec.from_dict(d["spec"])
    if spec.family == "mlp":
        model = PretrainedModel(
            d["id"], spec, d["input_dim"],
            weights=tuple(np.asarray(w, dtype=float) for w in d["weights"]),
            biases=tuple(np.asarray(b, dtype=float) for b in d["biases"]),
        )
    else:
        model = PretrainedModel(
            d["id"], spec, d["input_dim"],
            anchors=np.asarray(d["anchors"], dtype=float),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            bias=float(d["bias"]),
        )
    if model.param_count != d["param_count"]:
        raise InvalidInputError(f"model {d['id']}: stored param_count {d['param_count']} does not match coefficients")
    return model


def dump_catalog(catalog: ModelCatalog, path) -> None:
    """Write a self-describing JSON model dump (floats round-trip exactly)."""
    payload = {
        "format": "eflfg-catalog",
        "version": DUMP_VERSION,
        "costs": catalog.costs.tolist(),
        "models": [_model_to_dict(m) for m in catalog.models],
    }
    Path(path).write_text(json.dumps(payload))


def load_catalog(path) -> ModelCatalog:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "eflfg-catalog" or payload.get("version") != DUMP_VERSION:
        raise InvalidInputError(f"{path}: not a version-{DUMP_VERSION} catalog dump")
    models = [_model_from_dict(d) for d in payload["models"]]
    return ModelCatalog(tuple(models), np.asarray(payload["costs"], dtype=float))
