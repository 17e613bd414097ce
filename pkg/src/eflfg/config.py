"""Experiment configuration: JSON parsing, validation, defaults and round-trip."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError, InvalidInputError
from .server import learning_rates
from .zoo import ModelSpec, paper_zoo

ALGORITHMS = ("efl-fg", "fedboost-surrogate", "full-ensemble")
RATE_TOKENS = ("one-over-sqrt-T", "theorem-1")
SYNTHETIC_KEYS = {"feature_count", "sample_count", "noise", "family", "slope", "frequency", "name"}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    zoo: Any = "paper"
    budget: float = 3.0
    rounds: int = 2000
    clients: int = 100
    n_max: int = 10
    b_t: float = 1000.0
    b_loss: float = 1.0
    eta: Any = "one-over-sqrt-T"
    xi: Any = "one-over-sqrt-T"
    pretrain_fraction: float = 0.1
    algorithms: tuple[str, ...] = ("efl-fg", "fedboost-surrogate")
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    oracle: bool = True
    graph_dump: bool = False
    alpha: bool = False
    per_model_estimates: bool = False

    def model_specs(self) -> list[ModelSpec]:
        if self.zoo == "paper":
            return paper_zoo()
        return [ModelSpec.from_dict(d) for d in self.zoo]

    def rates(self) -> tuple[float, float]:
        """Resolved (eta, xi)."""
        k = len(self.model_specs())
        out = []
        for key, which in (("eta", 0), ("xi", 1)):
            value = getattr(self, key)
            out.append(learning_rates(value, self.rounds, k)[which] if isinstance(value, str) else float(value))
        return out[0], out[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["seeds"] = list(self.seeds)
        return d


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _expect(key, value, kinds, what):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{key}: expected {what}, got {value!r}")
    if not isinstance(value, kinds):
        raise ConfigError(f"{key}: expected {what}, got {type(value).__name__} {value!r}")
    return value


def _check_dataset(d) -> dict:
    _expect("dataset", d, (dict,), "an object with 'csv' or 'synthetic'")
    if ("csv" in d) == ("synthetic" in d):
        raise ConfigError("dataset: give exactly one of 'csv' or 'synthetic'")
    if "csv" in d:
        unknown = set(d) - {"csv", "target", "name"}
        if unknown:
            raise ConfigError(f"dataset: unknown key(s) {sorted(unknown)}")
        _expect("dataset.csv", d["csv"], (str,), "a file path")
        if "target" not in d:
            raise ConfigError("dataset.target: required with 'csv' (column name or index)")
        _expect("dataset.target", d["target"], (str, int), "a column name or index")
        return dict(d)
    unknown = set(d) - {"synthetic"}
    if unknown:
        raise ConfigError(f"dataset: unknown key(s) {sorted(unknown)}")
    syn = _expect("dataset.synthetic", d["synthetic"], (dict,), "an object")
    unknown = set(syn) - SYNTHETIC_KEYS
    if unknown:
        raise ConfigError(f"dataset.synthetic: unknown key(s) {sorted(unknown)}")
    for key in ("feature_count", "sample_count"):
        if key not in syn:
            raise ConfigError(f"dataset.synthetic.{key}: required")
        if _expect(f"dataset.synthetic.{key}", syn[key], (int,), "a positive integer") <= 0:
            raise ConfigError(f"dataset.synthetic.{key}: must be > 0")
    if syn.get("family", "linear") not in ("linear", "sine"):
        raise ConfigError("dataset.synthetic.family: must be 'linear' or 'sine'")
    return {"synthetic": dict(syn)}


def _check_rate(key, value):
    if isinstance(value, str):
        if value not in RATE_TOKENS:
            raise ConfigError(f"{key}: token must be one of {RATE_TOKENS}, got {value!r}")
        return value
    _expect(key, value, (int, float), f"a real or one of {RATE_TOKENS}")
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"{key}: must be a finite non-negative real")
    if key == "xi" and value >= 1:
        raise ConfigError("xi: exploration rate must be < 1")
    return float(value)


def config_from_dict(raw: dict) -> ExperimentConfig:
    _expect("config", raw, (dict,), "a JSON object")
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}; allowed: {sorted(_FIELDS)}")
    if "dataset" not in raw:
        raise ConfigError("dataset: required")
    kw: dict[str, Any] = {"dataset": _check_dataset(raw["dataset"])}

    if "zoo" in raw:
        zoo = raw["zoo"]
        if zoo != "paper":
            _expect("zoo", zoo, (list,), "'paper' or a list of model specs")
            if not zoo:
                raise ConfigError("zoo: needs at least one model spec")
            for i, spec in enumerate(zoo):
                try:
                    ModelSpec.from_dict(_expect(f"zoo[{i}]", spec, (dict,), "a model spec object"))
                except (TypeError, InvalidInputError) as exc:
                    raise ConfigError(f"zoo[{i}]: {exc}") from None
            zoo = [dict(s) for s in zoo]
        kw["zoo"] = zoo

    for key in ("budget", "b_t", "b_loss"):
        if key in raw:
            v = float(_expect(key, raw[key], (int, float), "a positive real"))
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key}: must be a positive finite real")
            kw[key] = v
    for key, low in (("rounds", 0), ("clients", 1), ("n_max", 1)):
        if key in raw:
            if _expect(key, raw[key], (int,), "an integer") < low:
                raise ConfigError(f"{key}: must be >= {low}")
            kw[key] = raw[key]
    for key in ("eta", "xi"):
        if key in raw:
            kw[key] = _check_rate(key, raw[key])
    if "pretrain_fraction" in raw:
        v = float(_expect("pretrain_fraction", raw["pretrain_fraction"], (int, float), "a real in (0, 1)"))
        if not 0 < v < 1:
            raise ConfigError("pretrain_fraction: must lie in (0, 1)")
        kw["pretrain_fraction"] = v
    if "algorithms" in raw:
        algs = _expect("algorithms", raw["algorithms"], (list,), "a list")
        bad = [a for a in algs if a not in ALGORITHMS]
        if bad or not algs:
            raise ConfigError(f"algorithms: must be a non-empty subset of {ALGORITHMS}, got {algs}")
        kw["algorithms"] = tuple(algs)
    if "seeds" in raw:
        seeds = _expect("seeds", raw["seeds"], (list,), "a list of non-negative integers")
        if not seeds or any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in seeds):
            raise ConfigError("seeds: must be a non-empty list of non-negative integers")
        kw["seeds"] = tuple(seeds)
    if "output_dir" in raw:
        kw["output_dir"] = _expect("output_dir", raw["output_dir"], (str,), "a path")
    for key in ("oracle", "graph_dump", "alpha", "per_model_estimates"):
        if key in raw:
            kw[key] = _expect(key, raw[key], (bool,), "true or false")

    cfg = ExperimentConfig(**kw)
    # costs are normalized so the largest is exactly 1
    if cfg.budget < 1.0:
        raise ConfigError(
            f"budget: {cfg.budget} violates B >= c_k; the most expensive model always costs 1"
        )
    eta, xi = cfg.rates()
    if not 0 <= xi < 1:
        raise ConfigError(f"xi: resolved exploration rate {xi} outside [0, 1)")
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
