"""Server-side decision core: node-draw distribution, ensemble construction,
importance-sampling loss estimates and multiplicative weight updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericStateError
from .graph import WEIGHT_FLOOR, FeedbackGraph

RESCALE_BELOW = 1e-100


@dataclass(frozen=True, eq=False)
class ServerState:
    w: np.ndarray  # model confidence
    u: np.ndarray  # node confidence
    eta: float
    xi: float
    round: int = 1

    def __post_init__(self):
        if not 0.0 <= self.xi < 1.0:
            raise ConfigError(f"exploration rate must lie in [0, 1), got {self.xi}")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ConfigError(f"learning rate must be a finite non-negative real, got {self.eta}")
        for name in ("w", "u"):
            v = getattr(self, name)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise NumericStateError(f"{name} weights must be finite and strictly positive")

    @classmethod
    def initial(cls, n_models: int, eta: float, xi: float) -> "ServerState":
        return cls(np.ones(n_models), np.ones(n_models), eta, xi, 1)

    @property
    def size(self) -> int:
        return len(self.w)


@dataclass(frozen=True, eq=False)
class RoundDecision:
    pmf: np.ndarray
    drawn: int
    transmitted: tuple[int, ...]
    ensemble_weights: np.ndarray  # aligned with ``transmitted``


def learning_rates(schedule: str, rounds: int, n_models: int) -> tuple[float, float]:
    """(eta, xi) for a named schedule.

    ``one-over-sqrt-T`` sets both to 1/sqrt(T). ``theorem-1`` uses
    eta = sqrt(ln K / T) and xi = (ln K)^(3/4) / T^(1/4), with xi capped at 0.5.
    """
    t = max(int(rounds), 1)
    if schedule == "one-over-sqrt-T":
        rate = 1.0 / math.sqrt(t)
        return rate, min(rate, 0.5)
    if schedule == "theorem-1":
        log_k = math.log(n_models) if n_models > 1 else 0.0
        return math.sqrt(log_k / t), min(log_k**0.75 / t**0.25, 0.5)
    raise ConfigError(f"unknown rate schedule {schedule!r}")


def compute_pmf(state: ServerState, dominating) -> np.ndarray:
    """Exploitation by node weight mixed with uniform exploration over the dominating set."""
    dominating = list(dominating)
    if not dominating:
        raise InvalidInputError("dominating set must be non-empty")
    total = float(np.sum(state.u))
    if not (math.isfinite(total) and total > 0):
        raise NumericStateError(f"node-weight total is {total}")
    pmf = (1.0 - state.xi) * state.u / total
    pmf[dominating] += state.xi / len(dominating)
    return pmf


def draw_node(pmf, rng: np.random.Generator) -> int:
    """Inverse-CDF categorical draw consuming one uniform from ``rng``."""
    pmf = np.asarray(pmf, dtype=float)
    cdf = np.cumsum(pmf)
    x = rng.random() * cdf[-1]
    k = int(np.searchsorted(cdf, x, side="right"))
    if k >= len(pmf):
        k = int(np.flatnonzero(pmf > 0)[-1])
    return k


def observation_probabilities(graph: FeedbackGraph, pmf) -> np.ndarray:
    """Probability that each model is transmitted: mass of its in-neighbors."""
    return graph.adjacency.T.astype(float) @ np.asarray(pmf, dtype=float)


def observation_probability(graph: FeedbackGraph, pmf, k: int) -> float:
    return float(sum(pmf[j] for j in graph.in_neighbors[k]))


def ensemble_weights(state: ServerState, transmitted) -> np.ndarray:
    w = state.w[list(transmitted)]
    total = float(np.sum(w))
    if not total > 0:
        raise NumericStateError("transmitted models carry no weight")
    return w / total


def ensemble_predict(state: ServerState, transmitted, catalog, x) -> float:
    transmitted = list(transmitted)
    if not transmitted:
        raise InvalidInputError("ensemble needs at least one transmitted model")
    weights = ensemble_weights(state, transmitted)
    x = np.asarray(x, dtype=float)[None, :]
    preds = np.array([catalog.models[k].predict_batch(x)[0] for k in transmitted])
    return float(weights @ preds)


def node_ensemble_matrix(graph: FeedbackGraph, w) -> np.ndarray:
    """Row ``k`` holds the normalized ensemble weights used when node ``k`` is drawn."""
    m = graph.adjacency * np.asarray(w, dtype=float)[None, :]
    return m / m.sum(axis=1, keepdims=True)


def estimate_model_loss(summed_loss: float, q: float, in_s: bool) -> float:
    if q <= 0:
        raise NumericStateError(f"observation probability must be positive, got {q}")
    return summed_loss / q if in_s else 0.0


def estimate_ensemble_loss(summed_loss: float, p: float, is_drawn: bool) -> float:
    if p <= 0:
        raise NumericStateError(f"draw probability must be positive, got {p}")
    return summed_loss / p if is_drawn else 0.0


def round_estimates(graph: FeedbackGraph, pmf, drawn: int, member_losses, node_losses):
    """Loss estimates for every model and every node given the drawn node.

    Only ``member_losses[k]`` for transmitted ``k`` and ``node_losses[drawn]``
    are read; everything else may hold any placeholder.
    """
    q = observation_probabilities(graph, pmf)
    transmitted = set(graph.out_neighbors[drawn])
    model_est = np.array(
        [estimate_model_loss(float(member_losses[k]) if k in transmitted else 0.0, q[k], k in transmitted)
         for k in range(graph.size)]
    )
    ens_est = np.array(
        [estimate_ensemble_loss(float(node_losses[k]) if k == drawn else 0.0, pmf[k], k == drawn)
         for k in range(graph.size)]
    )
    return model_est, ens_est


def _multiplicative(weights: np.ndarray, estimates: np.ndarray, eta: float) -> np.ndarray:
    out = weights * np.exp(-eta * estimates)
    if out.max() < RESCALE_BELOW or out.min() == 0.0:
        # redo in log space; a common rescaling leaves every weight ratio unchanged
        logw = np.log(weights) - eta * estimates
        top = logw.max()
        if top < math.log(RESCALE_BELOW):
            logw = logw - top
        out = np.maximum(np.exp(logw), WEIGHT_FLOOR)
    if not np.all(np.isfinite(out)):
        raise NumericStateError("weight update produced non-finite values")
    return out


def update_weights(state: ServerState, model_estimates, ensemble_estimates) -> ServerState:
    """``w_k <- w_k exp(-eta l_k)`` and ``u_k <- u_k exp(-eta lhat_k)``."""
    model_estimates = np.asarray(model_estimates, dtype=float)
    ensemble_estimates = np.asarray(ensemble_estimates, dtype=float)
    for est in (model_estimates, ensemble_estimates):
        if not (np.all(np.isfinite(est)) and np.all(est >= 0)):
            raise InvalidInputError("loss estimates must be finite and non-negative")
    return replace(
        state,
        w=_multiplicative(state.w, model_estimates, state.eta),
        u=_multiplicative(state.u, ensemble_estimates, state.eta),
        round=state.round + 1,
    )


def expected_round_loss(pmf, per_node_losses) -> float:
    """Exact conditional expectation of the summed ensemble loss over the node draw."""
    return float(np.dot(np.asarray(pmf, dtype=float), np.asarray(per_node_losses, dtype=float)))
