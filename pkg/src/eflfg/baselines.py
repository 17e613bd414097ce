"""Comparators: the full ensemble, a FedBoost-style surrogate that meets the
budget only in expectation, and the best fixed model in hindsight."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import clipped_squared_losses
from .errors import ConfigError, NumericStateError
from .graph import ordered_sum
from .server import _multiplicative
from .sim import (
    ExperimentTrace,
    RoundInput,
    RoundRecord,
    RunStreams,
    SimulationConfig,
    _choose_clients,
    config_snapshot,
    iter_round_inputs,
)

FEDBOOST = "fedboost-surrogate"
FULL_ENSEMBLE = "full-ensemble"
BISECTION_STEPS = 100

# Prediction sent to clients when the surrogate samples no model at all.
EMPTY_ENSEMBLE_PREDICTION = 0.0


@dataclass(frozen=True, eq=False)
class BaselineState:
    weights: np.ndarray
    eta: float
    inclusion: np.ndarray | None = None
    round: int = 1

    @classmethod
    def initial(cls, n_models: int, eta: float) -> "BaselineState":
        return cls(np.ones(n_models), eta)


def inclusion_probabilities(weights, costs, budget: float) -> np.ndarray:
    """``pi_k = min(1, gamma w_k / sum w)`` with ``gamma`` found by bisection
    so that the expected transmitted cost ``sum pi_k c_k`` equals the budget."""
    w = np.asarray(weights, dtype=float)
    c = np.asarray(costs, dtype=float)
    if budget < c.max():
        raise ConfigError(f"budget {budget} is below the largest model cost {c.max()}")
    if ordered_sum(c) <= budget:
        return np.ones_like(w)
    share = w / w.sum()

    def expected_cost(log_gamma):
        return float(np.minimum(1.0, math.exp(log_gamma) * share) @ c)

    # bisect on log(gamma): the bracket spans hundreds of orders of magnitude
    # once some weights sit near the underflow floor
    lo = math.log(budget / float(share @ c)) - 1.0
    hi = math.log(1.0 / share.min()) + 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if expected_cost(mid) < budget:
            lo = mid
        else:
            hi = mid
    pi = np.minimum(1.0, math.exp(hi) * share)
    if abs(float(pi @ c) - budget) > 1e-9 * budget:
        raise NumericStateError(f"inclusion bisection did not converge: expected cost {float(pi @ c)} vs budget {budget}")
    return pi


def fedboost_round(state: BaselineState, costs, budget: float, round_input: RoundInput,
                   config: SimulationConfig, streams: RunStreams):
    """One round of the expected-budget surrogate.

    Returns ``(next_state, record, full_information_losses)``.
    """
    c = np.asarray(costs, dtype=float)
    pi = inclusion_probabilities(state.weights, c, budget)
    included = streams.fedboost.random(len(c)) < pi
    sent = tuple(int(k) for k in np.flatnonzero(included))

    clients = _choose_clients(max(len(sent), 1), round_input, config, streams.clients)
    rows = list(clients)
    y = round_input.targets[rows]
    preds = round_input.predictions[rows]
    member = clipped_squared_losses(preds, y[:, None]).sum(axis=0)

    if sent:
        w = state.weights[list(sent)]
        ens_pred = preds[:, list(sent)] @ (w / w.sum())
    else:
        ens_pred = np.full(len(rows), EMPTY_ENSEMBLE_PREDICTION)

    est = np.where(included, member / pi, 0.0)
    next_state = replace(state, weights=_multiplicative(state.weights, est, state.eta),
                         inclusion=pi, round=state.round + 1)
    record = RoundRecord(
        t=state.round,
        drawn=None,
        transmitted=sent,
        clients=clients,
        transmitted_cost=ordered_sum([c[k] for k in sent]),
        predictions=ens_pred,
        targets=y,
        ensemble_losses=clipped_squared_losses(ens_pred, y),
        squared_errors=(ens_pred - y) ** 2,
        member_losses={k: float(member[k]) for k in sent},
        model_estimates=est,
    )
    return next_state, record, member


def full_ensemble_round(state: BaselineState, costs, round_input: RoundInput,
                        config: SimulationConfig, streams: RunStreams):
    """Send every model; update mixture weights on full-information losses."""
    c = np.asarray(costs, dtype=float)
    k_all = tuple(range(len(c)))
    clients = _choose_clients(len(c), round_input, config, streams.clients)
    rows = list(clients)
    y = round_input.targets[rows]
    preds = round_input.predictions[rows]
    member = clipped_squared_losses(preds, y[:, None]).sum(axis=0)
    ens_pred = preds @ (state.weights / state.weights.sum())
    ens_loss = clipped_squared_losses(ens_pred, y)

    next_state = replace(state, weights=_multiplicative(state.weights, member, state.eta), round=state.round + 1)
    record = RoundRecord(
        t=state.round,
        drawn=None,
        transmitted=k_all,
        clients=clients,
        transmitted_cost=ordered_sum(c),
        predictions=ens_pred,
        targets=y,
        ensemble_losses=ens_loss,
        squared_errors=(ens_pred - y) ** 2,
        member_losses={k: float(member[k]) for k in k_all},
        model_estimates=member.copy(),
        expected_ensemble_loss=float(ens_loss.sum()),
    )
    return next_state, record, member


def run_baseline(algorithm: str, config: SimulationConfig, catalog, stream, seed: int) -> ExperimentTrace:
    if algorithm not in (FEDBOOST, FULL_ENSEMBLE):
        raise ConfigError(f"unknown baseline {algorithm!r}")
    costs = np.asarray(catalog.costs, dtype=float)
    if config.budget < costs.max():
        raise ConfigError(f"budget {config.budget} is below the largest model cost {costs.max()}")
    streams = RunStreams(seed)
    state = BaselineState.initial(catalog.size, config.eta)
    trace = ExperimentTrace(algorithm, int(seed), config_snapshot(config), config.budget)
    oracle = []
    for t, round_input in enumerate(iter_round_inputs(stream, catalog)):
        if t == config.rounds:
            break
        if algorithm == FEDBOOST:
            state, record, full = fedboost_round(state, costs, config.budget, round_input, config, streams)
        else:
            state, record, full = full_ensemble_round(state, costs, round_input, config, streams)
        trace.records.append(record)
        oracle.append(full)
    if config.oracle:
        trace.oracle_losses = np.array(oracle).reshape(len(oracle), catalog.size)
    return trace


def best_fixed_model(oracle_losses) -> tuple[int, np.ndarray]:
    """Model with the smallest cumulative full-information loss (ties to the
    lowest index) and its cumulative loss series."""
    losses = np.asarray(oracle_losses, dtype=float)
    cumulative = np.cumsum(losses, axis=0)
    best = int(np.argmin(cumulative[-1]))
    return best, cumulative[:, best]
