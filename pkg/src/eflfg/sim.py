"""Round orchestration for EFL-FG, shared round records, traces and metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np

from .core import clipped_squared_losses, substream
from .errors import BandwidthInfeasibleError, ConfigError, EflFgError, InvariantViolation, SizingError
from .graph import MAX_ALPHA_VERTICES, FeedbackGraph, generate_feedback_graph, independence_number, ordered_sum
from .server import (
    RoundDecision,
    ServerState,
    compute_pmf,
    draw_node,
    ensemble_weights,
    expected_round_loss,
    node_ensemble_matrix,
    round_estimates,
    update_weights,
)

JENSEN_TOL = 1e-12


@dataclass(frozen=True)
class SimulationConfig:
    budget: float = 3.0
    rounds: int = 2000
    clients: int = 100
    n_max: int = 10
    b_t: float = 1000.0
    b_loss: float = 1.0
    eta: float = 1.0 / math.sqrt(2000)
    xi: float = 1.0 / math.sqrt(2000)
    oracle: bool = True
    alpha: bool = False
    check_jensen: bool = True

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.clients < 1 or self.n_max < 1:
            raise ConfigError("clients and n_max must be >= 1")
        if not (self.b_t > 0 and self.b_loss > 0):
            raise ConfigError("b_t and b_loss must be positive")


class RunStreams:
    """Named random sub-streams of one experiment seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.clients = substream(seed, "client-selection")
        self.node = substream(seed, "node-draw")
        self.fedboost = substream(seed, "fedboost-inclusion")


@dataclass(frozen=True, eq=False)
class RoundInput:
    """Every client's round-t sample, with every model's prediction on it.

    Predictions are precomputed for speed; the learner only reads the columns
    of transmitted models.
    """

    targets: np.ndarray  # (N,)
    predictions: np.ndarray  # (N, K)


@dataclass(frozen=True, eq=False)
class RoundRecord:
    t: int
    drawn: int | None
    transmitted: tuple[int, ...]
    clients: tuple[int, ...]
    transmitted_cost: float
    predictions: np.ndarray  # ensemble prediction per selected client
    targets: np.ndarray
    ensemble_losses: np.ndarray  # clipped, per client
    squared_errors: np.ndarray  # unclipped, per client
    member_losses: dict[int, float]  # summed over clients, transmitted models only
    model_estimates: np.ndarray | None = None
    ensemble_estimates: np.ndarray | None = None
    expected_ensemble_loss: float | None = None
    dom_set_size: int | None = None
    alpha: int | None = None
    jensen_slack: float | None = None
    pmf: np.ndarray | None = None

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @property
    def realized_loss(self) -> float:
        return float(np.sum(self.ensemble_losses))

    @property
    def mse(self) -> float:
        return float(np.mean(self.squared_errors))


@dataclass(eq=False)
class ExperimentTrace:
    algorithm: str
    seed: int
    config: dict
    budget: float
    records: list[RoundRecord] = field(default_factory=list)
    oracle_losses: np.ndarray | None = None  # (T, K) full-information summed losses

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, per_model_estimates: bool = False) -> str:
        return trace_csv(self, per_model_estimates)


def client_count(b_t: float, b_loss: float, out_degree: int, n_max: int) -> int:
    """Clients whose loss reports fit the uplink without overlapping."""
    if not (b_t > 0 and b_loss > 0) or out_degree < 1:
        raise ConfigError("client_count needs b_t > 0, b_loss > 0 and out_degree >= 1")
    ratio = b_t / (b_loss * (out_degree + 1))
    fit = int(math.floor(ratio)) if math.isfinite(ratio) else n_max
    if fit == 0:
        raise BandwidthInfeasibleError(
            f"bandwidth {b_t} cannot carry {out_degree + 1} losses of size {b_loss} for even one client"
        )
    return min(n_max, fit)


def select_clients(n_t: int, n_total: int, rng: np.random.Generator) -> tuple[int, ...]:
    if not 1 <= n_t <= n_total:
        raise SizingError(f"cannot select {n_t} clients out of {n_total}")
    return tuple(sorted(int(i) for i in rng.choice(n_total, size=n_t, replace=False)))


def iter_round_inputs(stream, catalog) -> Iterator[RoundInput]:
    table = catalog.predict_all(stream.pool_features) if stream.rounds else None
    for t in range(stream.rounds):
        rows = stream.slots[t]
        yield RoundInput(stream.pool_targets[rows], table[rows])


def _choose_clients(out_degree: int, round_input: RoundInput, config: SimulationConfig, rng) -> tuple[int, ...]:
    n_total = len(round_input.targets)
    n_t = client_count(config.b_t, config.b_loss, out_degree, min(config.n_max, n_total))
    return select_clients(n_t, n_total, rng)


def decide(state: ServerState, graph: FeedbackGraph, rng: np.random.Generator) -> RoundDecision:
    pmf = compute_pmf(state, graph.dominating_set)
    drawn = draw_node(pmf, rng)
    transmitted = graph.out_neighbors[drawn]
    return RoundDecision(pmf, drawn, transmitted, ensemble_weights(state, transmitted))


def run_round(state: ServerState, costs, graph_prev, round_input: RoundInput, config: SimulationConfig, streams: RunStreams):
    """One EFL-FG round. Returns ``(next_state, graph, record, oracle_losses)``;
    ``oracle_losses`` is ``None`` unless ``config.oracle`` is set."""
    t = state.round
    graph = generate_feedback_graph(state.w, costs, config.budget, graph_prev)
    decision = decide(state, graph, streams.node)
    drawn, transmitted, pmf = decision.drawn, decision.transmitted, decision.pmf

    clients = _choose_clients(len(transmitted), round_input, config, streams.clients)
    rows = list(clients)
    y = round_input.targets[rows]
    preds = round_input.predictions[rows]  # (|C|, K)

    # every node's ensemble on these clients: needed for the exact expected loss
    mix = node_ensemble_matrix(graph, state.w)
    node_preds = preds @ mix.T
    node_losses = clipped_squared_losses(node_preds, y[:, None]).sum(axis=0)
    member_losses = clipped_squared_losses(preds, y[:, None]).sum(axis=0)

    ens_pred = node_preds[:, drawn]
    ens_loss = clipped_squared_losses(ens_pred, y)
    sq = (ens_pred - y) ** 2

    slack = None
    if config.check_jensen:
        member_sq = (preds - y[:, None]) ** 2
        mixed = member_sq @ mix.T
        gap = mixed - (node_preds - y[:, None]) ** 2
        tol = JENSEN_TOL * np.maximum(1.0, mixed)
        if np.any(gap < -tol):
            raise InvariantViolation(f"round {t}: ensemble loss exceeds the weighted member loss")
        slack = float(gap.min())

    model_est, ens_est = round_estimates(graph, pmf, drawn, member_losses, node_losses)
    try:
        next_state = update_weights(state, model_est, ens_est)
    except EflFgError as exc:
        raise type(exc)(f"round {t}: {exc}") from exc

    alpha = None
    if config.alpha and graph.size <= MAX_ALPHA_VERTICES:
        alpha = independence_number(graph)

    record = RoundRecord(
        t=t,
        drawn=drawn,
        transmitted=tuple(transmitted),
        clients=clients,
        transmitted_cost=ordered_sum([costs[k] for k in transmitted]),
        predictions=ens_pred,
        targets=y,
        ensemble_losses=ens_loss,
        squared_errors=sq,
        member_losses={k: float(member_losses[k]) for k in transmitted},
        model_estimates=model_est,
        ensemble_estimates=ens_est,
        expected_ensemble_loss=expected_round_loss(pmf, node_losses),
        dom_set_size=len(graph.dominating_set),
        alpha=alpha,
        jensen_slack=slack,
        pmf=pmf,
    )
    return next_state, graph, record, (member_losses if config.oracle else None)


def run_experiment(
    config: SimulationConfig,
    catalog,
    stream,
    seed: int,
    graph_sink: Callable[[FeedbackGraph], None] | None = None,
) -> ExperimentTrace:
    """Run EFL-FG for ``config.rounds`` rounds over ``stream``."""
    if stream.rounds < config.rounds:
        raise SizingError(f"stream has {stream.rounds} rounds, config asks for {config.rounds}")
    costs = np.asarray(catalog.costs, dtype=float)
    if config.budget < costs.max():
        raise ConfigError(f"budget {config.budget} is below the largest model cost {costs.max()}")
    streams = RunStreams(seed)
    state = ServerState.initial(catalog.size, config.eta, config.xi)
    trace = ExperimentTrace("efl-fg", int(seed), config_snapshot(config), config.budget)
    oracle = []
    graph = None
    for t, round_input in enumerate(iter_round_inputs(stream, catalog)):
        if t == config.rounds:
            break
        state, graph, record, full = run_round(state, costs, graph, round_input, config, streams)
        if graph_sink is not None:
            graph_sink(graph)
        trace.records.append(record)
        if full is not None:
            oracle.append(full)
    if config.oracle:
        trace.oracle_losses = np.array(oracle).reshape(len(oracle), catalog.size)
    return trace


def config_snapshot(config: SimulationConfig) -> dict:
    return asdict(config)


def mse_series(trace: ExperimentTrace) -> np.ndarray:
    """Running MSE: average over rounds of the per-round client mean squared error."""
    per_round = np.array([r.mse for r in trace.records])
    if per_round.size == 0:
        return per_round
    return np.cumsum(per_round) / np.arange(1, per_round.size + 1)


def mse_at(trace: ExperimentTrace, t: int) -> float:
    if not 1 <= t <= len(trace.records):
        raise IndexError(f"round {t} outside 1..{len(trace.records)}")
    return float(mse_series(trace)[t - 1])


def cumulative_regret(trace: ExperimentTrace) -> tuple[np.ndarray, int]:
    """Regret series ``R_1..R_T`` and the best model in hindsight at ``T``.

    Uses the exact expected ensemble loss where the algorithm provides one,
    otherwise the realized summed loss.
    """
    if trace.oracle_losses is None:
        raise EflFgError("trace carries no full-information losses; rerun with the oracle flag")
    learner = np.array(
        [r.expected_ensemble_loss if r.expected_ensemble_loss is not None else r.realized_loss for r in trace.records]
    )
    if learner.size == 0:
        return learner, 0
    comparator = np.cumsum(trace.oracle_losses, axis=0)
    regret = np.cumsum(learner) - comparator.min(axis=1)
    return regret, int(np.argmin(comparator[-1]))


def budget_violation_rate(trace: ExperimentTrace, budget: float | None = None) -> float:
    budget = trace.budget if budget is None else budget
    if not trace.records:
        return 0.0
    return sum(r.transmitted_cost > budget for r in trace.records) / len(trace.records)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


TRACE_COLUMNS = [
    "algorithm", "t", "I_t", "S_t", "cost", "n_clients", "realized_ensemble_loss_mean",
    "expected_ensemble_loss", "mse_t", "dom_set_size", "alpha",
]


def trace_csv(trace: ExperimentTrace, per_model_estimates: bool = False) -> str:
    k = trace.oracle_losses.shape[1] if trace.oracle_losses is not None else None
    if k is None and trace.records and trace.records[0].model_estimates is not None:
        k = len(trace.records[0].model_estimates)
    columns = list(TRACE_COLUMNS)
    if per_model_estimates and k:
        columns += [f"model_est_{j}" for j in range(k)] + [f"node_est_{j}" for j in range(k)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    mse = mse_series(trace)
    for rec, m in zip(trace.records, mse):
        row = [
            trace.algorithm, rec.t, _fmt(rec.drawn), ";".join(map(str, rec.transmitted)),
            _fmt(rec.transmitted_cost), rec.n_clients, _fmt(float(np.mean(rec.ensemble_losses))),
            _fmt(rec.expected_ensemble_loss), _fmt(m), _fmt(rec.dom_set_size), _fmt(rec.alpha),
        ]
        if per_model_estimates and k:
            for est in (rec.model_estimates, rec.ensemble_estimates):
                row += [_fmt(v) for v in est] if est is not None else [""] * k
        writer.writerow(row)
    return buf.getvalue()
