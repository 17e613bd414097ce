"""Budget-constrained ensemble federated learning driven by a server-side
feedback graph, with baselines and regret diagnostics."""

from .core import Budget, DataSample, clipped_squared_loss
from .graph import FeedbackGraph, generate_feedback_graph, greedy_dominating_set, independence_number
from .server import ServerState, compute_pmf, update_weights
from .sim import ExperimentTrace, RoundRecord, SimulationConfig, cumulative_regret, mse_at, run_experiment
from .zoo import ModelCatalog, ModelSpec, build_catalog, paper_zoo

__version__ = "0.1.0"
