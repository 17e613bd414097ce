"""Per-round feedback graph over the model zoo.

Each vertex greedily collects out-neighbors by confidence-per-cost while the
neighborhood stays within the transmission budget and, from the second round
on, within the previous neighborhood's total (current) weight. Cost and weight
totals are always accumulated left to right in insertion order, so the
budget comparison made while building a neighborhood is bit-identical to
``neighborhood_cost`` on the finished graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, DiagnosticUnavailableError

WEIGHT_FLOOR = 1e-300
MAX_ALPHA_VERTICES = 25


@dataclass(frozen=True)
class FeedbackGraph:
    round: int
    out_neighbors: tuple[tuple[int, ...], ...]  # insertion order, self first
    dominating_set: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.out_neighbors)

    @cached_property
    def in_neighbors(self) -> tuple[frozenset, ...]:
        ins = [set() for _ in self.out_neighbors]
        for k, outs in enumerate(self.out_neighbors):
            for j in outs:
                ins[j].add(k)
        return tuple(frozenset(s) for s in ins)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``A[k, j]`` true iff edge (k, j), i.e. j is an out-neighbor of k."""
        a = np.zeros((self.size, self.size), dtype=bool)
        for k, outs in enumerate(self.out_neighbors):
            a[k, list(outs)] = True
        return a

    def edges(self) -> set[tuple[int, int]]:
        return {(k, j) for k, outs in enumerate(self.out_neighbors) for j in outs}

    def dump(self) -> str:
        lines = [f"{k}: " + " ".join(map(str, outs)) for k, outs in enumerate(self.out_neighbors)]
        lines.append("D: " + " ".join(map(str, self.dominating_set)))
        return "\n".join(lines) + "\n"


def ordered_sum(values: Sequence[float]) -> float:
    total = 0.0
    for v in values:
        total += float(v)
    return total


def neighborhood_cost(graph: FeedbackGraph, costs, k: int) -> float:
    return ordered_sum([costs[j] for j in graph.out_neighbors[k]])


def neighborhood_weight_sum(graph: FeedbackGraph, weights, k: int) -> float:
    """Total current weight of vertex ``k``'s out-neighborhood."""
    return ordered_sum([weights[j] for j in graph.out_neighbors[k]])


def floor_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return np.maximum(w, WEIGHT_FLOOR)


def candidate_set(k, current_out, weights, costs, budget, prev_weight_bound=math.inf) -> list[int]:
    """Vertices that can still join ``current_out`` under both the budget and
    the weight bound. ``k`` is accepted for signature symmetry only."""
    current = list(current_out)
    cost_sum = ordered_sum([costs[j] for j in current])
    weight_sum = ordered_sum([weights[j] for j in current])
    members = set(current)
    return [
        i
        for i in range(len(costs))
        if i not in members
        and cost_sum + float(costs[i]) <= budget
        and weight_sum + float(weights[i]) <= prev_weight_bound
    ]


def select_candidate(candidates, current_out, weights, costs) -> int:
    """Candidate with the largest weight per resulting neighborhood cost; ties go to the lowest index."""
    if not candidates:
        raise ContractViolation("select_candidate called with no candidates")
    cost_sum = ordered_sum([costs[j] for j in current_out])
    best, best_ratio = -1, -math.inf
    for i in sorted(candidates):
        ratio = float(weights[i]) / (cost_sum + float(costs[i]))
        if ratio > best_ratio:
            best, best_ratio = i, ratio
    return best


def _grow_neighborhood(k: int, w: np.ndarray, c: np.ndarray, budget: float, bound: float) -> tuple[int, ...]:
    # vectorized equivalent of repeated candidate_set + select_candidate
    out = [k]
    free = np.ones(len(c), dtype=bool)
    free[k] = False
    cost_sum = float(c[k])
    weight_sum = float(w[k])
    while True:
        mask = free & (cost_sum + c <= budget) & (weight_sum + w <= bound)
        if not mask.any():
            return tuple(out)
        ratios = np.where(mask, w / (cost_sum + c), -np.inf)
        d = int(np.argmax(ratios))
        out.append(d)
        free[d] = False
        cost_sum += float(c[d])
        weight_sum += float(w[d])


def generate_feedback_graph(weights, costs, budget: float, prev_graph: FeedbackGraph | None = None) -> FeedbackGraph:
    """Build this round's graph from current weights.

    Without ``prev_graph`` (first round) the weight bound is infinite;
    otherwise vertex ``k`` is bounded by the current weight of its previous
    out-neighborhood.
    """
    w = floor_weights(weights)
    c = np.asarray(costs, dtype=float)
    if w.shape != c.shape or w.ndim != 1:
        raise ContractViolation("weights and costs must be 1-D vectors of equal length")
    if budget < c.max():
        raise ConfigError(f"budget {budget} is below the largest model cost {c.max()} (need B >= c_k)")
    if prev_graph is not None and prev_graph.size != len(c):
        raise ContractViolation("previous graph has a different vertex count")

    outs = []
    for k in range(len(c)):
        bound = math.inf if prev_graph is None else neighborhood_weight_sum(prev_graph, w, k)
        outs.append(_grow_neighborhood(k, w, c, float(budget), bound))
    round_ = 1 if prev_graph is None else prev_graph.round + 1
    partial = FeedbackGraph(round_, tuple(outs), ())
    return FeedbackGraph(round_, tuple(outs), greedy_dominating_set(partial))


def greedy_dominating_set(graph: FeedbackGraph) -> tuple[int, ...]:
    """Greedy set cover over out-neighborhoods; ties go to the lowest index."""
    uncovered = set(range(graph.size))
    chosen = []
    while uncovered:
        best, best_gain = -1, 0
        for k, outs in enumerate(graph.out_neighbors):
            gain = len(uncovered.intersection(outs))
            if gain > best_gain:
                best, best_gain = k, gain
        if best < 0:
            raise ContractViolation("graph lacks self-loops; some vertex cannot be dominated")
        chosen.append(best)
        uncovered.difference_update(graph.out_neighbors[best])
    return tuple(sorted(chosen))


def is_dominating(graph: FeedbackGraph, subset) -> bool:
    covered = set()
    for d in subset:
        covered.update(graph.out_neighbors[d])
    return len(covered) == graph.size


def minimum_dominating_set_size(graph: FeedbackGraph) -> int:
    """Exact minimum by subset enumeration; meant for small test graphs."""
    for r in range(1, graph.size + 1):
        for subset in combinations(range(graph.size), r):
            if is_dominating(graph, subset):
                return r
    return graph.size


def _undirected_masks(graph: FeedbackGraph) -> tuple[int, ...]:
    masks = [0] * graph.size
    for k, outs in enumerate(graph.out_neighbors):
        for j in outs:
            if j != k:
                masks[k] |= 1 << j
                masks[j] |= 1 << k
    return tuple(masks)


@lru_cache(maxsize=4096)
def _mis_size(masks: tuple[int, ...]) -> int:
    def solve(remaining: int) -> int:
        if not remaining:
            return 0
        # vertices with at most one remaining neighbor are always safe to take
        best_v, best_deg = -1, -1
        r = remaining
        while r:
            v = (r & -r).bit_length() - 1
            r &= r - 1
            deg = (masks[v] & remaining).bit_count()
            if deg <= 1:
                return 1 + solve(remaining & ~(1 << v) & ~masks[v])
            if deg > best_deg:
                best_v, best_deg = v, deg
        v = best_v
        take = 1 + solve(remaining & ~(1 << v) & ~masks[v])
        skip = solve(remaining & ~(1 << v))
        return max(take, skip)

    return solve((1 << len(masks)) - 1)


def independence_number(graph: FeedbackGraph) -> int:
    """Exact independence number of the undirected support without self-loops."""
    if graph.size > MAX_ALPHA_VERTICES:
        raise DiagnosticUnavailableError(
            f"independence number is only computed for K <= {MAX_ALPHA_VERTICES} (K = {graph.size})"
        )
    return _mis_size(_undirected_masks(graph))
