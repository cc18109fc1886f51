"""Ordering strategies for progressive alignment: length-based and
DTW-cost-based."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .features import CostConfig, FeatureSequence
from .multiscale import MultiscaleConfig, align_sequences
from .pairwise import average_cost

STRATEGY_LENGTH_ASC = "length-ascending"
STRATEGY_LENGTH_DESC = "length-descending"
STRATEGY_DTW_COST = "dtw-cost"
STRATEGY_AS_GIVEN = "as-given"
STRATEGIES = (
    STRATEGY_LENGTH_ASC,
    STRATEGY_LENGTH_DESC,
    STRATEGY_DTW_COST,
    STRATEGY_AS_GIVEN,
)


@dataclass(frozen=True)
class OrderPlan:
    """The order in which versions enter the progressive alignment.

    ``permutation`` holds 0-based version indices. For the DTW-cost
    strategy, ``pairwise_avg_costs`` carries the symmetric matrix of
    average alignment costs that drove the greedy selection.
    """

    permutation: tuple[int, ...]
    strategy: str
    pairwise_avg_costs: np.ndarray | None = None

    def __post_init__(self):
        permutation = tuple(int(i) for i in self.permutation)
        if sorted(permutation) != list(range(len(permutation))):
            raise ValueError(f"permutation is not a bijection: {permutation}")
        object.__setattr__(self, "permutation", permutation)
        if self.pairwise_avg_costs is not None:
            costs = np.asarray(self.pairwise_avg_costs, dtype=np.float64)
            k = len(permutation)
            if costs.shape != (k, k):
                raise ValueError(f"cost matrix shape {costs.shape} does not match {k} versions")
            costs.flags.writeable = False
            object.__setattr__(self, "pairwise_avg_costs", costs)


def as_given_order(versions: list[FeatureSequence]) -> OrderPlan:
    return OrderPlan(permutation=tuple(range(len(versions))), strategy=STRATEGY_AS_GIVEN)


def length_order(versions: list[FeatureSequence], descending: bool = False) -> OrderPlan:
    """Sort versions by frame count, shortest first by default.

    Ties fall back to label lexicographic order, then input position.
    """
    if not versions:
        raise ValueError("no versions to order")
    sign = -1 if descending else 1
    keys = sorted(
        range(len(versions)),
        key=lambda i: (sign * len(versions[i]), versions[i].label, i),
    )
    strategy = STRATEGY_LENGTH_DESC if descending else STRATEGY_LENGTH_ASC
    return OrderPlan(permutation=tuple(keys), strategy=strategy)


def pairwise_average_costs(
    versions: list[FeatureSequence],
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """Symmetric matrix of average alignment costs over all unordered pairs."""
    k = len(versions)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]

    def one(pair):
        i, j = pair
        return average_cost(align_sequences(versions[i], versions[j], cfg, ms))

    values = parallel_map(one, pairs, jobs)
    costs = np.zeros((k, k), dtype=np.float64)
    for (i, j), value in zip(pairs, values):
        costs[i, j] = value
        costs[j, i] = value
    return costs


def dtw_cost_order(
    versions: list[FeatureSequence],
    cfg: CostConfig,
    ms: MultiscaleConfig | None = None,
    jobs: int = 1,
) -> OrderPlan:
    """Greedy order by average alignment cost.

    Aligns all K(K-1)/2 pairs (multiscale by default, to keep the
    quadratic phase tractable), seeds the order with the cheapest pair
    (lower index first), then repeatedly appends the unchosen version
    whose summed average cost to all chosen versions is smallest. Ties
    break by version label, then index.
    """
    k = len(versions)
    if k < 2:
        raise ValueError("DTW-cost ordering needs at least two versions")
    if ms is None:
        ms = MultiscaleConfig(enabled=True)
    costs = pairwise_average_costs(versions, cfg, ms, jobs)

    def pair_key(pair):
        i, j = pair
        labels = sorted((versions[i].label, versions[j].label))
        return (costs[i, j], labels, (i, j))

    first = min(
        ((i, j) for i in range(k) for j in range(i + 1, k)),
        key=pair_key,
    )
    chosen = [first[0], first[1]]
    remaining = [i for i in range(k) if i not in chosen]
    while remaining:
        best = min(
            remaining,
            key=lambda i: (sum(costs[i, c] for c in chosen), versions[i].label, i),
        )
        chosen.append(best)
        remaining.remove(best)
    return OrderPlan(
        permutation=tuple(chosen),
        strategy=STRATEGY_DTW_COST,
        pairwise_avg_costs=costs,
    )
