"""Q-error for cardinality estimates and the weighted Q-cost of an index configuration."""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .query import Query
from .synthdb import IndexConfig


def q_error(estimate: float, actual: float) -> float:
    """max(e, a) / min(e, a), with both sides clamped to at least 1."""
    e = max(float(estimate), 1.0)
    a = max(float(actual), 1.0)
    return max(e, a) / min(e, a)


def q_errors(estimates, actuals) -> np.ndarray:
    e = np.maximum(np.asarray(estimates, dtype=np.float64), 1.0)
    a = np.maximum(np.asarray(actuals, dtype=np.float64), 1.0)
    return np.maximum(e, a) / np.minimum(e, a)


def summarize(errors) -> dict[str, float]:
    errors = np.asarray(errors, dtype=np.float64)
    return {
        "median": float(np.median(errors)),
        "mean": float(np.mean(errors)),
        "p99": float(np.percentile(errors, 99)),
    }


class WorkloadWeights:
    """Nonnegative per-query weights, normalized to sum to one."""

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a nonempty 1-D sequence")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        self.raw = w
        self.values = w / total

    @classmethod
    def uniform(cls, n: int) -> "WorkloadWeights":
        return cls(np.ones(n))

    def __len__(self):
        return len(self.values)


CostFn = Callable[[Query, IndexConfig], float]


def q_cost(
    workload: Sequence[Query],
    weights: Optional[WorkloadWeights],
    idx: IndexConfig,
    cost_fn: CostFn,
) -> float:
    """Weighted sum of per-query cost ratios, cost under ``idx`` over cost with no index.

    Lower is better; the empty configuration scores exactly 1.
    """
    if weights is None:
        weights = WorkloadWeights.uniform(len(workload))
    if len(weights) != len(workload):
        raise ValueError(f"{len(weights)} weights for {len(workload)} queries")
    bare = IndexConfig.empty(idx.columns, idx.max_indexes)
    terms = []
    for w, q in zip(weights.raw, workload):
        base = cost_fn(q, bare)
        if base <= 0:
            raise ValueError(f"no-index cost must be positive, got {base} for {q.to_line()}")
        terms.append(w * (cost_fn(q, idx) / base))
    # raw weights over their own sum keeps the empty configuration at exactly 1.0
    return math.fsum(terms) / math.fsum(weights.raw)


def rl_reward(q_cost_value: float) -> float:
    return 1.0 - q_cost_value
