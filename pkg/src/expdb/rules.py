"""Built-in rule-based methods.

Cardinality behaviors bind to a table and return ``query -> estimate``.
Index behaviors bind to thresholds and return
``(frequencies, built, budget) -> (kind, column_position)`` where ``kind``
is ``"build"``, ``"drop"`` or ``"noop"`` (position ``None``).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .synthdb import DEFAULT_BUCKETS, HistogramEstimator, Table, estimate_cardinality_coldstart

F_LOW = 0.05
F_HIGH = 0.2

NOOP = ("noop", None)


def histogram_estimator(table: Table, bucket_count: int = DEFAULT_BUCKETS):
    return HistogramEstimator.from_table(table, int(bucket_count))


class ColdStartEstimator:
    def __init__(self, row_count: int):
        self.row_count = row_count

    def __call__(self, query) -> float:
        return estimate_cardinality_coldstart(query, self.row_count)

    def estimate_many(self, queries) -> np.ndarray:
        return np.array([self(q) for q in queries], dtype=np.float64)


def coldstart_estimator(table: Table):
    return ColdStartEstimator(table.row_count)


# ---------------------------------------------------------------------------
# index rules over a column-frequency vector and an index bitmap


def frequent_candidate(freq, built, budget: Optional[int], f_high: float = F_HIGH):
    """Build the most frequent unindexed column if it is frequent enough and budget allows."""
    freq = np.asarray(freq, dtype=np.float64)
    built = np.asarray(built, dtype=bool)
    if budget is not None and built.sum() >= budget:
        return NOOP
    cand = np.where(built, -np.inf, freq)
    j = int(np.argmax(cand))
    if not built[j] and freq[j] >= f_high:
        return ("build", j)
    return NOOP


def drop_repeated(freq, built, budget: Optional[int]):
    # a bitmap cannot hold the same index twice, so there is never anything to drop
    return NOOP


def drop_infrequent(freq, built, budget: Optional[int], f_low: float = F_LOW):
    """Drop the least frequent indexed column whose frequency is below ``f_low``."""
    freq = np.asarray(freq, dtype=np.float64)
    built = np.asarray(built, dtype=bool)
    if not built.any():
        return NOOP
    cand = np.where(built, freq, np.inf)
    j = int(np.argmin(cand))
    if freq[j] < f_low:
        return ("drop", j)
    return NOOP


def frequency_rules(freq, built, budget: Optional[int], f_low: float = F_LOW, f_high: float = F_HIGH):
    """Drop infrequent, then drop repeated, then build frequent; otherwise no-op."""
    for act in (
        drop_infrequent(freq, built, budget, f_low),
        drop_repeated(freq, built, budget),
        frequent_candidate(freq, built, budget, f_high),
    ):
        if act[0] != "noop":
            return act
    return NOOP


def _bind_index(fn, **fixed):
    def rule(freq, built, budget):
        return fn(freq, built, budget, **fixed)

    rule.__name__ = fn.__name__
    return rule


def bind_frequent_candidate(_context=None, f_high: float = F_HIGH):
    return _bind_index(frequent_candidate, f_high=float(f_high))


def bind_drop_repeated(_context=None):
    return _bind_index(drop_repeated)


def bind_drop_infrequent(_context=None, f_low: float = F_LOW):
    return _bind_index(drop_infrequent, f_low=float(f_low))


def bind_frequency_rules(_context=None, f_low: float = F_LOW, f_high: float = F_HIGH):
    return _bind_index(frequency_rules, f_low=float(f_low), f_high=float(f_high))
