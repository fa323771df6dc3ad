"""Label collection: log search first, rule-labeled generated queries second,
and a waiting flag when neither yields enough.

Also provides execution labeling (the slow exact baseline) and single-label
mode, which prices one index revision with the what-if cost model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .metrics import CostFn, WorkloadWeights, q_cost, rl_reward
from .query import Query
from .synthdb import IndexConfig, QueryLog, Table, exact_cardinality
from .workload import QueryTemplate, featurize, featurize_many, generate_queries

PROVENANCES = ("log", "rule", "execution")


class NoLabelSource(ValueError):
    def __init__(self):
        super().__init__("no label source")


@dataclass(frozen=True, eq=False)
class LabeledExample:
    features: np.ndarray
    label: float
    provenance: str
    query: Optional[Query] = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not self.label >= 0:
            raise ValueError(f"label must be nonnegative, got {self.label}")


@dataclass
class TrainingSet:
    examples: list[LabeledExample] = field(default_factory=list)
    target_size: int = 1
    waiting: bool = False

    def __len__(self):
        return len(self.examples)

    def lack(self) -> bool:
        return len(self.examples) < self.target_size

    def provenance_mix(self) -> dict[str, int]:
        mix = {p: 0 for p in PROVENANCES}
        for e in self.examples:
            mix[e.provenance] += 1
        return mix

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([e.features for e in self.examples])
        y = np.array([e.label for e in self.examples], dtype=np.float64)
        return x, y


@dataclass(frozen=True, eq=False)
class CardinalityTask:
    """Cardinality estimation over one table; its query space is that table's queries."""

    table: Table

    @property
    def name(self) -> str:
        return self.table.name


def _estimate_many(rule: Callable, queries: Sequence[Query]) -> np.ndarray:
    batch = getattr(rule, "estimate_many", None)
    if batch is not None:
        return np.asarray(batch(queries), dtype=np.float64)
    return np.array([rule(q) for q in queries], dtype=np.float64)


def label_by_rule(queries: Sequence[Query], table: Table, rule: Callable) -> list[LabeledExample]:
    labels = _estimate_many(rule, queries)
    feats = featurize_many(queries, table.spec)
    return [LabeledExample(f, float(y), "rule", q) for f, y, q in zip(feats, labels, queries)]


def collect_labels(
    task: CardinalityTask,
    log: Optional[QueryLog],
    rule: Optional[Callable],
    templates: Optional[Sequence[QueryTemplate]],
    target_size: int,
    seed: int,
) -> TrainingSet:
    """Gather a training set in priority order log, rule, waiting.

    1. every logged query on the task's table, labeled with its logged cardinality;
    2. if still short and a rule and templates exist, generate the shortfall
       from the templates and label it with the rule;
    3. if still short, return what there is with ``waiting`` set so the caller
       serves tasks with the rule-based method until real labels accumulate.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    if log is None and rule is None and not templates:
        raise NoLabelSource()
    ts = TrainingSet(target_size=target_size)
    schema = task.table.spec
    if log is not None:
        for q, card in log.harvest(task.name):
            ts.examples.append(LabeledExample(featurize(q, schema), float(card), "log", q))
    if ts.lack() and rule is not None and templates:
        queries = generate_queries(templates, task.table, target_size - len(ts), seed)
        ts.examples.extend(label_by_rule(queries, task.table, rule))
    if ts.lack():
        ts.waiting = True
    return ts


def label_by_execution(queries: Sequence[Query], table: Table) -> TrainingSet:
    """Exact labels from the cardinality oracle; the slow baseline."""
    feats = featurize_many(queries, table.spec)
    examples = [
        LabeledExample(f, float(exact_cardinality(table, q)), "execution", q)
        for f, q in zip(feats, queries)
    ]
    return TrainingSet(examples, target_size=max(len(examples), 1))


def write_training_set(ts: TrainingSet, path) -> None:
    width = len(ts.examples[0].features) if ts.examples else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"feature_{i}" for i in range(width)] + ["label", "provenance"])
        for e in ts.examples:
            w.writerow([repr(float(v)) for v in e.features] + [repr(float(e.label)), e.provenance])


def read_training_set(path, target_size: Optional[int] = None) -> TrainingSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        examples = [
            LabeledExample(np.array([float(v) for v in row[:-2]]), float(row[-2]), row[-1])
            for row in reader
        ]
    return TrainingSet(examples, target_size or max(len(examples), 1))


# ---------------------------------------------------------------------------
# single-label mode for index tuning


def apply_revision(config: IndexConfig, revision) -> tuple[IndexConfig, bool]:
    """Apply ``(kind, position)``; returns the new config and whether anything changed.

    Builds beyond the budget leave the config as is.
    """
    kind, j = revision
    if kind == "noop":
        return config, False
    col = config.columns[j]
    if kind == "build":
        if config.built[j] or not config.can_build():
            return config, False
        return config.with_index(col, True), True
    if kind == "drop":
        if not config.built[j]:
            return config, False
        return config.with_index(col, False), True
    raise ValueError(f"unknown revision kind {kind!r}")


def label_single(
    config: IndexConfig,
    revision,
    workload: Sequence[Query],
    cost_fn: CostFn,
    weights: Optional[WorkloadWeights] = None,
) -> float:
    """Reward of applying ``revision`` to ``config``, priced by what-if calls only."""
    new_config, _ = apply_revision(config, revision)
    return rl_reward(q_cost(workload, weights, new_config, cost_fn))
