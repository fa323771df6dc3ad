"""Experience-enhanced cardinality estimation.

Pretrain a regressor on rule-labeled queries, answer each online query with
the learned or the rule estimate depending on their credibility, execute it
to obtain the true cardinality, keep that as an experience, and every
``interval`` tasks retrain on sampled experiences and re-check which rule the
knowledge base should supply.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import ekb, learner, sea
from .elc import CardinalityTask, LabeledExample, NoLabelSource, TrainingSet, collect_labels
from .metrics import q_error, q_errors, summarize
from .query import Query
from .synthdb import QueryLog, Table, estimate_cardinality_coldstart, exact_cardinality
from .workload import QueryTemplate, featurize, featurize_many, generate_queries

log = logging.getLogger(__name__)

GATE_DISABLED = math.inf
CARDINALITY_DEMAND = ekb.FeatureTagVector("cardinality", "accuracy", "relational", "online", 1)


@dataclass
class EEDLConfig:
    d: float = 0.5
    interval: int = 500
    pretrain_size: int = 5000
    stream_size: int = 2000
    heldout_size: int = 1000
    pool_capacity: int = 10_000
    minibatch: int = 64
    pretrain_epochs: int = 200
    retrain_steps: int = 200
    learning_rate: float = 0.05
    retrain_learning_rate: float = 0.02
    hidden: int = 64
    kb_threshold: float = 0.75
    seed: int = 0
    # (first task index, demand) pairs; the demand in force at a retrain point drives re-selection
    demand_schedule: tuple = ()

    def validate(self) -> None:
        if self.interval < 1:
            raise ValueError("interval must be >= 1")
        if not self.d >= 0:
            raise ValueError("d must be >= 0")
        if self.pretrain_size < 1:
            raise ValueError("pretrain_size must be >= 1")
        if self.minibatch < 1 or self.retrain_steps < 0 or self.pretrain_epochs < 0:
            raise ValueError("training budget must be nonnegative")

    def demand_at(self, task_index: int) -> ekb.FeatureTagVector:
        current = CARDINALITY_DEMAND
        for start, demand in self.demand_schedule:
            if task_index >= start:
                current = demand
        return current


def log_target(labels) -> np.ndarray:
    return np.log(np.maximum(np.asarray(labels, dtype=np.float64), 1.0))


class LearnedEstimator:
    """Regressor over query features; outputs exp(prediction) clamped to [1, row_count]."""

    def __init__(self, model: learner.Model, table: Table):
        self.model = model
        self.schema = table.spec
        self.row_count = table.row_count

    def _clamp(self, logs: np.ndarray) -> np.ndarray:
        hi = math.log(max(self.row_count, 1))
        return np.exp(np.clip(logs, 0.0, hi))

    def __call__(self, query: Query) -> float:
        out = learner.predict(self.model, featurize(query, self.schema))
        return float(self._clamp(out)[0])

    def estimate_many(self, queries: Sequence[Query]) -> np.ndarray:
        out = learner.predict(self.model, featurize_many(queries, self.schema))
        return self._clamp(out[:, 0])


def new_model(table: Table, config: EEDLConfig) -> learner.Model:
    return learner.init_model([3 * len(table.spec.columns), config.hidden, 1], config.seed)


def fit(model: learner.Model, x: np.ndarray, y: np.ndarray, epochs: int, config: EEDLConfig, rng) -> list[float]:
    """Shuffled minibatch epochs on log targets; returns per-epoch mean loss.

    The step size decays linearly from ``config.learning_rate`` towards zero
    over the whole run.
    """
    targets = log_target(y)
    n = len(x)
    total = epochs * -(-n // config.minibatch)
    step = 0
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.minibatch):
            idx = order[start : start + config.minibatch]
            lr = config.learning_rate * (1.0 - step / total)
            step += 1
            losses.append(learner.train_batch(model, x[idx], targets[idx], lr))
        history.append(float(np.mean(losses)))
    return history


@dataclass
class ELCSources:
    task: CardinalityTask
    log: Optional[QueryLog] = None
    rule: Optional[Callable] = None
    templates: Optional[Sequence[QueryTemplate]] = None


def pretrain(model: learner.Model, sources: ELCSources, config: EEDLConfig) -> tuple[learner.Model, TrainingSet]:
    """Collect weak labels and train the model on them for a fixed number of epochs."""
    ts = collect_labels(
        sources.task, sources.log, sources.rule, sources.templates, config.pretrain_size, config.seed
    )
    if not ts.examples:
        raise NoLabelSource()
    x, y = ts.arrays()
    fit(model, x, y, config.pretrain_epochs, config, np.random.default_rng([config.seed, 1]))
    return model, ts


@dataclass(frozen=True)
class OnlineRecord:
    task_index: int
    query: Query
    c_rule: float
    c_learned: float
    credibility: float
    chosen: str
    estimate: float
    true_cardinality: Optional[int] = None
    q_error: Optional[float] = None
    rule_fallback: bool = False
    rule_name: str = ""


def infer(
    task: Query,
    estimator: LearnedEstimator,
    rule: Callable,
    d: float,
    task_index: int = 0,
    rule_name: str = "",
) -> tuple[float, OnlineRecord]:
    """Gate the learned estimate against the rule estimate.

    A failing rule is replaced by the cold-start estimator and flagged.
    """
    fallback = False
    try:
        c_rule = float(rule(task))
    except Exception as exc:  # noqa: BLE001  any rule failure routes to the cold-start path
        log.warning("rule %s failed on %s: %s", rule_name, task.to_line(), exc)
        c_rule = estimate_cardinality_coldstart(task, estimator.row_count)
        fallback = True
    c_rule = max(c_rule, 1.0)
    c_learned = estimator(task)
    decision = sea.choose(c_learned, c_rule, d)
    rec = OnlineRecord(
        task_index=task_index,
        query=task,
        c_rule=c_rule,
        c_learned=c_learned,
        credibility=decision.credibility,
        chosen=decision.chosen,
        estimate=decision.value,
        rule_fallback=fallback,
        rule_name=rule_name,
    )
    return decision.value, rec


def retrain(model: learner.Model, pool: learner.ExperiencePool, config: EEDLConfig, rng) -> learner.Model:
    """Fixed number of SGD steps on minibatches sampled uniformly from the pool.

    The step size decays linearly within the round, like in ``fit``.
    """
    if len(pool) == 0:
        log.warning("retrain skipped: experience pool is empty")
        return model
    rng = np.random.default_rng(rng)
    steps = config.retrain_steps
    for k in range(steps):
        batch = pool.sample(config.minibatch, rng)
        x = np.stack([e.features for e in batch])
        y = log_target([e.label for e in batch])
        learner.train_batch(model, x, y, config.retrain_learning_rate * (1.0 - k / steps))
    return model


@dataclass
class Heldout:
    queries: list[Query]
    truth: np.ndarray


def evaluate(estimator: LearnedEstimator, rule: Callable, heldout: Heldout, d: float) -> dict:
    learned = estimator.estimate_many(heldout.queries)
    batch = getattr(rule, "estimate_many", None)
    ruled = np.asarray(batch(heldout.queries) if batch else [rule(q) for q in heldout.queries])
    ruled = np.maximum(ruled, 1.0)
    cred = np.abs(learned - ruled) / ruled
    gated = np.where(cred < d, learned, ruled)
    model_stats = summarize(q_errors(learned, heldout.truth))
    gated_stats = summarize(q_errors(gated, heldout.truth))
    rule_stats = summarize(q_errors(ruled, heldout.truth))
    out = {f"model_{k}": v for k, v in model_stats.items()}
    out.update({f"gated_{k}": v for k, v in gated_stats.items()})
    out.update({f"rule_{k}": v for k, v in rule_stats.items()})
    out["learned_fraction"] = float(np.mean(cred < d))
    return out


@dataclass
class OnlineResult:
    records: list[OnlineRecord]
    history: list[dict]
    selections: list[tuple[int, str]]
    model: learner.Model
    pretrain_mix: dict = field(default_factory=dict)


def run_online(
    stream: Sequence[Query],
    model: learner.Model,
    table: Table,
    config: EEDLConfig,
    kb: Optional[ekb.KnowledgeBase] = None,
    rule_method: Optional[ekb.RuleMethod] = None,
    heldout: Optional[Heldout] = None,
) -> OnlineResult:
    """Serve the task stream, collecting true labels and retraining every ``interval`` tasks.

    ``history`` holds one row per evaluation: window 0 right after
    pretraining, then one per retrain.
    """
    config.validate()
    kb = kb if kb is not None else ekb.default_kb()
    if rule_method is None:
        rule_method = ekb.match_method(kb, config.demand_at(0))
    rule = rule_method.bind(table)
    estimator = LearnedEstimator(model, table)
    pool = learner.ExperiencePool(config.pool_capacity)
    records: list[OnlineRecord] = []
    history: list[dict] = []
    selections = [(0, rule_method.name)]

    def snapshot(window: int, tasks: int):
        if heldout is None:
            return
        row = {"window": window, "tasks": tasks, "rule": rule_method.name}
        row.update(evaluate(estimator, rule, heldout, config.d))
        history.append(row)

    snapshot(0, 0)
    for i, q in enumerate(stream, start=1):
        _, rec = infer(q, estimator, rule, config.d, task_index=i, rule_name=rule_method.name)
        truth = exact_cardinality(table, q)
        rec = replace(rec, true_cardinality=truth, q_error=q_error(rec.estimate, truth))
        records.append(rec)
        pool.push(LabeledExample(featurize(q, table.spec), float(truth), "execution", q))
        if i % config.interval == 0:
            window = i // config.interval
            retrain(model, pool, config, np.random.default_rng([config.seed, 2, window]))
            demand = config.demand_at(i)
            if ekb.needs_update(rule_method, demand, config.kb_threshold):
                chosen = ekb.match_method(kb, demand)
                if chosen.name != rule_method.name:
                    rule_method = chosen
                    rule = rule_method.bind(table)
                    selections.append((i, rule_method.name))
            snapshot(window, i)
    return OnlineResult(records, history, selections, model)


# ---------------------------------------------------------------------------
# end-to-end scenario


def make_heldout(table: Table, templates: Sequence[QueryTemplate], n: int, seed: int) -> Heldout:
    queries = generate_queries(templates, table, n, seed)
    truth = np.array([exact_cardinality(table, q) for q in queries], dtype=np.float64)
    return Heldout(queries, truth)


def run_cardinality_experiment(
    table: Table,
    templates: Sequence[QueryTemplate],
    config: EEDLConfig,
    kb: Optional[ekb.KnowledgeBase] = None,
    log_: Optional[QueryLog] = None,
    stream: Optional[Sequence[Query]] = None,
    heldout: Optional[Heldout] = None,
) -> OnlineResult:
    """Pretrain from rule labels, then run the online phase on a seeded stream."""
    config.validate()
    kb = kb if kb is not None else ekb.default_kb()
    method = ekb.match_method(kb, config.demand_at(0))
    rule = method.bind(table)
    model = new_model(table, config)
    model, ts = pretrain(model, ELCSources(CardinalityTask(table), log_, rule, templates), config)
    if stream is None:
        stream = generate_queries(templates, table, config.stream_size, config.seed + 1000)
    if heldout is None:
        heldout = make_heldout(table, templates, config.heldout_size, config.seed + 2000)
    result = run_online(stream, model, table, config, kb, method, heldout)
    result.pretrain_mix = ts.provenance_mix()
    return result


RECORD_FIELDS = (
    "task_index", "query", "c_rule", "c_learned", "credibility", "chosen",
    "estimate", "true_cardinality", "q_error", "rule_fallback", "rule_name",
)
HISTORY_FIELDS = (
    "window", "tasks", "rule", "model_median", "model_mean", "model_p99",
    "gated_median", "gated_mean", "gated_p99", "rule_median", "rule_mean", "rule_p99",
    "learned_fraction",
)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Query):
        return v.to_line()
    if isinstance(v, bool):
        return int(v)
    return v


def write_records(records: Sequence[OnlineRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_cell(getattr(r, f)) for f in RECORD_FIELDS])


def write_history(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([_cell(row[f]) for f in HISTORY_FIELDS])
