"""Experience-enhanced Q-learning for online index tuning.

Each iteration proposes three actions (the agent's greedy choice, the
knowledge-base rule's choice and a uniformly random one) and a scheduler
picks among them with probabilities alpha, beta and 1 - alpha - beta.  The
reward is the what-if workload cost improvement, so no query is executed.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import ekb, learner
from .elc import apply_revision
from .metrics import rl_reward
from .query import Query
from .scenarios import tpch_like, tpch_templates
from .synthdb import IndexConfig, Table, build_statistics, generate_table, probe_overhead, whatif_cost
from .workload import QueryTemplate, generate_workload, workload_frequency, zipf_template_weights

INDEX_DEMAND = ekb.FeatureTagVector("index", "cost", "relational", "online", 0)
OVER_BUDGET_REWARD = -0.01
SOURCES = ("rule", "random", "agent")
# alpha + beta may overshoot 1 by rounding after clamping
_PROB_SLACK = 1e-12


# ---------------------------------------------------------------------------
# exploration schedule


@dataclass(frozen=True)
class ExplorationSchedule:
    alpha0: float
    beta: float
    w: float = 0.0
    c1: int = 0
    c2: int = 1
    direction: str = "decrease"

    def __post_init__(self):
        if not (self.alpha0 >= 0 and self.beta >= 0):
            raise ValueError("alpha and beta must be nonnegative")
        if self.alpha0 + self.beta > 1 + _PROB_SLACK:
            raise ValueError(f"alpha + beta = {self.alpha0 + self.beta} exceeds 1")
        if not self.w >= 0:
            raise ValueError("w must be nonnegative")
        if not self.c1 < self.c2:
            raise ValueError(f"c1 ({self.c1}) must be below c2 ({self.c2})")
        if self.direction not in ("decrease", "increase"):
            raise ValueError(f"unknown direction {self.direction!r}")

    @classmethod
    def fixed(cls, alpha: float, beta: float) -> "ExplorationSchedule":
        return cls(alpha, beta)


def _exact(x: float) -> Fraction:
    # config values are decimal literals; interpolating in exact decimal keeps
    # 0.3 - 0.2 at 0.1 instead of 0.09999999999999998
    return Fraction(repr(float(x)))


def attenuate(sched: ExplorationSchedule, iteration: int) -> float:
    """Rule-exploration rate at ``iteration``.

    Constant ``alpha0`` before ``c1``, linear in ``[c1, c2]`` and constant
    ``alpha0 -/+ w`` after, clamped to ``[0, 1 - beta]``.
    """
    sign = -1 if sched.direction == "decrease" else 1
    iteration = int(iteration)  # numpy integers overflow inside Fraction arithmetic
    a0, w = _exact(sched.alpha0), _exact(sched.w)
    if iteration < sched.c1:
        a = a0
    elif iteration <= sched.c2:
        a = a0 + sign * w * Fraction(iteration - sched.c1, sched.c2 - sched.c1)
    else:
        a = a0 + sign * w
    return float(min(max(a, Fraction(0)), 1 - _exact(sched.beta)))


def schedule_source(alpha: float, beta: float, rng: np.random.Generator) -> str:
    """One uniform draw: rule below alpha, random below alpha + beta, agent otherwise."""
    if alpha < 0 or beta < 0 or alpha + beta > 1 + _PROB_SLACK:
        raise ValueError(f"invalid probabilities alpha={alpha}, beta={beta}")
    u = rng.random()
    if u < alpha:
        return "rule"
    if u < alpha + beta:
        return "random"
    return "agent"


def schedule_action(a_agent, a_rule, a_random, alpha: float, beta: float, rng: np.random.Generator):
    source = schedule_source(alpha, beta, rng)
    return {"rule": a_rule, "random": a_random, "agent": a_agent}[source]


# ---------------------------------------------------------------------------
# environment


@dataclass(frozen=True)
class ActionSpace:
    """Actions ``0..C-1`` build, ``C..2C-1`` drop, ``2C`` is the no-op."""

    columns: tuple[str, ...]

    @property
    def size(self) -> int:
        return 2 * len(self.columns) + 1

    @property
    def noop(self) -> int:
        return 2 * len(self.columns)

    def decode(self, action: int) -> tuple[str, Optional[int]]:
        c = len(self.columns)
        if not 0 <= action < self.size:
            raise ValueError(f"action {action} outside 0..{self.size - 1}")
        if action < c:
            return ("build", action)
        if action < 2 * c:
            return ("drop", action - c)
        return ("noop", None)

    def encode(self, kind: str, j: Optional[int]) -> int:
        if kind == "noop":
            return self.noop
        if kind == "build":
            return int(j)
        if kind == "drop":
            return len(self.columns) + int(j)
        raise ValueError(f"unknown action kind {kind!r}")

    def name(self, action: int) -> str:
        kind, j = self.decode(action)
        return kind if j is None else f"{kind}:{self.columns[j]}"


@dataclass(frozen=True, eq=False)
class EnvState:
    freq: np.ndarray
    config: IndexConfig
    step: int

    def features(self) -> np.ndarray:
        return np.concatenate([self.freq, self.config.as_array()])


class _BatchCosts:
    """Per-query scan cost and per-column probe cost (inf where the column is not usable)."""

    def __init__(self, env: "IndexEnv", queries: Sequence[Query]):
        self.queries = list(queries)
        n, c = len(self.queries), len(env.columns)
        self.base = np.empty(n)
        self.probe = np.full((n, c), np.inf)
        pos = {k: i for i, k in enumerate(env.columns)}
        for i, q in enumerate(self.queries):
            rows = env.tables[q.table].row_count
            self.base[i] = float(rows)
            hists = env.stats[q.table]
            for p in q.predicates:
                j = pos[f"{q.table}.{p.column}"]
                cost = max(1.0, hists[p.column].selectivity(p) * rows) + probe_overhead(rows)
                self.probe[i, j] = min(self.probe[i, j], cost)
        self.freq = workload_frequency(self.queries, env.columns)

    def q_cost(self, built: np.ndarray) -> float:
        if built.any():
            cost = np.minimum(self.base, self.probe[:, built].min(axis=1))
        else:
            cost = self.base
        ratios = cost / self.base
        return math.fsum(ratios.tolist()) / float(len(ratios))


class IndexEnv:
    """Single-column index tuning over several tables, priced by the what-if model.

    ``batches`` are 100-query evaluation windows; the window in force at step
    ``t`` is ``batches[k]`` with ``k`` the number of ``switch_at`` points at or
    below ``t`` (a single batch gives a stationary workload).
    """

    def __init__(
        self,
        tables: Sequence[Table],
        batches: Sequence[Sequence[Query]],
        budget: Optional[int] = 3,
        switch_at: Sequence[int] = (),
        bucket_count: int = 64,
    ):
        if not batches:
            raise ValueError("at least one workload batch is required")
        self.tables = {t.name: t for t in tables}
        self.stats = {t.name: build_statistics(t, bucket_count) for t in tables}
        self.columns = tuple(f"{t.name}.{c}" for t in tables for c in t.spec.column_names)
        self.actions = ActionSpace(self.columns)
        self.budget = budget
        self.switch_at = tuple(sorted(switch_at))
        self._batches = [_BatchCosts(self, b) for b in batches]
        self.reset()

    def reset(self) -> EnvState:
        self.config = IndexConfig.empty(self.columns, self.budget)
        self.step_count = 0
        return self.observe()

    def batch_index(self, step: int) -> int:
        return min(bisect.bisect_right(self.switch_at, step), len(self._batches) - 1)

    def workload(self, step: Optional[int] = None) -> list[Query]:
        return self._batches[self.batch_index(self.step_count if step is None else step)].queries

    def observe(self) -> EnvState:
        batch = self._batches[self.batch_index(self.step_count)]
        return EnvState(batch.freq.copy(), self.config, self.step_count)

    def cost(self, query: Query, idx: IndexConfig) -> float:
        """What-if cost of one query; the reference cost function for the Q-cost."""
        table = self.tables[query.table]
        sub = IndexConfig(idx.columns, idx.built)
        return whatif_cost(table.row_count, query, sub, self.stats[query.table])

    def q_cost(self, config: Optional[IndexConfig] = None, step: Optional[int] = None) -> float:
        config = self.config if config is None else config
        batch = self._batches[self.batch_index(self.step_count if step is None else step)]
        return batch.q_cost(np.array(config.built, dtype=bool))

    def step(self, action: int) -> tuple[EnvState, float, float]:
        """Apply ``action``, advance one window; returns (next state, reward, Q-cost)."""
        kind, j = self.actions.decode(action)
        over_budget = kind == "build" and not self.config.built[j] and not self.config.can_build()
        self.config, _ = apply_revision(self.config, (kind, j))
        self.step_count += 1
        qc = self.q_cost()
        reward = OVER_BUDGET_REWARD if over_budget else rl_reward(qc)
        return self.observe(), reward, qc


def step_env(env: IndexEnv, action: int) -> tuple[EnvState, float]:
    state, reward, _ = env.step(action)
    return state, reward


def make_index_env(
    seed: int,
    scale: float = 0.01,
    budget: Optional[int] = 3,
    window: int = 100,
    templates: Optional[Sequence[QueryTemplate]] = None,
    drift_templates: Optional[Sequence[QueryTemplate]] = None,
    switch_at: Optional[int] = None,
    template_skew: float = 1.0,
) -> IndexEnv:
    """TPC-H-shaped environment with one evaluation window, or two when drifting.

    Template popularity is Zipf(``template_skew``) over a seed-shuffled order.
    """
    specs = tpch_like(scale)
    tables = [generate_table(s, seed * 1000 + i) for i, s in enumerate(specs)]
    by_name = {t.name: t for t in tables}
    templates = list(templates) if templates is not None else tpch_templates()
    weights = zipf_template_weights(len(templates), template_skew, seed)
    batches = [generate_workload(templates, by_name, window, seed, weights)]
    switches: tuple[int, ...] = ()
    if drift_templates is not None:
        if switch_at is None:
            raise ValueError("drift needs switch_at")
        drift_weights = zipf_template_weights(len(drift_templates), template_skew, seed + 1)
        batches.append(generate_workload(drift_templates, by_name, window, seed + 1, drift_weights))
        switches = (switch_at,)
    return IndexEnv(tables, batches, budget, switches)


def rule_action(env: IndexEnv, state: EnvState, rule: Callable) -> int:
    return env.actions.encode(*rule(state.freq, state.config.built, env.budget))


# ---------------------------------------------------------------------------
# agent


class QAgent:
    """One-step Q-learning over a feed-forward action-value network with replay."""

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hidden: int = 64,
        seed: int = 0,
        gamma: float = 0.9,
        learning_rate: float = 1e-3,
        minibatch: int = 64,
        pool_capacity: int = 10_000,
    ):
        self.model = learner.init_model([state_dim, hidden, n_actions], seed)
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.minibatch = minibatch
        self.pool = learner.ExperiencePool(pool_capacity)

    def act(self, features: np.ndarray) -> int:
        return int(np.argmax(learner.predict(self.model, features)))

    def remember(self, exp: learner.Experience) -> None:
        self.pool.push(exp)

    def learn(self, rng: np.random.Generator) -> Optional[float]:
        if not len(self.pool):
            return None
        batch = self.pool.sample(self.minibatch, rng)
        s = np.stack([e.s for e in batch])
        s_next = np.stack([e.s_next for e in batch])
        a = np.array([e.a for e in batch])
        r = np.array([e.r for e in batch])
        targets = r + self.gamma * learner.predict(self.model, s_next).max(axis=1)
        return learner.train_batch(self.model, s, targets, self.learning_rate, actions=a)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EERLConfig:
    iterations: int = 8000
    budget: int = 3
    gamma: float = 0.9
    learning_rate: float = 1e-3
    minibatch: int = 64
    pool_capacity: int = 10_000
    hidden: int = 64
    kb_interval: int = 1000
    kb_threshold: float = 0.75
    seed: int = 0
    # (first iteration, demand) pairs for the knowledge-base re-check
    demand_schedule: tuple = ()

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.kb_interval < 1:
            raise ValueError("kb_interval must be >= 1")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    def demand_at(self, iteration: int) -> ekb.FeatureTagVector:
        current = INDEX_DEMAND
        for start, demand in self.demand_schedule:
            if iteration >= start:
                current = demand
        return current


@dataclass(frozen=True)
class HistoryRow:
    iter: int
    source: str
    action: str
    reward: float
    q_cost: float
    alpha: float


HISTORY_FIELDS = ("iter", "source", "action", "reward", "q_cost")


@dataclass
class RunHistory:
    rows: list[HistoryRow] = field(default_factory=list)
    selections: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def q_costs(self) -> np.ndarray:
        return np.array([r.q_cost for r in self.rows])

    def final_mean(self, last: int = 500) -> float:
        return float(np.mean(self.q_costs()[-last:]))

    def source_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SOURCES}
        for r in self.rows:
            counts[r.source] += 1
        return counts


def new_agent(env: IndexEnv, config: EERLConfig) -> QAgent:
    return QAgent(
        2 * len(env.columns),
        env.actions.size,
        hidden=config.hidden,
        seed=config.seed,
        gamma=config.gamma,
        learning_rate=config.learning_rate,
        minibatch=config.minibatch,
        pool_capacity=config.pool_capacity,
    )


def train(
    env: IndexEnv,
    agent: QAgent,
    sched: ExplorationSchedule,
    config: EERLConfig,
    kb: Optional[ekb.KnowledgeBase] = None,
) -> RunHistory:
    """Run the scheduler/agent loop for ``config.iterations`` steps.

    The schedule draw, the random action and the replay sample use separate
    generators, so runs differing only in alpha and beta see the same draws.
    """
    config.validate()
    kb = kb if kb is not None else ekb.default_kb()
    sched_rng, random_rng, replay_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    method = ekb.match_method(kb, config.demand_at(0))
    rule = method.bind()
    history = RunHistory(selections=[(0, method.name)])
    state = env.observe()
    for i in range(config.iterations):
        x = state.features()
        a_agent = agent.act(x)
        a_rule = rule_action(env, state, rule)
        a_random = int(random_rng.integers(env.actions.size))
        alpha = attenuate(sched, i)
        source = schedule_source(alpha, sched.beta, sched_rng)
        a = {"rule": a_rule, "random": a_random, "agent": a_agent}[source]
        state, reward, qc = env.step(a)
        agent.remember(learner.Experience(x, a, reward, state.features()))
        agent.learn(replay_rng)
        history.rows.append(HistoryRow(i, source, env.actions.name(a), reward, qc, alpha))
        if (i + 1) % config.kb_interval == 0:
            demand = config.demand_at(i + 1)
            if ekb.needs_update(method, demand, config.kb_threshold):
                method = ekb.match_method(kb, demand)
                rule = method.bind()
                history.selections.append((i + 1, method.name))
    return history


def run_index_experiment(
    sched: ExplorationSchedule,
    config: EERLConfig,
    scale: float = 0.01,
    env: Optional[IndexEnv] = None,
) -> RunHistory:
    env = env if env is not None else make_index_env(config.seed, scale, config.budget)
    env.reset()
    return train(env, new_agent(env, config), sched, config)


def history_filename(alpha: float, beta: float, seed: int) -> str:
    return f"rl_history_{alpha:g}_{beta:g}_{seed}.csv"


def write_history(history: RunHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in history.rows:
            w.writerow([r.iter, r.source, r.action, repr(r.reward), repr(r.q_cost)])
