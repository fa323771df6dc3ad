"""Credibility gate between a learned and a rule-based solution, plus the bound check.

If the rule-based solution is within a relative error ``eps`` of the optimum
and the learned solution is within relative deviation ``d`` of the rule-based
one, the learned solution is within ``d * (1 + eps) + eps`` of the optimum.
The check here uses the triangle inequality, so it covers learned solutions
on either side of the rule-based one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

# relative slack for float comparisons at the bound
REL_TOL = 1e-9


@dataclass(frozen=True)
class CredibilityDecision:
    c_learned: float
    c_rule: float
    credibility: float
    d: float
    chosen: str  # "learned" | "rule"

    @property
    def value(self) -> float:
        return self.c_learned if self.chosen == "learned" else self.c_rule


def credibility(c_learned: float, c_rule: float) -> float:
    if not c_rule > 0:
        raise ValueError(f"rule solution must be positive, got {c_rule}")
    return abs(c_learned - c_rule) / c_rule


def choose(c_learned: float, c_rule: float, d: float) -> CredibilityDecision:
    """Keep the learned solution only when its credibility is strictly below ``d``."""
    if d < 0 or math.isnan(d):
        raise ValueError(f"credibility bound must be >= 0, got {d}")
    c = credibility(c_learned, c_rule)
    chosen = "learned" if c < d else "rule"
    return CredibilityDecision(c_learned, c_rule, c, d, chosen)


def theorem_bound(d: float, eps_cap: float) -> float:
    if d < 0 or eps_cap < 0:
        raise ValueError("d and eps must be nonnegative")
    return d * (1.0 + eps_cap) + eps_cap


@dataclass(frozen=True)
class BoundInstance:
    c_star: float
    eps_n: float
    eps_cap: float
    d: float
    maximize: bool = False

    def __post_init__(self):
        if not self.c_star > 0:
            raise ValueError("optimum must be positive")
        if not 0 <= self.eps_n <= self.eps_cap:
            raise ValueError("need 0 <= eps_n <= eps_cap")
        if self.d < 0:
            raise ValueError("d must be nonnegative")

    @property
    def c_rule(self) -> float:
        if self.maximize:
            return self.c_star * (1.0 - self.eps_n)
        return self.c_star * (1.0 + self.eps_n)


class NotGated(ValueError):
    pass


def verify_bound_instance(inst: BoundInstance, c_learned: float) -> bool:
    """Whether a gated learned solution honours the bound.

    Raises ``NotGated`` when ``c_learned`` lies outside the credibility ball
    of radius ``d`` around the rule solution.
    """
    c_rule = inst.c_rule
    c = credibility(c_learned, c_rule)
    if c > inst.d * (1.0 + REL_TOL) + 1e-15:
        raise NotGated(f"instance not gated: credibility {c!r} > d {inst.d!r}")
    lhs = abs(c_learned - inst.c_star) / inst.c_star
    bound = theorem_bound(inst.d, inst.eps_cap)
    return lhs <= bound * (1.0 + REL_TOL) + 1e-15


def write_decisions(path, rows: Iterable[tuple[object, CredibilityDecision]]) -> None:
    """Audit log ``task_id,c_learned,c_rule,credibility,d,chosen``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "c_learned", "c_rule", "credibility", "d", "chosen"])
        for task_id, dec in rows:
            w.writerow([task_id, repr(dec.c_learned), repr(dec.c_rule), repr(dec.credibility), repr(dec.d), dec.chosen])


def sample_instances(n: int, seed: int) -> list[tuple[BoundInstance, float]]:
    """Random gated instances: optimum in [1, 1e6], eps and d in [0, 1].

    Half are maximization instances; learned solutions fall anywhere in the
    credibility ball, on both sides of the rule solution.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c_star = float(10.0 ** rng.uniform(0.0, 6.0))
        eps_cap = float(rng.uniform(0.0, 1.0))
        eps_n = float(rng.uniform(0.0, eps_cap))
        d = float(rng.uniform(0.0, 1.0))
        maximize = bool(rng.random() < 0.5) and eps_n < 1.0
        inst = BoundInstance(c_star, eps_n, eps_cap, d, maximize)
        c_learned = inst.c_rule * (1.0 + d * float(rng.uniform(-1.0, 1.0)))
        out.append((inst, c_learned))
    return out


def theorem_report(instances: Iterable[tuple[BoundInstance, float]]) -> list[dict]:
    rows = []
    for inst, c_learned in instances:
        lhs = abs(c_learned - inst.c_star) / inst.c_star
        rows.append(
            {
                "c_star": inst.c_star,
                "eps_n": inst.eps_n,
                "eps_cap": inst.eps_cap,
                "d": inst.d,
                "maximize": int(inst.maximize),
                "c_rule": inst.c_rule,
                "c_learned": c_learned,
                "lhs": lhs,
                "bound": theorem_bound(inst.d, inst.eps_cap),
                "ok": int(verify_bound_instance(inst, c_learned)),
            }
        )
    return rows


def tight_instance() -> tuple[BoundInstance, float]:
    """Optimum 100, eps 0.2, d 0.1, learned 132: the bound 0.32 holds with equality."""
    return BoundInstance(100.0, 0.2, 0.2, 0.1), 132.0
