"""Query templates, seeded query generation, featurization and workload profiles.

Template lines use the query grammar with placeholders in value positions:
``?`` draws uniformly from the column's declared domain, ``@`` copies the
value of a uniformly chosen table row (so generated ranges hit real data).
Literal integers are kept as written.  ``x between ? ?`` sorts its two draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .query import OPS, Predicate, Query
from .synthdb import Table, TableSpec, UnknownColumn

PLACEHOLDERS = ("?", "@")
Slot = tuple  # (column, op, value rules); each rule is an int or a placeholder


@dataclass(frozen=True)
class QueryTemplate:
    table: str
    slots: tuple[Slot, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(tuple(s) for s in self.slots))
        for col, op, rules in self.slots:
            if op not in OPS:
                raise ValueError(f"unknown operator {op!r} in template")
            want = 2 if op == "between" else 1
            if len(rules) != want:
                raise ValueError(f"{op} on {col!r} needs {want} value rule(s)")
            for r in rules:
                if not isinstance(r, int) and r not in PLACEHOLDERS:
                    raise ValueError(f"bad value rule {r!r} on {col!r}")

    def check(self, spec: TableSpec) -> None:
        for col, _, _ in self.slots:
            spec.column(col)

    def to_line(self) -> str:
        if not self.slots:
            return "*"
        return " AND ".join(f"{c} {op} {' '.join(str(r) for r in rules)}" for c, op, rules in self.slots)

    @classmethod
    def from_line(cls, table: str, line: str) -> "QueryTemplate":
        line = line.strip()
        if line in ("", "*"):
            return cls(table, ())
        slots = []
        for clause in line.split(" AND "):
            parts = clause.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"malformed template clause {clause!r}")
            col, op, *vals = parts
            rules = tuple(v if v in PLACEHOLDERS else int(v) for v in vals)
            slots.append((col, op, rules))
        return cls(table, tuple(slots))


def read_templates(path, table: str) -> list[QueryTemplate]:
    with open(path) as fh:
        return [
            QueryTemplate.from_line(table, line)
            for line in fh
            if line.strip() and not line.lstrip().startswith("#")
        ]


def write_templates(path, templates: Sequence[QueryTemplate]) -> None:
    with open(path, "w") as fh:
        for t in templates:
            fh.write(t.to_line() + "\n")


def random_templates(spec: TableSpec, count: int, seed: int, max_arity: int = 3) -> list[QueryTemplate]:
    """Template pool with predicate arity uniform on ``1..max_arity``.

    Columns and operators are drawn uniformly; every value slot is
    data-centric (``@``).
    """
    rng = np.random.default_rng(seed)
    names = spec.column_names
    top = min(max_arity, len(names))
    out = []
    for _ in range(count):
        arity = int(rng.integers(1, top, endpoint=True))
        cols = sorted(rng.choice(len(names), size=arity, replace=False).tolist())
        slots = []
        for c in cols:
            op = OPS[int(rng.integers(len(OPS)))]
            slots.append((names[c], op, ("@", "@") if op == "between" else ("@",)))
        out.append(QueryTemplate(spec.name, tuple(slots)))
    return out


def _draw(rule, col: str, table: Table, rng: np.random.Generator) -> int:
    if isinstance(rule, int):
        return rule
    if rule == "?":
        cs = table.spec.column(col)
        return int(rng.integers(cs.lo, cs.hi, endpoint=True))
    values = table.column(col)
    return int(values[rng.integers(len(values))])


def instantiate(template: QueryTemplate, table: Table, rng: np.random.Generator) -> Query:
    preds = []
    for col, op, rules in template.slots:
        vals = [_draw(r, col, table, rng) for r in rules]
        if op == "between":
            lo, hi = sorted(vals)
            preds.append(Predicate(col, op, lo, hi))
        else:
            preds.append(Predicate(col, op, vals[0]))
    return Query(template.table, tuple(preds))


def generate_queries(
    templates: Sequence[QueryTemplate], table: Table, n: int, seed: int
) -> list[Query]:
    """Draw ``n`` queries, each from a uniformly chosen template."""
    if not templates:
        raise ValueError("empty template list")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    for t in templates:
        t.check(table.spec)
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(templates), size=n)
    return [instantiate(templates[int(k)], table, rng) for k in picks]


def generate_workload(
    templates: Sequence[QueryTemplate],
    tables: Mapping[str, Table],
    n: int,
    seed: int,
    weights: Optional[Sequence[float]] = None,
) -> list[Query]:
    """Like ``generate_queries`` but each template instantiates on its own table.

    ``weights`` (normalized here) skews how often each template is picked.
    """
    if not templates:
        raise ValueError("empty template list")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    for t in templates:
        if t.table not in tables:
            raise ValueError(f"template table {t.table!r} is not loaded")
        t.check(tables[t.table].spec)
    rng = np.random.default_rng(seed)
    if weights is None:
        picks = rng.integers(len(templates), size=n)
    else:
        p = np.asarray(weights, dtype=np.float64)
        if p.shape != (len(templates),) or (p < 0).any() or p.sum() <= 0:
            raise ValueError("need one nonnegative weight per template")
        picks = rng.choice(len(templates), size=n, p=p / p.sum())
    out = []
    for k in picks:
        t = templates[int(k)]
        out.append(instantiate(t, tables[t.table], rng))
    return out


def zipf_template_weights(count: int, s: float, seed: int) -> np.ndarray:
    """Zipf(s) popularity over a seed-shuffled template order; s = 0 is uniform."""
    ranks = np.random.default_rng(seed).permutation(count) + 1
    w = ranks.astype(np.float64) ** -s
    return w / w.sum()


def drifting_stream(
    before: Sequence[QueryTemplate],
    after: Sequence[QueryTemplate],
    table: Table,
    n: int,
    switch_at: int,
    seed: int,
) -> list[Query]:
    """Queries from ``before`` for the first ``switch_at`` positions, then from ``after``."""
    head = generate_queries(before, table, switch_at, seed) if switch_at > 0 else []
    tail = generate_queries(after, table, n - switch_at, seed + 1) if n > switch_at else []
    return head + tail


# ---------------------------------------------------------------------------
# featurization


def _norm(v: float, lo: int, hi: int) -> float:
    if hi == lo:
        return 0.0
    return min(max((v - lo) / (hi - lo), 0.0), 1.0)


def feature_length(spec: TableSpec) -> int:
    return 3 * len(spec.columns)


def featurize(query: Query, schema: TableSpec) -> np.ndarray:
    """Per column ``(active, low, high)`` with bounds scaled to the column domain.

    Inactive columns encode ``(0, 0, 1)``.
    """
    out = np.zeros(feature_length(schema), dtype=np.float64)
    out[2::3] = 1.0
    index = {c.name: i for i, c in enumerate(schema.columns)}
    for p in query.predicates:
        try:
            i = index[p.column]
        except KeyError:
            raise UnknownColumn(p.column) from None
        cs = schema.columns[i]
        lo, hi = p.bounds()
        out[3 * i] = 1.0
        out[3 * i + 1] = 0.0 if lo is None else _norm(lo, cs.lo, cs.hi)
        out[3 * i + 2] = 1.0 if hi is None else _norm(hi, cs.lo, cs.hi)
    return out


def featurize_many(queries: Sequence[Query], schema: TableSpec) -> np.ndarray:
    """Row-wise ``featurize`` with the column lookup hoisted out of the loop."""
    out = np.zeros((len(queries), feature_length(schema)), dtype=np.float64)
    out[:, 2::3] = 1.0
    index = {c.name: (i, c.lo, c.hi) for i, c in enumerate(schema.columns)}
    for r, query in enumerate(queries):
        row = out[r]
        for p in query.predicates:
            try:
                i, clo, chi = index[p.column]
            except KeyError:
                raise UnknownColumn(p.column) from None
            lo, hi = p.bounds()
            row[3 * i] = 1.0
            row[3 * i + 1] = 0.0 if lo is None else _norm(lo, clo, chi)
            row[3 * i + 2] = 1.0 if hi is None else _norm(hi, clo, chi)
    return out


def workload_frequency(queries: Sequence[Query], schema: Union[TableSpec, Sequence[str]]) -> np.ndarray:
    """Fraction of queries predicating on each column.

    ``schema`` is either one table's spec (plain column names) or an ordered
    list of qualified ``table.column`` keys spanning several tables.
    """
    if isinstance(schema, TableSpec):
        keys = list(schema.column_names)
        qualified = False
    else:
        keys = list(schema)
        qualified = True
    pos = {k: i for i, k in enumerate(keys)}
    counts = np.zeros(len(keys), dtype=np.float64)
    if not queries:
        return counts
    for q in queries:
        for p in q.predicates:
            k = f"{q.table}.{p.column}" if qualified else p.column
            i: Optional[int] = pos.get(k)
            if i is not None:
                counts[i] += 1.0
    return counts / len(queries)
