"""Synthetic single-table engine.

Seeded table generation, the exact cardinality oracle, equi-width
histograms with the rule-based estimator built on them, a no-statistics
cold-start estimator, an analytic what-if index cost model and the query log.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .query import Query

DISTRIBUTIONS = ("uniform", "zipf", "gaussian")
DEFAULT_BUCKETS = 64

# System-R style defaults, used when no statistics exist
COLDSTART_EQ_SEL = 1.0 / 10.0
COLDSTART_RANGE_SEL = 1.0 / 3.0


class SpecError(ValueError):
    """Invalid table specification; ``field`` names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class UnknownColumn(KeyError):
    def __str__(self):
        return f"unknown column {self.args[0]!r}"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    distribution: str
    lo: int
    hi: int
    params: tuple[float, ...] = ()
    # (source column, strength): each row copies the source value, rescaled to
    # this domain, with probability ``strength``
    correlate: Optional[tuple[str, float]] = None

    def describe(self) -> str:
        if self.distribution == "uniform":
            dist = "uniform"
        else:
            dist = f"{self.distribution}({', '.join(_num(p) for p in self.params)})"
        text = f"{self.name}: {dist} [{self.lo}, {self.hi}]"
        if self.correlate:
            text += f" ~ {self.correlate[0]} {_num(self.correlate[1])}"
        return text


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: tuple[ColumnSpec, ...]
    row_count: int

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownColumn(name)

    def validate(self) -> None:
        if not _IDENT.match(self.name or ""):
            raise SpecError("name", f"not an identifier: {self.name!r}")
        if not isinstance(self.row_count, (int, np.integer)) or self.row_count < 1:
            raise SpecError("row_count", f"must be a positive integer, got {self.row_count!r}")
        if not self.columns:
            raise SpecError("columns", "at least one column is required")
        seen = set()
        for c in self.columns:
            where = f"columns.{c.name}"
            if not _IDENT.match(c.name or ""):
                raise SpecError(where, "column name is not an identifier")
            if c.name in seen:
                raise SpecError(where, "duplicate column name")
            seen.add(c.name)
            if c.lo > c.hi:
                raise SpecError(f"{where}.domain", f"lo {c.lo} > hi {c.hi}")
            if c.distribution not in DISTRIBUTIONS:
                raise SpecError(f"{where}.distribution", f"unknown distribution {c.distribution!r}")
            if c.distribution == "uniform" and c.params:
                raise SpecError(f"{where}.distribution", "uniform takes no parameters")
            if c.distribution == "zipf":
                if len(c.params) != 1 or not c.params[0] > 0:
                    raise SpecError(f"{where}.distribution", "zipf needs one exponent s > 0")
            if c.distribution == "gaussian":
                if len(c.params) != 2 or not c.params[1] > 0:
                    raise SpecError(f"{where}.distribution", "gaussian needs (mean, stddev > 0)")
            if c.correlate is not None:
                src, strength = c.correlate
                if src not in seen or src == c.name:
                    raise SpecError(f"{where}.correlate", f"source {src!r} must be an earlier column")
                if not 0.0 <= strength <= 1.0:
                    raise SpecError(f"{where}.correlate", "strength must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Table:
    spec: TableSpec
    data: Mapping[str, np.ndarray]

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def row_count(self) -> int:
        return self.spec.row_count

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[name]
        except KeyError:
            raise UnknownColumn(name) from None


def _draw_column(col: ColumnSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if col.distribution == "uniform":
        return rng.integers(col.lo, col.hi, size=n, endpoint=True, dtype=np.int64)
    if col.distribution == "zipf":
        # bounded zipf over ranks 1..m, rank k maps to value lo + k - 1
        m = col.hi - col.lo + 1
        ranks = np.arange(1, m + 1, dtype=np.float64)
        p = ranks ** -col.params[0]
        p /= p.sum()
        return col.lo + rng.choice(m, size=n, p=p).astype(np.int64)
    mean, std = col.params
    vals = np.rint(rng.normal(mean, std, size=n))
    return np.clip(vals, col.lo, col.hi).astype(np.int64)


def generate_table(spec: TableSpec, seed: int) -> Table:
    """Draw every column i.i.d. from its declared distribution.

    Columns are drawn in declaration order from one generator seeded with
    ``seed``, so the result is a pure function of ``(spec, seed)``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    data = {}
    for col in spec.columns:
        arr = _draw_column(col, spec.row_count, rng)
        if col.correlate is not None:
            src_name, strength = col.correlate
            src, src_spec = data[src_name], spec.column(src_name)
            width = max(src_spec.hi - src_spec.lo, 1)
            mapped = col.lo + np.rint((src - src_spec.lo) / width * (col.hi - col.lo)).astype(np.int64)
            take = rng.random(spec.row_count) < strength
            arr = np.where(take, mapped, arr)
        arr.setflags(write=False)
        data[col.name] = arr
    return Table(spec, data)


def table_from_columns(name: str, columns: Mapping[str, Sequence[int]]) -> Table:
    """Wrap literal column values (domains taken from the observed range)."""
    arrays = {k: np.asarray(v, dtype=np.int64) for k, v in columns.items()}
    lengths = {len(a) for a in arrays.values()}
    if len(lengths) != 1:
        raise SpecError("columns", "columns differ in length")
    cols = tuple(
        ColumnSpec(k, "uniform", int(a.min()), int(a.max())) for k, a in arrays.items()
    )
    spec = TableSpec(name, cols, lengths.pop())
    spec.validate()
    return Table(spec, arrays)


def write_table_csv(table: Table, path) -> None:
    names = table.spec.column_names
    cols = [table.column(n) for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(c.tolist() for c in cols)):
            w.writerow(row)


def read_table_csv(path, spec: TableSpec) -> Table:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(int, r)) for r in reader]
    if tuple(header) != spec.column_names:
        raise SpecError("columns", f"CSV header {header} does not match spec")
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), len(header))
    if len(rows) != spec.row_count:
        raise SpecError("row_count", f"CSV has {len(rows)} rows, spec says {spec.row_count}")
    return Table(spec, {n: arr[:, i].copy() for i, n in enumerate(header)})


# ---------------------------------------------------------------------------
# exact oracle


def exact_cardinality(table: Table, query: Query) -> int:
    """Count rows satisfying every predicate of ``query``."""
    mask = None
    for p in query.predicates:
        col = table.column(p.column)
        lo, hi = p.bounds()
        if lo is not None and hi is not None and lo == hi:
            m = col == lo
        elif lo is None:
            m = col <= hi
        elif hi is None:
            m = col >= lo
        else:
            m = (col >= lo) & (col <= hi)
        mask = m if mask is None else (mask & m)
    if mask is None:
        return table.row_count
    return int(np.count_nonzero(mask))


# ---------------------------------------------------------------------------
# histograms and the rule-based estimator


@dataclass(frozen=True, eq=False)
class Histogram:
    """Equi-width histogram over ``[min, max + 1)``.

    Integer value ``v`` occupies the unit interval ``[v, v + 1)``, so a bucket
    count spread uniformly over its width gives the fractional interpolation
    used for range predicates.  ``bucket_distinct`` holds the number of
    distinct values seen in each bucket and drives equality selectivity.
    """

    column: str
    bucket_count: int
    bounds: np.ndarray
    counts: np.ndarray
    distinct_estimate: int
    bucket_distinct: np.ndarray
    row_count: int
    min_value: int
    max_value: int
    cumulative: np.ndarray = field(repr=False)

    def mass_between(self, lo: Optional[float], hi: Optional[float]) -> float:
        """Estimated rows with ``lo <= value <= hi`` (inclusive integer bounds)."""
        a = self.min_value if lo is None else lo
        b = self.max_value if hi is None else hi
        if b < a:
            return 0.0
        upper = np.interp(b + 1, self.bounds, self.cumulative)
        lower = np.interp(a, self.bounds, self.cumulative)
        return float(max(upper - lower, 0.0))

    def bucket_of(self, value: int) -> int:
        span = self.max_value + 1 - self.min_value
        return min((value - self.min_value) * self.bucket_count // span, self.bucket_count - 1)

    def mass_equal(self, value: int) -> float:
        if value < self.min_value or value > self.max_value:
            return 0.0
        b = self.bucket_of(value)
        d = self.bucket_distinct[b]
        return float(self.counts[b]) / d if d else 0.0

    def row_mass(self, pred) -> float:
        """Estimated number of rows satisfying ``pred``, in ``[0, row_count]``."""
        if self.row_count == 0:
            return 0.0
        if pred.op == "=":
            mass = self.mass_equal(pred.v1)
        else:
            mass = self.mass_between(*pred.bounds())
        return min(max(mass, 0.0), float(self.row_count))

    def selectivity(self, pred) -> float:
        return self.row_mass(pred) / self.row_count if self.row_count else 0.0


def build_histogram(table: Table, column: str, bucket_count: int = DEFAULT_BUCKETS) -> Histogram:
    if bucket_count < 1:
        raise ValueError(f"bucket_count must be >= 1, got {bucket_count}")
    values = table.column(column)
    n = len(values)
    vmin, vmax = int(values.min()), int(values.max())
    span = vmax + 1 - vmin
    bounds = vmin + np.arange(bucket_count + 1, dtype=np.float64) * (span / bucket_count)
    bounds[-1] = vmax + 1
    idx = np.minimum((values - vmin) * bucket_count // span, bucket_count - 1)
    counts = np.bincount(idx, minlength=bucket_count).astype(np.int64)
    uniq = np.unique(values)
    uidx = np.minimum((uniq - vmin) * bucket_count // span, bucket_count - 1)
    bucket_distinct = np.bincount(uidx, minlength=bucket_count).astype(np.int64)
    cumulative = np.concatenate([[0.0], np.cumsum(counts, dtype=np.float64)])
    return Histogram(
        column=column,
        bucket_count=bucket_count,
        bounds=bounds,
        counts=counts,
        distinct_estimate=int(len(uniq)),
        bucket_distinct=bucket_distinct,
        row_count=n,
        min_value=vmin,
        max_value=vmax,
        cumulative=cumulative,
    )


def build_statistics(table: Table, bucket_count: int = DEFAULT_BUCKETS) -> dict[str, Histogram]:
    return {c: build_histogram(table, c, bucket_count) for c in table.spec.column_names}


def _stats_map(stats) -> Mapping[str, Histogram]:
    if isinstance(stats, Mapping):
        return stats
    return {h.column: h for h in stats}


def _combine(masses, row_count: int) -> float:
    """Independence product ``N * prod(m_i / N)``, led by the first mass.

    Starting from the first row mass instead of ``N * (m / N)`` keeps a single
    predicate's estimate exactly equal to its bucket mass.
    """
    if not masses:
        return float(row_count)
    n = float(row_count)
    est = min(max(float(masses[0]), 0.0), n)
    for m in masses[1:]:
        est *= min(max(float(m) / n, 0.0), 1.0) if n else 0.0
    return min(max(est, 0.0), n)


def estimate_cardinality_rule(stats, row_count: int, query: Query) -> float:
    """Histogram estimate under attribute independence, clamped to ``[0, row_count]``."""
    hists = _stats_map(stats)
    masses = []
    for p in query.predicates:
        try:
            h = hists[p.column]
        except KeyError:
            raise UnknownColumn(p.column) from None
        masses.append(h.row_mass(p) if row_count else 0.0)
    return _combine(masses, row_count)


def estimate_cardinality_coldstart(query: Query, row_count: int) -> float:
    est = float(row_count)
    for p in query.predicates:
        est *= COLDSTART_EQ_SEL if p.op == "=" else COLDSTART_RANGE_SEL
    return est


class HistogramEstimator:
    """Rule-based estimator bound to one table's statistics.

    ``estimate_many`` is the batch path used for weak-label generation; it
    computes the same numbers as ``estimate_cardinality_rule`` column by
    column with array arithmetic.
    """

    def __init__(self, stats, row_count: int):
        self.stats = dict(_stats_map(stats))
        self.row_count = row_count

    @classmethod
    def from_table(cls, table: Table, bucket_count: int = DEFAULT_BUCKETS):
        return cls(build_statistics(table, bucket_count), table.row_count)

    def __call__(self, query: Query) -> float:
        return estimate_cardinality_rule(self.stats, self.row_count, query)

    def estimate_many(self, queries: Sequence[Query]) -> np.ndarray:
        masses = [[0.0] * len(q.predicates) for q in queries]
        by_col: dict[str, tuple[list, list, list, list]] = {}
        for i, q in enumerate(queries):
            for j, p in enumerate(q.predicates):
                slots, los, his, eq = by_col.setdefault(p.column, ([], [], [], []))
                lo, hi = p.bounds()
                slots.append((i, j))
                los.append(lo)
                his.append(hi)
                eq.append(p.op == "=")
        for col, (slots, los, his, eq) in by_col.items():
            try:
                h = self.stats[col]
            except KeyError:
                raise UnknownColumn(col) from None
            eq = np.asarray(eq)
            lo = np.array([h.min_value if v is None else v for v in los], dtype=np.float64)
            hi = np.array([h.max_value if v is None else v for v in his], dtype=np.float64)
            mass = np.interp(hi + 1, h.bounds, h.cumulative) - np.interp(lo, h.bounds, h.cumulative)
            mass = np.where(hi < lo, 0.0, np.maximum(mass, 0.0))
            if eq.any():
                v = lo[eq].astype(np.int64)
                inside = (v >= h.min_value) & (v <= h.max_value)
                span = h.max_value + 1 - h.min_value
                b = np.clip((v - h.min_value) * h.bucket_count // span, 0, h.bucket_count - 1)
                d = h.bucket_distinct[b]
                m = np.where(inside & (d > 0), h.counts[b] / np.maximum(d, 1), 0.0)
                mass[eq] = m
            mass = np.clip(mass, 0.0, float(h.row_count)) if h.row_count else np.zeros_like(mass)
            for (i, j), m in zip(slots, mass.tolist()):
                masses[i][j] = m
        return np.array([_combine(m, self.row_count) for m in masses], dtype=np.float64)


# ---------------------------------------------------------------------------
# what-if cost model


@dataclass(frozen=True)
class IndexConfig:
    """Single-column index bitmap over a fixed, ordered list of columns.

    Column keys are qualified ``table.column`` names.
    """

    columns: tuple[str, ...]
    built: tuple[bool, ...]
    max_indexes: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "built", tuple(bool(b) for b in self.built))
        if len(self.columns) != len(self.built):
            raise ValueError("bitmap length does not match column count")
        if self.max_indexes is not None and self.count > self.max_indexes:
            raise ValueError(f"{self.count} indexes exceed budget {self.max_indexes}")

    @classmethod
    def empty(cls, columns: Iterable[str], max_indexes: Optional[int] = None) -> "IndexConfig":
        columns = tuple(columns)
        return cls(columns, (False,) * len(columns), max_indexes)

    @classmethod
    def for_tables(cls, specs: Iterable[TableSpec], max_indexes: Optional[int] = None):
        return cls.empty([f"{s.name}.{c}" for s in specs for c in s.column_names], max_indexes)

    @property
    def count(self) -> int:
        return sum(self.built)

    def position(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UnknownColumn(column) from None

    def has(self, column: str) -> bool:
        return column in self.columns and self.built[self.columns.index(column)]

    def can_build(self) -> bool:
        return self.max_indexes is None or self.count < self.max_indexes

    def with_index(self, column: str, built: bool) -> "IndexConfig":
        i = self.position(column)
        bits = list(self.built)
        bits[i] = built
        return IndexConfig(self.columns, tuple(bits), self.max_indexes)

    def as_array(self) -> np.ndarray:
        return np.array(self.built, dtype=np.float64)


def probe_overhead(row_count: int) -> int:
    """ceil(log2(row_count)) for row_count >= 1."""
    return (int(row_count) - 1).bit_length()


def whatif_cost(row_count: int, query: Query, idx: IndexConfig, stats) -> float:
    """Analytic cost of ``query`` under hypothetical indexes ``idx``.

    Full scan costs ``row_count``.  An index on a predicate column costs
    ``max(1, s * row_count) + ceil(log2(row_count))`` for the most selective
    such column; the planner keeps the cheaper of scan and probe.
    """
    hists = _stats_map(stats)
    best = float(row_count)
    for p in query.predicates:
        if not idx.has(f"{query.table}.{p.column}"):
            continue
        s = hists[p.column].selectivity(p)
        best = min(best, max(1.0, s * row_count) + probe_overhead(row_count))
    return best


# ---------------------------------------------------------------------------
# query log


class QueryLog:
    """Append-only log of executed queries with their true cardinalities."""

    def __init__(self):
        self.entries: list[tuple[Query, int]] = []
        self._latest: dict[tuple, int] = {}

    def __len__(self):
        return len(self.entries)

    def append(self, query: Query, true_cardinality: int) -> None:
        if true_cardinality < 0:
            raise ValueError("cardinality must be nonnegative")
        self.entries.append((query, int(true_cardinality)))
        self._latest[query.key()] = int(true_cardinality)

    def search(self, query: Query) -> Optional[int]:
        return self._latest.get(query.key())

    def harvest(self, table: str) -> list[tuple[Query, int]]:
        """Distinct logged queries on ``table``, most recent label each, first-seen order."""
        out = {}
        for q, _ in self.entries:
            if q.table == table and q.key() not in out:
                out[q.key()] = (q, self._latest[q.key()])
        return list(out.values())


def log_append(log: QueryLog, query: Query, true_cardinality: int) -> None:
    log.append(query, true_cardinality)


def log_search(log: QueryLog, query: Query) -> Optional[int]:
    return log.search(query)
