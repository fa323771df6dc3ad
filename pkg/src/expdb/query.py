"""Conjunctive single-table queries and their text form.

A query line is ``col op v1 [v2]`` clauses joined by ``AND``, e.g.
``age >= 30 AND income between 100 200``.  An empty predicate list is
written as ``*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

OPS = ("=", "<=", ">=", "between")


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str
    v1: int
    v2: Optional[int] = None

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown operator {self.op!r}")
        if self.op == "between":
            if self.v2 is None:
                raise ValueError(f"between on {self.column!r} needs two values")
            if self.v1 > self.v2:
                raise ValueError(f"between on {self.column!r}: {self.v1} > {self.v2}")
        elif self.v2 is not None:
            raise ValueError(f"{self.op} on {self.column!r} takes one value")

    def bounds(self) -> tuple[Optional[int], Optional[int]]:
        """Inclusive (low, high) integer bounds; ``None`` means unbounded."""
        if self.op == "=":
            return self.v1, self.v1
        if self.op == "<=":
            return None, self.v1
        if self.op == ">=":
            return self.v1, None
        return self.v1, self.v2

    def __str__(self):
        if self.op == "between":
            return f"{self.column} between {self.v1} {self.v2}"
        return f"{self.column} {self.op} {self.v1}"


@dataclass(frozen=True)
class Query:
    table: str
    predicates: tuple[Predicate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        cols = [p.column for p in self.predicates]
        if len(set(cols)) != len(cols):
            raise ValueError(f"more than one predicate per column in {cols}")

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(p.column for p in self.predicates)

    def key(self) -> tuple:
        """Order-insensitive identity of the predicate set."""
        return (self.table, tuple(sorted((p.column, p.op, p.v1, p.v2) for p in self.predicates)))

    def to_line(self) -> str:
        if not self.predicates:
            return "*"
        return " AND ".join(str(p) for p in self.predicates)

    @classmethod
    def from_line(cls, table: str, line: str) -> "Query":
        line = line.strip()
        if line in ("", "*"):
            return cls(table, ())
        preds = []
        for clause in line.split(" AND "):
            preds.append(parse_clause(clause))
        return cls(table, tuple(preds))


def parse_clause(clause: str) -> Predicate:
    parts = clause.split()
    if len(parts) not in (3, 4):
        raise ValueError(f"malformed predicate {clause!r}")
    col, op, *vals = parts
    try:
        ints = [int(v) for v in vals]
    except ValueError:
        raise ValueError(f"non-integer value in {clause!r}") from None
    if op == "between":
        if len(ints) != 2:
            raise ValueError(f"between needs two values in {clause!r}")
        return Predicate(col, op, ints[0], ints[1])
    if len(ints) != 1:
        raise ValueError(f"{op} takes one value in {clause!r}")
    return Predicate(col, op, ints[0])


def write_queries(path, queries: Iterable[Query]) -> None:
    with open(path, "w") as fh:
        for q in queries:
            fh.write(q.to_line() + "\n")


def read_queries(path, table: str) -> list[Query]:
    with open(path) as fh:
        return [Query.from_line(table, line) for line in fh if line.strip()]
