"""Built-in desk-scale datasets.

``census_like`` is a single table with skewed, bell-shaped and partly
correlated integer columns for cardinality estimation.  ``tpch_like`` is eight tables with
eighteen single-table query templates for index tuning.
"""

from __future__ import annotations

from .synthdb import ColumnSpec, TableSpec
from .workload import QueryTemplate


def census_like(rows: int = 30_000) -> TableSpec:
    return TableSpec(
        "census",
        (
            ColumnSpec("age", "gaussian", 17, 90, (40.0, 13.0)),
            ColumnSpec("workclass", "zipf", 0, 8, (1.3,)),
            ColumnSpec("education", "zipf", 0, 15, (0.8,), ("workclass", 0.7)),
            ColumnSpec("hours", "gaussian", 1, 99, (40.0, 12.0), ("age", 0.6)),
            ColumnSpec("capital_gain", "zipf", 0, 99, (1.1,), ("education", 0.5)),
            ColumnSpec("zip", "uniform", 0, 999),
        ),
        rows,
    )


def tpch_like(scale: float = 1.0) -> list[TableSpec]:
    def n(base):
        return max(int(base * scale), 1)

    return [
        TableSpec("region", (ColumnSpec("r_regionkey", "uniform", 0, 4), ColumnSpec("r_name", "uniform", 0, 4)), 5),
        TableSpec(
            "nation",
            (ColumnSpec("n_nationkey", "uniform", 0, 24), ColumnSpec("n_regionkey", "uniform", 0, 4)),
            25,
        ),
        TableSpec(
            "supplier",
            (
                ColumnSpec("s_suppkey", "uniform", 1, 10_000),
                ColumnSpec("s_nationkey", "uniform", 0, 24),
                ColumnSpec("s_acctbal", "uniform", -999, 9999),
            ),
            n(10_000),
        ),
        TableSpec(
            "customer",
            (
                ColumnSpec("c_custkey", "uniform", 1, 150_000),
                ColumnSpec("c_nationkey", "uniform", 0, 24),
                ColumnSpec("c_mktsegment", "uniform", 0, 4),
                ColumnSpec("c_acctbal", "uniform", -999, 9999),
            ),
            n(150_000),
        ),
        TableSpec(
            "part",
            (
                ColumnSpec("p_partkey", "uniform", 1, 200_000),
                ColumnSpec("p_size", "uniform", 1, 50),
                ColumnSpec("p_brand", "uniform", 0, 24),
                ColumnSpec("p_retailprice", "gaussian", 900, 2100, (1500.0, 250.0)),
            ),
            n(200_000),
        ),
        TableSpec(
            "partsupp",
            (
                ColumnSpec("ps_partkey", "uniform", 1, 200_000),
                ColumnSpec("ps_suppkey", "uniform", 1, 10_000),
                ColumnSpec("ps_availqty", "uniform", 1, 9999),
            ),
            n(800_000),
        ),
        TableSpec(
            "orders",
            (
                ColumnSpec("o_orderkey", "uniform", 1, 6_000_000),
                ColumnSpec("o_custkey", "uniform", 1, 150_000),
                ColumnSpec("o_orderdate", "uniform", 0, 2405),
                ColumnSpec("o_orderpriority", "uniform", 0, 4),
                ColumnSpec("o_totalprice", "zipf", 1, 50_000, (0.6,)),
            ),
            n(1_500_000),
        ),
        TableSpec(
            "lineitem",
            (
                ColumnSpec("l_orderkey", "uniform", 1, 6_000_000),
                ColumnSpec("l_partkey", "uniform", 1, 200_000),
                ColumnSpec("l_suppkey", "uniform", 1, 10_000),
                ColumnSpec("l_shipdate", "uniform", 0, 2525),
                ColumnSpec("l_quantity", "uniform", 1, 50),
                ColumnSpec("l_discount", "uniform", 0, 10),
            ),
            n(6_000_000),
        ),
    ]


# eighteen single-table templates shaped after the TPC-H selection predicates
TPCH_TEMPLATES: tuple[tuple[str, str], ...] = (
    ("lineitem", "l_shipdate <= ?"),
    ("orders", "o_orderdate between ? ? AND o_orderpriority = ?"),
    ("customer", "c_mktsegment = ? AND c_nationkey = ?"),
    ("orders", "o_orderdate between ? ?"),
    ("lineitem", "l_shipdate between ? ? AND l_discount between ? ? AND l_quantity <= ?"),
    ("supplier", "s_nationkey = ?"),
    ("lineitem", "l_orderkey = ?"),
    ("part", "p_size = ? AND p_brand = ?"),
    ("partsupp", "ps_partkey = ?"),
    ("orders", "o_custkey = ?"),
    ("partsupp", "ps_suppkey = ?"),
    ("lineitem", "l_partkey = ?"),
    ("customer", "c_acctbal >= ?"),
    ("part", "p_retailprice between ? ?"),
    ("nation", "n_regionkey = ?"),
    ("lineitem", "l_suppkey = ? AND l_shipdate >= ?"),
    ("orders", "o_totalprice >= ?"),
    ("customer", "c_custkey = ?"),
)


def tpch_templates() -> list[QueryTemplate]:
    return [QueryTemplate.from_line(t, line) for t, line in TPCH_TEMPLATES]
