import csv
import math

import numpy as np
import pytest

from expdb import learner, rules
from expdb.eedl import (
    CARDINALITY_DEMAND,
    GATE_DISABLED,
    HISTORY_FIELDS,
    RECORD_FIELDS,
    EEDLConfig,
    ELCSources,
    LearnedEstimator,
    evaluate,
    infer,
    log_target,
    make_heldout,
    new_model,
    pretrain,
    retrain,
    run_cardinality_experiment,
    run_online,
    write_history,
    write_records,
)
from expdb.elc import CardinalityTask, LabeledExample, NoLabelSource
from expdb.metrics import q_errors
from expdb.query import Query
from expdb.scenarios import census_like
from expdb.synthdb import QueryLog, exact_cardinality, generate_table
from expdb.workload import featurize, generate_queries, random_templates

SMALL = dict(pretrain_size=400, stream_size=200, heldout_size=100, interval=50, pretrain_epochs=30, retrain_steps=20)


@pytest.fixture(scope="module")
def census():
    table = generate_table(census_like(3000), 0)
    return table, random_templates(table.spec, 10, 0)


def small(**kw):
    return EEDLConfig(**{**SMALL, **kw})


def test_config_validation():
    for bad in (dict(interval=0), dict(d=-1.0), dict(pretrain_size=0), dict(minibatch=0)):
        with pytest.raises(ValueError):
            EEDLConfig(**bad).validate()


def test_log_target():
    assert log_target([0, 1, math.e]).tolist() == [0.0, 0.0, 1.0]


def test_pretrain_fits_teacher():
    # default scale: 5K weak labels, full epoch budget
    table = generate_table(census_like(), 0)
    templates = random_templates(table.spec, 20, 0)
    cfg = EEDLConfig()
    rule = rules.histogram_estimator(table)
    model, ts = pretrain(new_model(table, cfg), ELCSources(CardinalityTask(table), None, rule, templates), cfg)
    assert ts.provenance_mix()["rule"] == cfg.pretrain_size
    est = LearnedEstimator(model, table)
    qs = [e.query for e in ts.examples]
    assert np.median(q_errors(est.estimate_many(qs), rule.estimate_many(qs))) <= 1.5


def test_pretrain_edges(census):
    table, templates = census
    with pytest.raises(ValueError):
        cfg = small(pretrain_size=0)
        pretrain(new_model(table, cfg), ELCSources(CardinalityTask(table), None, None, templates), cfg)
    cfg = small()
    with pytest.raises(NoLabelSource):
        pretrain(new_model(table, cfg), ELCSources(CardinalityTask(table), QueryLog(), None, templates), cfg)


def test_pretrain_is_deterministic(census):
    table, templates = census
    cfg = small()
    rule = rules.histogram_estimator(table)
    src = ELCSources(CardinalityTask(table), None, rule, templates)
    a, _ = pretrain(new_model(table, cfg), src, cfg)
    b, _ = pretrain(new_model(table, cfg), src, cfg)
    assert a.flat().tobytes() == b.flat().tobytes()


def test_estimator_clamps(census):
    table, _ = census
    m = new_model(table, small())
    m.biases[-1][:] = 50.0
    est = LearnedEstimator(m, table)
    assert est(Query("census")) == pytest.approx(table.row_count)
    m.biases[-1][:] = -50.0
    assert est(Query("census")) == 1.0


class _Const:
    def __init__(self, v):
        self.v = v

    def __call__(self, q):
        return self.v


def _estimator_returning(table, value):
    m = new_model(table, small())
    for w in m.weights:
        w[:] = 0
    m.biases[-1][:] = math.log(value)
    return LearnedEstimator(m, table)


def test_infer_gate(census):
    table, _ = census
    q = Query.from_line("census", "age <= 40")
    est, rec = infer(q, _estimator_returning(table, 100.0), _Const(100.0), 0.5)
    assert rec.chosen == "learned" and est == pytest.approx(100.0)
    est, rec = infer(q, _estimator_returning(table, 2000.0), _Const(100.0), 0.5)
    assert rec.chosen == "rule" and est == 100.0
    est, rec = infer(q, _estimator_returning(table, 2000.0), _Const(100.0), GATE_DISABLED)
    assert rec.chosen == "learned" and est == pytest.approx(2000.0)


def test_infer_rule_failure_falls_back(census):
    table, _ = census

    def broken(q):
        raise RuntimeError("boom")

    q = Query.from_line("census", "age <= 40")
    _, rec = infer(q, _estimator_returning(table, 5.0), broken, 0.5)
    assert rec.rule_fallback and rec.c_rule == pytest.approx(table.row_count / 3)


def _pool_of(table, queries):
    pool = learner.ExperiencePool(100)
    for q in queries:
        pool.push(LabeledExample(featurize(q, table.spec), float(exact_cardinality(table, q)), "execution", q))
    return pool


def test_retrain_perfect_example_is_fixed_point(census):
    table, _ = census
    q = Query.from_line("census", "age <= 40")
    truth = exact_cardinality(table, q)
    m = _estimator_returning(table, truth).model
    before = m.flat()
    retrain(m, _pool_of(table, [q]), small(), 0)
    assert np.allclose(before, m.flat(), rtol=0, atol=1e-12)


def test_retrain_fits_pool_and_is_deterministic(census):
    table, templates = census
    qs = generate_queries(templates, table, 60, 7)
    pool = _pool_of(table, qs)
    cfg = small(retrain_steps=300)
    truth = np.array([exact_cardinality(table, q) for q in qs])

    def run():
        m = new_model(table, cfg)
        before = np.median(q_errors(LearnedEstimator(m, table).estimate_many(qs), truth))
        retrain(m, pool, cfg, 3)
        return m, before

    m1, before = run()
    m2, _ = run()
    after = np.median(q_errors(LearnedEstimator(m1, table).estimate_many(qs), truth))
    assert after < before
    assert m1.flat().tobytes() == m2.flat().tobytes()


def test_retrain_empty_pool_skips(census, caplog):
    table, _ = census
    m = new_model(table, small())
    before = m.flat()
    retrain(m, learner.ExperiencePool(3), small(), 0)
    assert np.array_equal(before, m.flat())
    assert "empty" in caplog.text


@pytest.mark.parametrize("n, expected", [(49, 0), (150, 3)])
def test_retrain_count_follows_interval(census, n, expected):
    table, templates = census
    cfg = small()
    heldout = make_heldout(table, templates, 20, 1)
    stream = generate_queries(templates, table, n, 2)
    res = run_online(stream, new_model(table, cfg), table, cfg, heldout=heldout)
    assert len(res.history) == expected + 1
    assert len(res.records) == n


def test_every_task_has_one_record(census):
    table, templates = census
    res = run_cardinality_experiment(table, templates, small())
    assert [r.task_index for r in res.records] == list(range(1, 201))
    chosen = [r.chosen for r in res.records]
    assert chosen.count("rule") + chosen.count("learned") == 200
    assert all(r.q_error >= 1.0 for r in res.records)
    assert all(r.true_cardinality == exact_cardinality(table, r.query) for r in res.records[:20])


def test_gate_extremes(census):
    table, templates = census
    res = run_cardinality_experiment(table, templates, small(d=0.0))
    assert all(r.chosen == "rule" and r.estimate == r.c_rule for r in res.records)
    res = run_cardinality_experiment(table, templates, small(d=GATE_DISABLED))
    assert all(r.chosen == "learned" and r.estimate == r.c_learned for r in res.records)


def test_drift_reselects_rule(census):
    table, templates = census
    fast = CARDINALITY_DEMAND.replace(goal="time", multi=0)
    cfg = small(demand_schedule=((100, fast),))
    res = run_cardinality_experiment(table, templates, cfg)
    assert res.selections == [(0, "histogram"), (100, "coldstart")]
    assert {r.rule_name for r in res.records if r.task_index > 100} == {"coldstart"}
    assert {r.rule_name for r in res.records if r.task_index <= 100} == {"histogram"}


def test_no_drift_keeps_rule(census):
    table, templates = census
    res = run_cardinality_experiment(table, templates, small())
    assert res.selections == [(0, "histogram")]


def test_evaluate_fields(census):
    table, templates = census
    heldout = make_heldout(table, templates, 50, 3)
    out = evaluate(LearnedEstimator(new_model(table, small()), table), rules.histogram_estimator(table), heldout, 0.5)
    assert set(HISTORY_FIELDS) - {"window", "tasks", "rule"} == set(out)
    assert 0.0 <= out["learned_fraction"] <= 1.0


def test_csv_outputs(tmp_path, census):
    table, templates = census
    res = run_cardinality_experiment(table, templates, small())
    write_records(res.records, tmp_path / "r.csv")
    write_history(res.history, tmp_path / "h.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == RECORD_FIELDS and len(rows) == 200
    hist = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert [int(h["window"]) for h in hist] == [0, 1, 2, 3, 4]
    res2 = run_cardinality_experiment(table, templates, small())
    write_records(res2.records, tmp_path / "r2.csv")
    assert (tmp_path / "r.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
