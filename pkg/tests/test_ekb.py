import itertools

import pytest
from hypothesis import given, strategies as st

from expdb import rules
from expdb.ekb import (
    BEHAVIORS,
    SLOTS,
    FeatureTagVector,
    KnowledgeBase,
    KnowledgeError,
    default_kb,
    match_method,
    needs_update,
    similarity,
    standardize,
)
from expdb.synthdb import ColumnSpec, TableSpec, generate_table

ALL_VECTORS = [FeatureTagVector(*combo) for combo in itertools.product(*SLOTS.values())]
vectors = st.sampled_from(ALL_VECTORS)


def test_standardize_examples():
    drop = standardize({"behavior": "drop_infrequent"})
    assert drop.feature == FeatureTagVector("index", "cost", "relational", "offline", 1)
    assert drop.input == ("table", "workload") and drop.output == "indexes"
    hist = standardize({"behavior": "histogram"})
    assert hist.feature == FeatureTagVector("cardinality", "accuracy", "relational", "online", 1)
    with pytest.raises(KnowledgeError):
        standardize({"behavior": "histogram", "feature": {"goal": ["accuracy", "time"]}})
    with pytest.raises(KnowledgeError):
        standardize({"behavior": "histogram", "feature": ["accuracy", "time"]})
    with pytest.raises(KnowledgeError):
        standardize({"behavior": "nope"})
    with pytest.raises(KnowledgeError):
        standardize({"behavior": "histogram", "feature": {"colour": "red"}})


def test_tag_list_form():
    v = FeatureTagVector.from_tags(["index", "cost", "relational", "offline", "multi"])
    assert v == FeatureTagVector("index", "cost", "relational", "offline", 1)
    with pytest.raises(KnowledgeError):
        FeatureTagVector.from_tags(["index", "cost"])


def test_encoding_is_one_hot_per_slot():
    for v in ALL_VECTORS[:20]:
        e = v.encode()
        assert e.sum() == len(SLOTS)
        assert len(e) == sum(len(a) for a in SLOTS.values())


def test_match_examples():
    kb = default_kb()
    for entry in kb:
        assert match_method(kb, entry.feature) is entry
        assert similarity(entry.feature, entry.feature) == 1.0
    k_index = standardize({"name": "k_index", "behavior": "drop_infrequent"})
    k_graph = standardize(
        {"name": "k_graph", "behavior": "drop_infrequent", "feature": {"goal": "time", "data_model": "graph"}}
    )
    demand = FeatureTagVector("index", "cost", "relational", "online", 1)
    assert match_method(KnowledgeBase([k_graph, k_index]), demand).name == "k_index"
    with pytest.raises(KnowledgeError):
        match_method(KnowledgeBase(), demand)


def test_tie_goes_to_first_entry():
    a = standardize({"name": "a", "behavior": "histogram", "feature": {"goal": "cost"}})
    b = standardize({"name": "b", "behavior": "histogram", "feature": {"goal": "time"}})
    demand = FeatureTagVector("cardinality", "accuracy", "relational", "online", 1)
    assert similarity(a.feature, demand) == similarity(b.feature, demand)
    for _ in range(3):
        assert match_method([a, b], demand).name == "a"
        assert match_method([b, a], demand).name == "b"


def test_duplicate_features_rejected():
    e = standardize({"behavior": "histogram"})
    with pytest.raises(KnowledgeError):
        KnowledgeBase([e, standardize({"name": "dup", "behavior": "histogram"})])


def test_needs_update_examples():
    hist = standardize({"behavior": "histogram"})
    assert not needs_update(hist, hist.feature, 0.9)
    opposite = FeatureTagVector("index", "cost", "graph", "offline", 0)
    assert similarity(hist.feature, opposite) == 0.0
    assert needs_update(hist, opposite, 0.5)
    # one slot differs: 4 of 5 active positions shared, similarity exactly 0.8
    one_off = hist.feature.replace(task="index")
    assert similarity(hist.feature, one_off) == 0.8
    assert not needs_update(hist, one_off, 0.8)
    assert needs_update(hist, one_off, 0.8000001)


@given(vectors, vectors)
def test_similarity_is_symmetric_and_bounded(a, b):
    s = similarity(a, b)
    assert s == similarity(b, a)
    assert 0.0 <= s <= 1.0
    assert (s == 1.0) == (a == b)


@given(st.permutations(list(default_kb())), vectors)
def test_match_score_is_permutation_invariant(entries, demand):
    base = match_method(default_kb(), demand)
    got = match_method(entries, demand)
    assert similarity(got.feature, demand) == similarity(base.feature, demand)


def test_save_load_round_trip(tmp_path):
    kb = default_kb()
    kb.add(standardize({"name": "hist16", "behavior": "histogram", "parameters": {"bucket_count": 16},
                        "feature": {"data_model": "kv"}}))
    path = tmp_path / "kb.jsonl"
    kb.save(path)
    back = KnowledgeBase.load(path)
    assert [e.to_record() for e in back] == [e.to_record() for e in kb]


def test_behaviors_bind_and_run():
    table = generate_table(TableSpec("t", (ColumnSpec("x", "uniform", 0, 9),), 100), 0)
    kb = default_kb()
    assert set(BEHAVIORS) >= {"histogram", "coldstart", "frequent_candidate", "drop_repeated", "drop_infrequent"}
    from expdb.query import Query

    q = Query.from_line("t", "x <= 4")
    assert 0 <= kb.get("histogram").bind(table)(q) <= 100
    assert kb.get("coldstart").bind(table)(q) == pytest.approx(100 / 3)
    assert kb.get("frequency_rules").bind()([0.5, 0.0], [False, False], 3) == ("build", 0)
    assert kb.get("drop_infrequent").bind(f_low=0.1)([0.05, 0.5], [True, True], 3) == ("drop", 0)
    with pytest.raises(KnowledgeError):
        kb.get("histogram").bind(table, buckets=3)


# --- the index rules themselves ------------------------------------------------------


def test_index_rules():
    assert rules.frequent_candidate([0.1, 0.3, 0.25], [False, False, False], 3) == ("build", 1)
    assert rules.frequent_candidate([0.1, 0.3, 0.25], [False, True, False], 3) == ("build", 2)
    assert rules.frequent_candidate([0.1, 0.3, 0.25], [False, True, False], 1) == rules.NOOP
    assert rules.frequent_candidate([0.1, 0.15], [False, False], None) == rules.NOOP
    assert rules.drop_infrequent([0.0, 0.5], [False, True], 3) == rules.NOOP
    assert rules.drop_infrequent([0.01, 0.02], [True, True], 3) == ("drop", 0)
    assert rules.drop_repeated([0.1], [True], 1) == rules.NOOP
    assert rules.frequency_rules([0.01, 0.9], [True, False], 3) == ("drop", 0)
    assert rules.frequency_rules([0.3, 0.9], [True, False], 3) == ("build", 1)
