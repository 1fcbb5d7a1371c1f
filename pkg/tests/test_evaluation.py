import math

import pytest
from hypothesis import given, settings, strategies as st

from histdr.errors import ConfigError, ValidationError
from histdr.evaluation import (DEFAULT_METRICS, MetricSpec, evaluate, ndcg_at, recall_at,
                               reciprocal_rank, side_by_side)
from histdr.index import RankedList


def rl(qid, ids):
    n = len(ids)
    return RankedList(qid, tuple((p, float(n - i)) for i, p in enumerate(ids)))


def fill(n, prefix="x"):
    return [f"{prefix}{i:03d}" for i in range(n)]


L3 = 1 / math.log2(3)

# query -> (relevant ids, ranking, hand values for MRR, NDCG@3, R@10, R@100)
FIXTURE = {
    "q01": ({"a"}, ["a", "b", "c"], 1, 1, 1, 1),
    "q02": ({"a"}, ["b", "a", "c"], 1 / 2, L3, 1, 1),
    "q03": ({"a"}, ["b", "c", "a"], 1 / 3, 0.5, 1, 1),
    "q04": ({"a"}, ["b", "c", "d", "a"], 1 / 4, 0, 1, 1),
    "q05": ({"a"}, fill(19) + ["a"], 1 / 20, 0, 0, 1),
    "q06": ({"a"}, fill(5), 0, 0, 0, 0),
    "q07": ({"a", "b"}, ["a", "b", "c"], 1, 1, 1, 1),
    "q08": ({"a", "b"}, fill(4) + ["a"] + fill(145, "y") + ["b"], 1 / 5, 0, 0.5, 0.5),
    "q09": ({"z"}, ["z"], 1, 1, 1, 1),
    "q10": ({"a"}, fill(100) + ["a"], 0, 0, 0, 0),
}


def fixture_run_and_qrels():
    run = [rl(q, ranking) for q, (_, ranking, *_) in FIXTURE.items()]
    qrels = {q: {p: 1 for p in rel} for q, (rel, *_) in FIXTURE.items()}
    return run, qrels


@pytest.mark.parametrize("qid", sorted(FIXTURE))
def test_per_query_values(qid):
    rel, ranking, mrr, ndcg3, r10, r100 = FIXTURE[qid]
    qrels = {qid: {p: 1 for p in rel}}
    ranked = rl(qid, ranking)
    assert reciprocal_rank(ranked, qrels, 100) == pytest.approx(mrr, abs=0)
    assert ndcg_at(ranked, qrels, 3) == pytest.approx(ndcg3, abs=1e-15)
    assert recall_at(ranked, qrels, 10) == r10
    assert recall_at(ranked, qrels, 100) == r100


def test_fixture_means():
    run, qrels = fixture_run_and_qrels()
    rep = evaluate(run, qrels, DEFAULT_METRICS, depth=100)
    cols = list(zip(*[v[2:] for v in FIXTURE.values()]))
    expected = [sum(c) / 10 for c in cols]
    got = [rep.means[n] for n in ("MRR", "NDCG@3", "Recall@10", "Recall@100")]
    assert got == pytest.approx(expected, abs=1e-15)
    assert rep.n_queries == 10 and rep.unjudged == []


def test_mrr_without_cutoff_uses_run_depth():
    qrels = {"q": {"a": 1}}
    run = [rl("q", fill(120) + ["a"])]
    assert evaluate(run, qrels, [MetricSpec.parse("MRR")], depth=100).means["MRR"] == 0
    assert evaluate(run, qrels, [MetricSpec.parse("MRR")], depth=200).means["MRR"] == 1 / 121


def test_unjudged_queries_are_skipped():
    run = [rl("q1", ["a"]), rl("q2", ["a"]), rl("q3", ["a"])]
    qrels = {"q1": {"a": 1}, "q3": {"a": 0}}
    rep = evaluate(run, qrels)
    assert rep.n_queries == 1 and rep.unjudged == ["q2", "q3"]
    assert reciprocal_rank(run[1], qrels) is None
    with pytest.raises(ValidationError):
        evaluate([rl("q9", ["a"])], qrels)


def test_graded_ndcg_uses_linear_gain():
    qrels = {"q": {"a": 2, "b": 1}}
    got = ndcg_at(rl("q", ["b", "a"]), qrels, 2)
    want = (1 + 2 / math.log2(3)) / (2 + 1 / math.log2(3))
    assert got == pytest.approx(want)


@pytest.mark.parametrize("text,name", [("mrr", "MRR"), ("NDCG@3", "NDCG@3"), ("R@10", "Recall@10"),
                                       ("recall @ 100", "Recall@100"), ("MRR@10", "MRR@10")])
def test_metric_parse(text, name):
    assert MetricSpec.parse(text).name == name


@pytest.mark.parametrize("text", ["ndcg", "P@5", "R@0", ""])
def test_metric_parse_rejects(text):
    with pytest.raises(ConfigError):
        MetricSpec.parse(text)


def test_report_outputs(tmp_path):
    run, qrels = fixture_run_and_qrels()
    rep = evaluate(run, qrels)
    rep.write_per_query(tmp_path / "pq.tsv")
    lines = (tmp_path / "pq.tsv").read_text().splitlines()
    assert len(lines) == 40 and lines[0] == "q01\tMRR\t1.000000"
    table = side_by_side({"trained": rep, "untrained": rep})
    assert table.splitlines()[1].startswith("trained")
    assert "Recall@100" in rep.format_table()


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from("abcdefgh"), unique=True, max_size=8),
       st.sets(st.sampled_from("abcdefgh"), min_size=1), st.integers(1, 10))
def test_metric_ranges(ranking, relevant, k):
    qrels = {"q": {p: 1 for p in relevant}}
    r = rl("q", ranking)
    for v in (reciprocal_rank(r, qrels), ndcg_at(r, qrels, k), recall_at(r, qrels, k)):
        assert 0.0 <= v <= 1.0 + 1e-12
    # recall is monotone in the cutoff
    assert recall_at(r, qrels, k) <= recall_at(r, qrels, k + 1)
