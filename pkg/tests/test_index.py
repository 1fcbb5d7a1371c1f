import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from histdr.corpus import Passage
from histdr.encode import PassageEncoder
from histdr.errors import ParseError, ValidationError
from histdr.index import (DenseIndex, RankedList, build, load_index, read_run, save_index, search,
                          search_many, write_run)


def brute_force(ids, matrix, q, k):
    """Score everything, then sort by (-score, id) with Python's sort."""
    scored = [(-float(row @ q), pid) for pid, row in zip(ids, matrix)]
    scored.sort()
    return [(pid, -s) for s, pid in scored[:k]]


def test_search_matches_brute_force_with_ties():
    rng = np.random.default_rng(5)
    ids = [f"d{i:03d}" for i in range(50)]
    # small integer entries force many exact ties
    m = rng.integers(-2, 3, size=(50, 4)).astype(float)
    index = DenseIndex(ids, m)
    for _ in range(20):
        q = rng.integers(-1, 2, size=4).astype(float)
        for k in (1, 7, 50, 80):
            assert list(search(index, q, k).hits) == brute_force(ids, m, q, k)


def test_equal_scores_break_by_ascending_id():
    index = DenseIndex(["a", "b", "c"], np.array([[1.0], [1.0], [2.0]]))
    assert search(index, np.array([1.0]), 3).ids == ["c", "a", "b"]


def test_index_rejects_unsorted_ids():
    with pytest.raises(ValidationError):
        DenseIndex(["b", "a"], np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        DenseIndex(["a", "a"], np.zeros((2, 2)))


def test_build_orders_by_id_and_is_frozen():
    coll = {p: Passage(p, t) for p, t in [("z", "zed"), ("a", "ay"), ("m", "em")]}
    index = build(coll, PassageEncoder(32, 4, 0))
    assert index.ids == ("a", "m", "z")
    with pytest.raises(ValueError):
        index.matrix[0, 0] = 5.0
    with pytest.raises(ValidationError):
        build({}, PassageEncoder(32, 4, 0))


def test_search_validates_inputs():
    index = DenseIndex(["a"], np.ones((1, 3)))
    with pytest.raises(ValidationError):
        search(index, np.ones(2), 1)
    with pytest.raises(ValidationError):
        search(index, np.ones(3), 0)
    assert len(search(index, np.ones(3), 10).hits) == 1


def test_search_many_preserves_order():
    rng = np.random.default_rng(1)
    index = DenseIndex([f"p{i:02d}" for i in range(30)], rng.normal(size=(30, 5)))
    qs = [(f"q{i}", rng.normal(size=5)) for i in range(12)]
    single = search_many(index, qs, 5, jobs=1)
    multi = search_many(index, qs, 5, jobs=4)
    assert single == multi
    assert [r.query_id for r in multi] == [q for q, _ in qs]


def test_index_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    index = DenseIndex(["a", "b"], rng.normal(size=(2, 3)))
    save_index(index, tmp_path / "i.emb")
    back = load_index(tmp_path / "i.emb")
    assert back.ids == index.ids and back.checksum() == index.checksum()


def test_run_line_format(tmp_path):
    rl = RankedList("s1_3", (("p42", 12.73), ("p7", 3.0)))
    write_run([rl], "histdr", tmp_path / "r.trec")
    lines = (tmp_path / "r.trec").read_text().splitlines()
    assert lines[0] == "s1_3 Q0 p42 1 12.730000 histdr"
    assert lines[1] == "s1_3 Q0 p7 2 3.000000 histdr"
    assert read_run(tmp_path / "r.trec") == [rl]


def test_run_rank_gap_is_parse_error(tmp_path):
    (tmp_path / "r.trec").write_text("q Q0 a 1 1.0 t\nq Q0 b 3 0.5 t\n")
    with pytest.raises(ParseError) as exc:
        read_run(tmp_path / "r.trec")
    assert exc.value.lineno == 2


def test_ranked_list_rank_of():
    rl = RankedList("q", (("a", 2.0), ("b", 1.0)))
    assert rl.rank_of("b") == 2 and rl.rank_of("zz") == float("inf")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 60), st.integers(0, 2 ** 32 - 1))
def test_search_returns_sorted_unique_prefix(n, d, k, seed):
    rng = np.random.default_rng(seed)
    ids = [f"p{i:02d}" for i in range(n)]
    # integer entries keep every dot product exact, so ties are real ties
    m = rng.integers(-3, 4, size=(n, d)).astype(float)
    q = rng.integers(-3, 4, size=d).astype(float)
    hits = search(DenseIndex(ids, m), q, k)
    hits.validate()
    assert len(hits.hits) == min(k, n)
    assert list(hits.hits) == brute_force(ids, m, q, k)
