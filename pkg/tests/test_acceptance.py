"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (also collected
into the terminal summary) before asserting. The learning criteria share one
module-scoped sweep over seeds 0-4 on the frozen synthetic regime.
"""
import json
import math
import statistics
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from histdr.cli import main
from histdr.corpus import Passage, Session, Turn, derive_qrels
from histdr.encode import FeatureVector, PassageEncoder, featurize
from histdr.evaluation import (DEFAULT_METRICS, MetricSpec, evaluate, ndcg_at, recall_at,
                               reciprocal_rank)
from histdr.experiments import (FULL, NO_DENOISING, NO_HARD_NEG, NO_PSEUDO_POS, VARIANTS,
                                Experiment, eval_select)
from histdr.index import DenseIndex, RankedList, search
from histdr.prj import IRRELEVANT, HistoryMode, judge_all, judge_turn
from histdr.retrieval import Retriever
from histdr.supervision import MiningConfig
from histdr.synthetic import SyntheticSpec, synthesize
from histdr.trainer import BatchItem, TrainConfig, loss_and_grad

SEEDS = (0, 1, 2, 3, 4)
D_FEAT, D_EMB = 4096, 128


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# --- 1 ---------------------------------------------------------------------------------

def test_c01_full_scale_not_reproducible():
    statement = ("full-scale benchmark numbers need multi-million passage collections and a "
                 "transformer encoder; they are not reproduced here, criteria 2-10 stand in")
    assert report(1, True, statement)


# --- 2 ---------------------------------------------------------------------------------

def _nll(W, items):
    # plain softmax without shifting, one term per positive
    total = 0.0
    for it in items:
        q = W.T @ it.features.dense()
        neg = sum(math.exp(float(n @ q)) for n in it.negatives)
        per = [-math.log(math.exp(float(p @ q)) / (math.exp(float(p @ q)) + neg))
               for p in it.positives]
        total += sum(per) / len(per)
    return total / len(items)


def test_c02_gradient_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, n_configs, h = 0.0, 120, 1e-6
    for _ in range(n_configs):
        d_feat, d_emb = int(rng.integers(1, 17)), int(rng.integers(1, 9))
        items = []
        for _ in range(int(rng.integers(1, 4))):
            nnz = int(rng.integers(1, d_feat + 1))
            idx = np.sort(rng.choice(d_feat, nnz, replace=False))
            vals = rng.uniform(0.1, 1.0, nnz)
            fv = FeatureVector(d_feat, idx, vals / np.linalg.norm(vals))
            pos = rng.normal(size=(int(rng.integers(1, 4)), d_emb))
            neg = rng.normal(size=(int(rng.integers(0, 6)), d_emb))
            items.append(BatchItem(fv, pos, neg))
        W = rng.normal(size=(d_feat, d_emb))
        _, grad = loss_and_grad(W, items)
        fd = np.zeros_like(W)
        for ij in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[ij] += h
            Wm[ij] -= h
            fd[ij] = (_nll(Wp, items) - _nll(Wm, items)) / (2 * h)
        scale = max(np.abs(grad).max(), np.abs(fd).max())
        if scale > 0:
            worst = max(worst, float(np.abs(grad - fd).max() / scale))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 30
    assert report(2, ok, f"{n_configs} configs, max relative error {worst:.2e}, {elapsed:.1f}s")


# --- 3 ---------------------------------------------------------------------------------

def _fill(n, prefix="x"):
    return [f"{prefix}{i:03d}" for i in range(n)]


L3 = 1 / math.log2(3)
METRIC_FIXTURE = {
    # query: relevant, ranking, MRR, NDCG@3, R@10, R@100
    "q01": ({"a"}, ["a", "b", "c"], 1, 1, 1, 1),
    "q02": ({"a"}, ["b", "a", "c"], 1 / 2, L3, 1, 1),
    "q03": ({"a"}, ["b", "c", "a"], 1 / 3, 0.5, 1, 1),
    "q04": ({"a"}, ["b", "c", "d", "a"], 1 / 4, 0, 1, 1),
    "q05": ({"a"}, _fill(19) + ["a"], 1 / 20, 0, 0, 1),
    "q06": ({"a"}, _fill(5), 0, 0, 0, 0),
    "q07": ({"a", "b"}, ["a", "b", "c"], 1, 1, 1, 1),
    "q08": ({"a", "b"}, _fill(4) + ["a"] + _fill(145, "y") + ["b"], 1 / 5, 0, 0.5, 0.5),
    "q09": ({"z"}, ["z"], 1, 1, 1, 1),
    "q10": ({"a"}, _fill(100) + ["a"], 0, 0, 0, 0),
}


def test_c03_metric_oracle():
    t0 = time.perf_counter()
    run, qrels, mismatches = [], {}, []
    for qid, (rel, ranking, *want) in METRIC_FIXTURE.items():
        ranked = RankedList(qid, tuple((p, float(len(ranking) - i)) for i, p in enumerate(ranking)))
        run.append(ranked)
        qrels[qid] = {p: 1 for p in rel}
        got = [reciprocal_rank(ranked, qrels, 100), ndcg_at(ranked, qrels, 3),
               recall_at(ranked, qrels, 10), recall_at(ranked, qrels, 100)]
        if got != want:
            mismatches.append((qid, got, want))
    rep = evaluate(run, qrels, DEFAULT_METRICS, depth=100)
    cols = list(zip(*[v[2:] for v in METRIC_FIXTURE.values()]))
    means = [rep.means[m.name] for m in DEFAULT_METRICS]
    means_ok = all(abs(g - sum(c) / 10) < 1e-15 for g, c in zip(means, cols))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and means_ok and elapsed < 1
    assert report(3, ok, f"10 queries, {len(mismatches)} mismatches, {elapsed * 1000:.0f}ms")


# --- 4 ---------------------------------------------------------------------------------

def test_c04_retrieval_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    ids = [f"p{i:04d}" for i in range(200)]
    # coarse integer entries make exact score ties common
    m = rng.integers(-2, 3, size=(200, 16)).astype(np.float64)
    index = DenseIndex(ids, m)
    bad, ties = 0, 0
    for _ in range(30):
        q = rng.integers(-1, 2, size=16).astype(np.float64)
        scores = [float(row @ q) for row in m]
        ties += len(scores) - len(set(scores))
        oracle = sorted(zip(ids, scores), key=lambda t: (-t[1], t[0]))
        for k in (1, 5, 100):
            if list(search(index, q, k).hits) != oracle[:k]:
                bad += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and ties > 0 and elapsed < 5
    assert report(4, ok, f"30 queries x k in 1,5,100, {bad} mismatches, {ties} tied scores, "
                         f"{elapsed:.2f}s")


# --- 5 ---------------------------------------------------------------------------------

def _oracle_prj(collection, session, encoder, depth=100):
    ids = sorted(collection)
    R = encoder.projection
    P = np.array([R.T @ featurize(collection[p].text, encoder.d_feat).dense() for p in ids])
    P /= np.linalg.norm(P, axis=1, keepdims=True)

    def rr(text, gold):
        q = R.T @ featurize(text, encoder.d_feat).dense()
        ranked = [ids[r] for r in sorted(range(len(ids)), key=lambda r: (-float(P[r] @ q), ids[r]))]
        rank = ranked.index(gold) + 1
        return 1.0 / rank if rank <= depth else 0.0

    out = {}
    for cur in session.turns[1:]:
        raw = rr(cur.query_text, cur.gold_passage_id)
        for h in session.turns[: cur.turn_index - 1]:
            text = f"{cur.query_text} {h.query_text} {collection[h.gold_passage_id].text}"
            out[(cur.turn_index, h.turn_index)] = rr(text, cur.gold_passage_id) > raw
    return out


def test_c05_prj_oracle():
    t0 = time.perf_counter()
    spec = SyntheticSpec(n_topics=3, passages_per_topic=60, entities_per_topic=6,
                         sections_per_topic=10, vocab_per_topic=80, n_sessions=4,
                         turns_per_session=5)
    data = synthesize(spec, 5)
    enc = PassageEncoder(2048, 32, 5)
    ret = Retriever.from_collection(data.collection, enc)
    qrels = derive_qrels(data.sessions)
    metric = MetricSpec("MRR", 100)
    table = judge_all(data.sessions, ret, metric, qrels)
    agree, total, kinds = 0, 0, set()
    for s in data.sessions:
        want = _oracle_prj(data.collection, s, enc)
        got = {(lab.n, lab.i): lab.relevant for n in range(2, 6)
               for lab in table[(s.session_id, n)]}
        total += len(want)
        agree += sum(got.get(k) == v for k, v in want.items()) if got.keys() == want.keys() else 0
        kinds.update(want.values())

    coll = {"p1": Passage("p1", "apple pie recipe"), "p2": Passage("p2", "banana bread"),
            "p3": Passage("p3", "cherry tart apple")}
    tie = Session("t", (Turn(1, "recipe", "p1"), Turn(2, "apple pie", "p1")))
    tret = Retriever.from_collection(coll, PassageEncoder.identity(512))
    lab = judge_turn("t", tie.turn(2), tie.turn(1), tret, metric, derive_qrels([tie]))
    tie_ok = lab.score_raw == lab.score_reform and lab.label == IRRELEVANT
    elapsed = time.perf_counter() - t0
    ok = agree == total and kinds == {True, False} and tie_ok and elapsed < 10
    assert report(5, ok, f"{agree}/{total} labels agree, tie labeled {lab.label}, {elapsed:.1f}s")


# --- 6-9: one sweep over the acceptance seeds ------------------------------------------

@pytest.fixture(scope="module")
def sweep():
    """Per seed: untrained baselines, the four variants, and substitution runs."""
    out = {}
    for seed in SEEDS:
        t0 = time.perf_counter()
        exp = Experiment.synthetic(SyntheticSpec(n_test_sessions=50), seed, D_FEAT, D_EMB)
        tc, mc = TrainConfig(lr=1e-2, epochs=10, seed=seed), MiningConfig(seed=seed)
        raw0 = exp.evaluate(None, "none")
        all0 = exp.evaluate(None, "all")
        prj0 = exp.evaluate(None, "prj")
        res = {"raw0": raw0.mrr, "raw0_hist": raw0.hist_above.percentage,
               "all0_hist": all0.hist_above.percentage, "prj0_hist": prj0.hist_above.percentage}
        params, _ = exp.train(FULL, tc, mc)
        full = exp.evaluate(params, eval_select(FULL))
        res[FULL], res["full_hist"] = full.mrr, full.hist_above.percentage
        res["learn_seconds"] = time.perf_counter() - t0
        for v in (NO_HARD_NEG, NO_PSEUDO_POS, NO_DENOISING):
            params, _ = exp.train(v, tc, mc)
            res[v] = exp.evaluate(params, eval_select(v)).mrr
        for k in (1, 2, 3):
            mode = HistoryMode(k)
            params, _ = exp.train(FULL, tc, mc, mode)
            res[f"sub{k}_prj"] = exp.evaluate(params, "prj", mode).mrr
            params, _ = exp.train(NO_DENOISING, tc, mc, mode)
            res[f"sub{k}_all"] = exp.evaluate(params, "all", mode).mrr
        out[seed] = res
    return out


def _median(sweep, key):
    return statistics.median(r[key] for r in sweep.values())


def test_c06_end_to_end_learning(sweep):
    gain = statistics.median(r[FULL] - r["raw0"] for r in sweep.values())
    seconds = sum(r["learn_seconds"] for r in sweep.values())
    ok = gain >= 0.05 and seconds < 600
    per_seed = ", ".join(f"{r[FULL] - r['raw0']:+.3f}" for r in sweep.values())
    assert report(6, ok, f"median MRR gain {gain:+.4f} over untrained raw "
                         f"(per seed {per_seed}), {seconds:.0f}s")


def test_c07_ablation_direction(sweep):
    med = {v: _median(sweep, v) for v in VARIANTS}
    others = [med[v] for v in (FULL, NO_HARD_NEG, NO_PSEUDO_POS)]
    ok = (med[FULL] >= med[NO_HARD_NEG] and med[FULL] >= med[NO_PSEUDO_POS]
          and med[NO_DENOISING] < min(others))
    detail = ", ".join(f"{v} {med[v]:.4f}" for v in (FULL, NO_HARD_NEG, NO_PSEUDO_POS, NO_DENOISING))
    # informational only: the assertion above uses per-variant medians
    paired = ", ".join(
        f"{v} {statistics.median(r[FULL] - r[v] for r in sweep.values()):+.4f} "
        f"({sum(r[FULL] >= r[v] for r in sweep.values())}/{len(sweep)} seeds)"
        for v in (NO_HARD_NEG, NO_PSEUDO_POS))
    assert report(7, ok, f"median MRR {detail}; paired full minus {paired}")


def test_c08_history_shortcut_reduced(sweep):
    trained, base = _median(sweep, "full_hist"), _median(sweep, "all0_hist")
    ok = trained < base
    assert report(8, ok, f"historical gold above current: trained {trained:.1f}% vs untrained "
                         f"full-history {base:.1f}% (untrained raw {_median(sweep, 'raw0_hist'):.1f}%, "
                         f"untrained same input {_median(sweep, 'prj0_hist'):.1f}%)")


def test_c09_substitution_mode(sweep):
    prj = {k: _median(sweep, f"sub{k}_prj") for k in (1, 2, 3)}
    nop = {k: _median(sweep, f"sub{k}_all") for k in (1, 2, 3)}
    ran = all(math.isfinite(prj[k]) and math.isfinite(nop[k]) for k in (1, 2, 3))
    ok = ran and prj[1] >= nop[1]
    mono = prj[1] <= prj[2] <= prj[3]
    detail = ", ".join(f"k={k} with {prj[k]:.4f} without {nop[k]:.4f}" for k in (1, 2, 3))
    assert report(9, ok, f"median MRR {detail}; k=1..3 monotone: {'yes' if mono else 'no'} "
                         f"(reported only)")


# --- 10 --------------------------------------------------------------------------------

def test_c10_determinism(tmp_path, capsys):
    spec = {"n_topics": 3, "passages_per_topic": 80, "n_sessions": 12, "turns_per_session": 6,
            "entities_per_topic": 8, "sections_per_topic": 10, "n_test_sessions": 6}
    digests = []
    for name in ("a", "b"):
        root = tmp_path / name
        root.mkdir()
        (root / "spec.json").write_text(json.dumps(spec))
        assert main(["synth", "--out", str(root), "--spec", str(root / "spec.json"),
                     "--seed", "3"]) == 0
        cfg = json.loads((root / "config.json").read_text())
        cfg["encoder"].update(d_feat=1024, d_emb=32)
        cfg["trainer"].update(epochs=3, batch_size=16)
        (root / "config.json").write_text(json.dumps(cfg))
        assert main(["all", "--config", str(root / "config.json")]) == 0
        work = root / "work"
        files = sorted([work / "prj_train.tsv", work / "prj_eval.tsv", work / "checkpoint.bin"]
                       + list((work / "runs").glob("*.trec")))
        digests.append({f.relative_to(work).as_posix(): f.read_bytes() for f in files})
    capsys.readouterr()
    same = digests[0] == digests[1] and len(digests[0]) >= 5
    assert report(10, same, f"{len(digests[0])} artifacts compared byte for byte "
                            f"({', '.join(sorted(digests[0]))})")
