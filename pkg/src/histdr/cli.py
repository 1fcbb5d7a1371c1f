"""Command line entry point: ``histdr <subcommand> [options]``.

Stages read and write artifacts in a work directory and record their hashes
in ``manifest.json``. Typical order::

    ingest -> embed -> index -> prj -> reformulate -> mine -> train -> search -> eval

``histdr all`` runs them in that order. ``analyze`` writes CSV tables with
PNG figures next to them.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .corpus import derive_qrels, load_collection, load_sessions, read_qrels, write_collection, \
    write_qrels, write_sessions
from .encode import PassageEncoder, QueryEncoderParams, encode_passage, encode_query, featurize, \
    read_embeddings, write_embeddings, write_embeddings_text
from .errors import ConfigError, HistdrError, MissingArtifactError, ValidationError
from .evaluation import evaluate, side_by_side
from .experiments import FULL, NO_DENOISING, NO_HARD_NEG, NO_PSEUDO_POS, Experiment, ablation
from .index import DenseIndex, load_index, read_run, save_index, search_many, write_run
from .prj import historical_gold_above_current, judge_all, read_prj_table, \
    relevant_portion_by_turn, write_prj_table
from .retrieval import Retriever
from .supervision import (ReformulatedQuery, build_instances, read_instances, read_reformulated,
                          reformulate, write_instances, write_reformulated)
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import load_checkpoint, save_checkpoint, train
from .workdir import WorkDir

log = logging.getLogger("histdr")

COLLECTION = "collection.jsonl"
SESSIONS = "sessions.jsonl"
EVAL_SESSIONS = "eval_sessions.jsonl"
QRELS = "qrels.txt"
EMBEDDINGS = "passages.emb"
INDEX = "index.emb"
PRJ_TRAIN = "prj_train.tsv"
PRJ_EVAL = "prj_eval.tsv"
REFORM_TRAIN = "reformulated_train.jsonl"
REFORM_EVAL = "reformulated_eval.jsonl"
INSTANCES = "instances.jsonl"
CHECKPOINT = "checkpoint.bin"
TRAIN_LOG = "train_log.csv"

# config sections each stage depends on, upstream ones included
STAGE_SECTIONS = {
    "ingest": ("paths",),
    "embed": ("paths", "encoder"),
    "index": ("paths", "encoder"),
    "prj": ("paths", "encoder", "prj"),
    "reformulate": ("paths", "encoder", "prj", "supervision"),
    "mine": ("paths", "encoder", "prj", "supervision"),
    "train": ("paths", "encoder", "prj", "supervision", "trainer"),
}

ABLATION_LABELS = {FULL: "full", NO_HARD_NEG: "-hard neg.", NO_PSEUDO_POS: "-pse. pos.",
                   NO_DENOISING: "-QR w/ PRJ"}


class Context:
    def __init__(self, cfg: PipelineConfig, wd: WorkDir, jobs: int):
        self.cfg = cfg
        self.wd = wd
        self.jobs = jobs

    def stage_hash(self, stage: str) -> str:
        return self.cfg.section_hash(*STAGE_SECTIONS[stage])

    def expected(self) -> Dict[str, str]:
        return {s: self.stage_hash(s) for s in STAGE_SECTIONS}

    def require(self, *names: str) -> Dict[str, Path]:
        return self.wd.require(names, self.expected())

    def encoder(self) -> PassageEncoder:
        e = self.cfg.encoder
        return PassageEncoder(e.d_feat, e.d_emb, e.projection_seed)

    def collection(self):
        return load_collection(self.require(COLLECTION)[COLLECTION])

    def sessions(self, name: str, collection):
        return load_sessions(self.require(name)[name], collection)

    def retriever(self, collection, params: Optional[QueryEncoderParams] = None) -> Retriever:
        index = load_index(self.require(INDEX)[INDEX])
        enc = self.encoder()
        if index.d_emb != enc.d_emb:
            raise ConfigError(f"index has d_emb={index.d_emb}, config says {enc.d_emb}")
        return Retriever(collection, enc, index, params)

    def run_stage(self, stage: str, inputs: Dict[str, Path], outputs: Sequence[str], body) -> None:
        h = self.stage_hash(stage) if stage in STAGE_SECTIONS else \
            self.cfg.section_hash(*self.cfg.SECTIONS)
        if self.wd.up_to_date(stage, h, inputs):
            print(f"{stage}: up to date")
            return
        body()
        self.wd.record(stage, h, inputs, outputs)
        for name in outputs:
            print(f"{stage}: wrote {self.wd.path(name)}")


# --- stages --------------------------------------------------------------------


def cmd_ingest(ctx: Context, args) -> None:
    cfg = ctx.cfg
    src = {"collection": cfg.resolve(cfg.paths.collection),
           "sessions": cfg.resolve(cfg.paths.sessions)}
    if cfg.paths.eval_sessions:
        src["eval_sessions"] = cfg.resolve(cfg.paths.eval_sessions)
    for name, p in src.items():
        if not p.exists():
            raise MissingArtifactError(f"{name} file not found: {p}")

    def body():
        coll = load_collection(src["collection"])
        train_s = load_sessions(src["sessions"], coll)
        eval_s = load_sessions(src["eval_sessions"], coll) if "eval_sessions" in src else train_s
        clash = {s.session_id for s in train_s} & {s.session_id for s in eval_s}
        if "eval_sessions" in src and clash:
            raise ValidationError(f"session ids shared by train and eval: {sorted(clash)[:5]}")
        write_collection(coll, ctx.wd.path(COLLECTION))
        write_sessions(train_s, ctx.wd.path(SESSIONS))
        write_sessions(eval_s, ctx.wd.path(EVAL_SESSIONS))
        sessions = list(train_s) + ([] if eval_s is train_s else list(eval_s))
        write_qrels(derive_qrels(sessions), ctx.wd.path(QRELS))
        print(f"ingest: {len(coll)} passages, {len(train_s)} training sessions, "
              f"{len(eval_s)} evaluation sessions")

    ctx.run_stage("ingest", src, [COLLECTION, SESSIONS, EVAL_SESSIONS, QRELS], body)


def cmd_embed(ctx: Context, args) -> None:
    inputs = ctx.require(COLLECTION)

    def body():
        coll = load_collection(inputs[COLLECTION])
        enc = ctx.encoder()
        ids = sorted(coll)
        matrix = np.vstack([encode_passage(enc, coll[p].text) for p in ids]) if ids \
            else np.zeros((0, enc.d_emb))
        write_embeddings(ctx.wd.path(EMBEDDINGS), ids, matrix)

    ctx.run_stage("embed", inputs, [EMBEDDINGS], body)


def cmd_index(ctx: Context, args) -> None:
    inputs = ctx.require(EMBEDDINGS)

    def body():
        ids, matrix = read_embeddings(inputs[EMBEDDINGS])
        order = sorted(range(len(ids)), key=ids.__getitem__)
        index = DenseIndex([ids[i] for i in order], matrix[order])
        if len(index) == 0:
            raise ValidationError("cannot index an empty collection")
        save_index(index, ctx.wd.path(INDEX))

    ctx.run_stage("index", inputs, [INDEX], body)


def cmd_prj(ctx: Context, args) -> None:
    inputs = ctx.require(COLLECTION, SESSIONS, EVAL_SESSIONS, QRELS, INDEX)

    def body():
        coll = load_collection(inputs[COLLECTION])
        ret = ctx.retriever(coll)
        qrels = read_qrels(inputs[QRELS])
        cfg = ctx.cfg
        for src, dst in ((SESSIONS, PRJ_TRAIN), (EVAL_SESSIONS, PRJ_EVAL)):
            sessions = load_sessions(inputs[src], coll)
            table = judge_all(sessions, ret, cfg.prj_metric, qrels, cfg.prj.depth,
                              cfg.history_mode, cfg.prj.order, ctx.jobs)
            write_prj_table(table, ctx.wd.path(dst))

    ctx.run_stage("prj", inputs, [PRJ_TRAIN, PRJ_EVAL], body)


def _reformulate_all(sessions, table, ret, cfg) -> List[ReformulatedQuery]:
    s = cfg.supervision
    return [reformulate(sess, t.turn_index, table, ret, cfg.history_mode, s.max_tokens, s.select)
            for sess in sessions for t in sess.turns]


def cmd_reformulate(ctx: Context, args) -> None:
    inputs = ctx.require(COLLECTION, SESSIONS, EVAL_SESSIONS, INDEX, PRJ_TRAIN, PRJ_EVAL)

    def body():
        coll = load_collection(inputs[COLLECTION])
        ret = ctx.retriever(coll)
        for src, tab, dst in ((SESSIONS, PRJ_TRAIN, REFORM_TRAIN),
                              (EVAL_SESSIONS, PRJ_EVAL, REFORM_EVAL)):
            sessions = load_sessions(inputs[src], coll)
            table = read_prj_table(inputs[tab])
            write_reformulated(_reformulate_all(sessions, table, ret, ctx.cfg), ctx.wd.path(dst))

    ctx.run_stage("reformulate", inputs, [REFORM_TRAIN, REFORM_EVAL], body)


def cmd_mine(ctx: Context, args) -> None:
    inputs = ctx.require(COLLECTION, SESSIONS, QRELS, INDEX, PRJ_TRAIN)

    def body():
        coll = load_collection(inputs[COLLECTION])
        ret = ctx.retriever(coll)
        sessions = load_sessions(inputs[SESSIONS], coll)
        table = read_prj_table(inputs[PRJ_TRAIN])
        instances = build_instances(sessions, table, ret, read_qrels(inputs[QRELS]),
                                    ctx.cfg.history_mode, ctx.cfg.mining())
        if not instances:
            raise ValidationError("no training instances could be mined")
        write_instances(instances, ctx.wd.path(INSTANCES))

    ctx.run_stage("mine", inputs, [INSTANCES], body)


def cmd_train(ctx: Context, args) -> None:
    inputs = ctx.require(INSTANCES, INDEX)

    def body():
        from .plots import plot_train_loss
        instances = read_instances(inputs[INSTANCES])
        index = load_index(inputs[INDEX])
        tc = ctx.cfg.train_config()
        params, tlog = train(instances, index, ctx.encoder(), tc)
        save_checkpoint(ctx.wd.path(CHECKPOINT), params, tc.seed, len(tlog.steps))
        tlog.write_csv(ctx.wd.path(TRAIN_LOG))
        if tlog.steps:
            png = plot_train_loss([s.step for s in tlog.steps], [s.loss for s in tlog.steps],
                                  ctx.wd.path("train_loss.png"))
            print(f"train: wrote {png}")
        for e in tlog.epochs:
            print(f"train: epoch {e['epoch']} mean loss {e['mean_loss']:.6f}")

    ctx.run_stage("train", inputs, [CHECKPOINT, TRAIN_LOG], body)


def _load_params(ctx: Context, untrained: bool, checkpoint: Optional[str]):
    if untrained:
        return None
    path = Path(checkpoint) if checkpoint else ctx.require(CHECKPOINT)[CHECKPOINT]
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    params, meta = load_checkpoint(path)
    enc = ctx.encoder()
    if (meta["d_feat"], meta["d_emb"]) != (enc.d_feat, enc.d_emb):
        raise ConfigError("checkpoint dimensions do not match the encoder config")
    return params


def _eval_queries(ctx: Context, kind: str, coll) -> List[ReformulatedQuery]:
    if kind == "reformulated":
        return read_reformulated(ctx.require(REFORM_EVAL)[REFORM_EVAL])
    sessions = ctx.sessions(EVAL_SESSIONS, coll)
    if kind == "raw":
        return [ReformulatedQuery(f"{s.session_id}_{t.turn_index}", t.query_text, ())
                for s in sessions for t in s.turns]
    ret = ctx.retriever(coll)
    max_tokens = ctx.cfg.supervision.max_tokens
    return [reformulate(s, t.turn_index, None, ret, ctx.cfg.history_mode, max_tokens, "all")
            for s in sessions for t in s.turns]


def cmd_search(ctx: Context, args) -> None:
    name = args.name or ("untrained" if args.untrained else "trained")
    out = f"runs/{name}.trec"
    inputs = ctx.require(COLLECTION, INDEX, EVAL_SESSIONS)
    if not args.untrained:
        inputs[CHECKPOINT] = Path(args.checkpoint) if args.checkpoint else \
            ctx.require(CHECKPOINT)[CHECKPOINT]
    if args.input == "reformulated":
        inputs.update(ctx.require(REFORM_EVAL))

    def body():
        coll = load_collection(inputs[COLLECTION])
        params = _load_params(ctx, args.untrained, args.checkpoint)
        ret = ctx.retriever(coll, params)
        queries = _eval_queries(ctx, args.input, coll)
        lists = search_many(ret.index, [(q.query_id, ret.encode(q.text)) for q in queries],
                            ctx.cfg.eval.depth, ctx.jobs)
        ctx.wd.path("runs").mkdir(exist_ok=True)
        write_run(lists, args.tag, ctx.wd.path(out))

    ctx.run_stage(f"search:{name}", inputs, [out], body)


def _run_paths(ctx: Context, names: Optional[Sequence[str]]) -> Dict[str, Path]:
    runs = ctx.wd.path("runs")
    if names:
        paths = {Path(n).stem: (Path(n) if Path(n).suffix else runs / f"{n}.trec") for n in names}
    else:
        paths = {p.stem: p for p in sorted(runs.glob("*.trec"))} if runs.exists() else {}
    if not paths:
        raise MissingArtifactError("no run files; run `histdr search` first")
    for label, p in paths.items():
        if not p.exists():
            raise MissingArtifactError(f"run file not found: {p}")
    return paths


def cmd_eval(ctx: Context, args) -> None:
    qrels = read_qrels(ctx.require(QRELS)[QRELS])
    paths = _run_paths(ctx, args.runs)
    out_dir = ctx.wd.path("eval")
    out_dir.mkdir(exist_ok=True)
    reports = {}
    for label, p in paths.items():
        rep = evaluate(read_run(p), qrels, ctx.cfg.eval_metrics, ctx.cfg.eval.depth)
        rep.write_per_query(out_dir / f"{label}.per_query.tsv")
        reports[label] = rep
    names = [m.name for m in ctx.cfg.eval_metrics]
    with (out_dir / "report.tsv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["run", "queries"] + names)
        for label, rep in reports.items():
            w.writerow([label, rep.n_queries] + [f"{rep.means[n]:.6f}" for n in names])
    print(side_by_side(reports))
    print(f"eval: wrote {out_dir / 'report.tsv'}")


# --- analysis --------------------------------------------------------------------


def _analyze_prj_portion(ctx: Context, out: Path) -> None:
    from .plots import plot_prj_portion
    tables = {"train": PRJ_TRAIN, "eval": PRJ_EVAL}
    paths = ctx.require(*tables.values())
    curves = {}
    for split, name in tables.items():
        table = read_prj_table(paths[name])
        if not table or not any(table.values()):
            continue
        curves[split] = relevant_portion_by_turn(table)
        with (out / f"prj_portion_{split}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "portion"])
            for n, p in curves[split]:
                w.writerow([n, f"{p:.6f}"])
        print(f"analyze: wrote {out / f'prj_portion_{split}.csv'}")
    if not curves:
        raise ValidationError("PRJ tables are empty")
    print(f"analyze: wrote {plot_prj_portion(curves, out / 'prj_portion.png')}")


def _analyze_hist_above(ctx: Context, out: Path, run_names) -> None:
    from .plots import plot_hist_above
    coll = ctx.collection()
    sessions = ctx.sessions(EVAL_SESSIONS, coll)
    qrels = read_qrels(ctx.require(QRELS)[QRELS])
    results = {label: historical_gold_above_current(read_run(p), sessions, qrels)
               for label, p in _run_paths(ctx, run_names).items()}
    labels = list(results)
    qids = sorted(set().union(*(r.flags for r in results.values())))
    with (out / "hist_above_flags.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id"] + labels)
        for q in qids:
            w.writerow([q] + [("" if q not in results[l].flags else int(results[l].flags[q]))
                              for l in labels])
    with (out / "hist_above_current.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "queries", "percentage"])
        for l in labels:
            w.writerow([l, len(results[l].flags), f"{results[l].percentage:.4f}"])
    for l in labels:
        print(f"{l}\t{results[l].percentage:.2f}%")
    png = plot_hist_above({l: results[l].percentage for l in labels},
                          out / "hist_above_current.png")
    print(f"analyze: wrote {out / 'hist_above_current.csv'}, {png}")


def _analyze_ablation(ctx: Context, out: Path, seeds: Sequence[int]) -> None:
    from .plots import plot_ablation
    cfg = ctx.cfg
    coll = ctx.collection()
    train_s = ctx.sessions(SESSIONS, coll)
    eval_s = ctx.sessions(EVAL_SESSIONS, coll)
    qrels = read_qrels(ctx.require(QRELS)[QRELS])

    def make(seed):
        e = cfg.encoder
        return Experiment(coll, train_s, eval_s, PassageEncoder(e.d_feat, e.d_emb, seed),
                          cfg.prj_metric, cfg.prj.depth, cfg.prj.order,
                          cfg.supervision.max_tokens, ctx.jobs, qrels)

    res = ablation(make, seeds, cfg.train_config(), cfg.mining(), metrics=cfg.eval_metrics)
    names = [m.name for m in cfg.eval_metrics]
    medians = res.medians()
    with (out / "ablation_table.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant"] + names + ["hist_above_pct"])
        for v, row in medians.items():
            w.writerow([ABLATION_LABELS[v]] + [f"{row[n]:.6f}" for n in names + ["hist_above_pct"]])
    with (out / "ablation_runs.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed"] + names + ["hist_above_pct"])
        for v, per in res.values.items():
            for j, seed in enumerate(res.seeds):
                w.writerow([ABLATION_LABELS[v], seed]
                           + [f"{per[n][j]:.6f}" for n in names + ["hist_above_pct"]])
    width = max(len(x) for x in ABLATION_LABELS.values())
    print(f"{'variant':<{width}}  " + "  ".join(f"{n:>10}" for n in names))
    for v, row in medians.items():
        print(f"{ABLATION_LABELS[v]:<{width}}  " + "  ".join(f"{row[n]:>10.4f}" for n in names))
    png = plot_ablation({ABLATION_LABELS[v]: row for v, row in medians.items()}, names,
                        out / "ablation_table.png")
    print(f"analyze: wrote {out / 'ablation_table.csv'}, {png}")


def cmd_analyze(ctx: Context, args) -> None:
    out = ctx.wd.path("analysis")
    out.mkdir(exist_ok=True)
    if args.kind == "prj_portion":
        _analyze_prj_portion(ctx, out)
    elif args.kind == "hist_above_current":
        _analyze_hist_above(ctx, out, args.runs)
    else:
        _analyze_ablation(ctx, out, args.seeds)


def cmd_export_embeddings(ctx: Context, args) -> None:
    coll = ctx.collection()
    index = load_index(ctx.require(INDEX)[INDEX])
    params = _load_params(ctx, args.untrained, args.checkpoint) or \
        QueryEncoderParams.from_encoder(ctx.encoder())
    queries = {q.query_id: q for q in _eval_queries(ctx, args.input, coll)}
    pids = list(index.ids) if args.all else list(args.passages or [])
    qids = list(queries) if args.all else list(args.queries or [])
    unresolved = [p for p in pids if p not in index] + [q for q in qids if q not in queries]
    if unresolved:
        raise ValidationError(f"unknown ids: {' '.join(unresolved)}")
    if not pids and not qids:
        raise ConfigError("nothing to export; pass --queries/--passages or --all")
    rows = [(q, encode_query(params, featurize(queries[q].text, params.d_feat))) for q in qids]
    rows += [(p, index.embedding(p)) for p in pids]
    out = Path(args.out) if args.out else ctx.wd.path("analysis") / "embeddings.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_embeddings_text(out, rows)
    print(f"export-embeddings: wrote {len(rows)} vectors to {out}")


def cmd_all(ctx: Context, args) -> None:
    for fn in (cmd_ingest, cmd_embed, cmd_index, cmd_prj, cmd_reformulate, cmd_mine, cmd_train):
        fn(ctx, args)
    for untrained in (True, False):
        cmd_search(ctx, argparse.Namespace(name=None, untrained=untrained, checkpoint=None,
                                           input="reformulated", tag=args.tag))
    cmd_eval(ctx, argparse.Namespace(runs=None))


# --- standalone commands -----------------------------------------------------------


# the synthetic corpora are tiny next to a real training set; a larger step
# than the 3e-5 default is needed for ten epochs to move W at all
SYNTHETIC_TRAINER = {"lr": 1e-2}


def _write_config(out: Path, **paths) -> Path:
    cfg = PipelineConfig.from_dict({"paths": paths, "trainer": SYNTHETIC_TRAINER}, out)
    path = out / "config.json"
    cfg.dump(path)
    return path


def cmd_synth(args) -> int:
    raw = {}
    if args.spec:
        import json
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = SyntheticSpec.from_dict(raw)
    if spec.n_test_sessions == 0 and args.eval_sessions:
        spec = SyntheticSpec.from_dict({**raw, "n_test_sessions": args.eval_sessions})
    out = Path(args.out)
    paths = generate_synthetic(spec, args.seed, out)
    extra = {"eval_sessions": paths["test_sessions"].name} if "test_sessions" in paths else {}
    cfg = _write_config(out, collection=paths["collection"].name,
                        sessions=paths["sessions"].name, **extra)
    for p in list(paths.values()) + [cfg]:
        print(f"synth: wrote {p}")
    return 0


def cmd_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = resources.files("histdr") / "data" / "demo"
    for name in ("collection.jsonl", "sessions.jsonl", "eval_sessions.jsonl", "config.json"):
        with resources.as_file(src / name) as p:
            shutil.copyfile(p, out / name)
        print(f"demo: wrote {out / name}")
    return 0


# --- argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.json", help="pipeline config (JSON)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--force", action="store_true",
                        help="accept stale upstream artifacts and re-run up-to-date stages")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="histdr", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"ingest": "validate and copy inputs, derive qrels",
             "embed": "encode passages with the frozen encoder",
             "index": "build the exact-search index",
             "prj": "judge every historical turn",
             "reformulate": "write denoised reformulated queries",
             "mine": "assemble training instances",
             "train": "train the query encoder",
             "all": "run every stage, search with untrained and trained weights, evaluate"}
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "all":
            sp.add_argument("--tag", default="histdr")

    sp = sub.add_parser("search", parents=[common], help="rank evaluation queries into a run file")
    sp.add_argument("--untrained", action="store_true", help="use W = R")
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", choices=("reformulated", "raw", "all"), default="reformulated",
                    help="query text: denoised reformulation, raw query, or full history")
    sp.add_argument("--name", help="run name (default: trained/untrained)")
    sp.add_argument("--tag", default="histdr")

    sp = sub.add_parser("eval", parents=[common], help="score run files against qrels")
    sp.add_argument("runs", nargs="*", help="run names under runs/ or paths (default: all)")

    sp = sub.add_parser("analyze", parents=[common], help="analysis tables and figures")
    sp.add_argument("kind", choices=("prj_portion", "hist_above_current", "ablation_table"))
    sp.add_argument("--runs", nargs="*", help="runs for hist_above_current (default: all)")
    sp.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])

    sp = sub.add_parser("export-embeddings", parents=[common],
                        help="write query and passage vectors as text")
    sp.add_argument("--queries", nargs="*")
    sp.add_argument("--passages", nargs="*")
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--untrained", action="store_true")
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", choices=("reformulated", "raw", "all"), default="reformulated")
    sp.add_argument("--out")

    sp = sub.add_parser("synth", help="generate a synthetic topic-shift dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--spec", help="JSON file with generator settings")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eval-sessions", type=int, default=50,
                    help="held-out sessions when the spec file does not set them")
    sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("demo", help="copy the bundled demo dataset and config")
    sp.add_argument("--out", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


COMMANDS = {"ingest": cmd_ingest, "embed": cmd_embed, "index": cmd_index, "prj": cmd_prj,
            "reformulate": cmd_reformulate, "mine": cmd_mine, "train": cmd_train,
            "search": cmd_search, "eval": cmd_eval, "analyze": cmd_analyze,
            "export-embeddings": cmd_export_embeddings, "all": cmd_all}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "demo":
            return cmd_demo(args)
        cfg = PipelineConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        with WorkDir(cfg.work_dir, force=args.force) as wd:
            COMMANDS[args.command](Context(cfg, wd, args.jobs), args)
        return 0
    except HistdrError as exc:
        print(f"histdr: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
