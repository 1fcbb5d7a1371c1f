"""Train/evaluate loops shared by the ablation report and the acceptance checks.

An :class:`Experiment` fixes a collection, training sessions, evaluation
sessions and a frozen encoder, and caches the pseudo relevance tables per
history mode so several training variants can reuse them.
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .corpus import Passage, Qrels, Session, derive_qrels
from .encode import PassageEncoder, QueryEncoderParams
from .evaluation import DEFAULT_METRICS, MetricSpec, Report, evaluate
from .index import DEFAULT_DEPTH, RankedList
from .prj import (GOLD, ORDER_QUERY_FIRST, HistAboveCurrent, HistoryMode, PrjTable,
                  historical_gold_above_current, judge_all)
from .retrieval import Retriever
from .supervision import (DEFAULT_MAX_TOKENS, SELECT_ALL, SELECT_NONE, SELECT_PRJ, MiningConfig,
                          ReformulatedQuery, build_instances, reformulate)
from .synthetic import SyntheticSpec, synthesize
from .trainer import TrainConfig, TrainLog, train

log = logging.getLogger(__name__)

FULL = "full"
NO_HARD_NEG = "no_hard_neg"
NO_PSEUDO_POS = "no_pseudo_pos"
NO_DENOISING = "no_denoising"

# mining overrides per training variant; NO_DENOISING reformulates with the
# whole history and has no labels to mine historical passages from
VARIANTS: Dict[str, dict] = {
    FULL: {},
    NO_HARD_NEG: {"n_hist_neg": 0},
    NO_PSEUDO_POS: {"n_pseudo_pos": 0},
    NO_DENOISING: {"select": SELECT_ALL, "n_hist_neg": 0, "n_pseudo_pos": 0},
}


def variant_mining(name: str, base: MiningConfig) -> MiningConfig:
    if name not in VARIANTS:
        raise KeyError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return replace(base, **VARIANTS[name])


@dataclass
class Evaluation:
    report: Report
    hist_above: HistAboveCurrent
    run: List[RankedList]

    @property
    def mrr(self) -> float:
        return self.report.means["MRR"]


@dataclass
class Experiment:
    collection: Mapping[str, Passage]
    train_sessions: Sequence[Session]
    eval_sessions: Sequence[Session]
    encoder: PassageEncoder
    metric: MetricSpec = MetricSpec("MRR", DEFAULT_DEPTH)
    depth: int = DEFAULT_DEPTH
    order: str = ORDER_QUERY_FIRST
    max_tokens: int = DEFAULT_MAX_TOKENS
    jobs: int = 1
    qrels: Qrels = field(default=None)
    retriever: Retriever = field(default=None)
    _tables: Dict[Tuple[str, HistoryMode], PrjTable] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.qrels is None:
            self.qrels = derive_qrels(list(self.train_sessions) + list(self.eval_sessions))
        if self.retriever is None:
            self.retriever = Retriever.from_collection(self.collection, self.encoder)

    @classmethod
    def synthetic(cls, spec: SyntheticSpec, seed: int, d_feat: int, d_emb: int,
                  **kw) -> "Experiment":
        """Synthetic data and projection both seeded by ``seed``."""
        data = synthesize(spec, seed)
        if not data.test_sessions:
            raise ValueError("synthetic experiments need n_test_sessions > 0")
        return cls(data.collection, data.sessions, data.test_sessions,
                   PassageEncoder(d_feat, d_emb, seed), **kw)

    def table(self, split: str, mode: HistoryMode = GOLD) -> PrjTable:
        key = (split, mode)
        if key not in self._tables:
            sessions = self.train_sessions if split == "train" else self.eval_sessions
            self._tables[key] = judge_all(sessions, self.retriever, self.metric, self.qrels,
                                          self.depth, mode, self.order, self.jobs)
        return self._tables[key]

    def eval_queries(self, select: str, mode: HistoryMode = GOLD) -> List[ReformulatedQuery]:
        table = self.table("eval", mode) if select == SELECT_PRJ else None
        return [reformulate(s, t.turn_index, table, self.retriever, mode, self.max_tokens, select)
                for s in self.eval_sessions for t in s.turns]

    def evaluate(self, params: Optional[QueryEncoderParams], select: str,
                 mode: HistoryMode = GOLD,
                 metrics: Sequence[MetricSpec] = DEFAULT_METRICS) -> Evaluation:
        """Rank evaluation queries built with ``select`` using ``params`` (W = R when None)."""
        r = self.retriever if params is None else self.retriever.with_params(params)
        run = [search_one(r, q, self.depth) for q in self.eval_queries(select, mode)]
        report = evaluate(run, self.qrels, metrics, self.depth)
        return Evaluation(report, historical_gold_above_current(run, self.eval_sessions, self.qrels),
                          run)

    def train(self, variant: str, train_config: TrainConfig,
              mining: MiningConfig = MiningConfig(), mode: HistoryMode = GOLD,
              on_epoch: Optional[Callable] = None) -> Tuple[QueryEncoderParams, TrainLog]:
        mc = variant_mining(variant, mining)
        table = self.table("train", mode) if mc.select == SELECT_PRJ else None
        instances = build_instances(self.train_sessions, table, self.retriever, self.qrels,
                                    mode, mc)
        log.info("variant %s: %d training instances", variant, len(instances))
        return train(instances, self.retriever.index, self.encoder, train_config,
                     on_epoch=on_epoch)


def search_one(retriever: Retriever, query: ReformulatedQuery, depth: int) -> RankedList:
    return retriever.retrieve(query.text, depth, query.query_id)


def eval_select(variant: str) -> str:
    return variant_mining(variant, MiningConfig()).select


@dataclass
class AblationResult:
    seeds: List[int]
    # variant -> metric name -> per-seed values
    values: Dict[str, Dict[str, List[float]]]

    def median(self, variant: str, metric: str) -> float:
        return statistics.median(self.values[variant][metric])

    def medians(self) -> Dict[str, Dict[str, float]]:
        return {v: {m: statistics.median(xs) for m, xs in per.items()}
                for v, per in self.values.items()}


def ablation(make_experiment: Callable[[int], Experiment], seeds: Sequence[int],
             train_config: TrainConfig, mining: MiningConfig = MiningConfig(),
             variants: Sequence[str] = (FULL, NO_HARD_NEG, NO_PSEUDO_POS, NO_DENOISING),
             metrics: Sequence[MetricSpec] = DEFAULT_METRICS) -> AblationResult:
    """Train every variant on every seed; the seed drives data, projection,
    mining and shuffling. Each variant is evaluated on the queries it was
    trained to expect."""
    values: Dict[str, Dict[str, List[float]]] = {v: {} for v in variants}
    for seed in seeds:
        exp = make_experiment(seed)
        for v in variants:
            params, _ = exp.train(v, replace(train_config, seed=seed), replace(mining, seed=seed))
            ev = exp.evaluate(params, eval_select(v), metrics=metrics)
            for m in ev.report.metrics:
                values[v].setdefault(m.name, []).append(ev.report.means[m.name])
            values[v].setdefault("hist_above_pct", []).append(ev.hist_above.percentage)
            log.info("seed %d %s MRR %.4f", seed, v, ev.mrr)
    return AblationResult(list(seeds), values)


__all__ = ["Experiment", "Evaluation", "AblationResult", "ablation", "VARIANTS", "FULL",
           "NO_HARD_NEG", "NO_PSEUDO_POS", "NO_DENOISING", "SELECT_NONE", "SELECT_ALL",
           "SELECT_PRJ", "eval_select", "variant_mining"]
