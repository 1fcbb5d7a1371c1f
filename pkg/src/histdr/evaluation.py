"""Ranking metrics (trec_eval conventions) and run evaluation reports."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .errors import ConfigError, ValidationError
from .index import DEFAULT_DEPTH, RankedList

_SPEC_RE = re.compile(r"^\s*(mrr|ndcg|recall|r)\s*(?:@\s*(\d+))?\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class MetricSpec:
    kind: str  # "MRR", "NDCG" or "Recall"
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("MRR", "NDCG", "Recall"):
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if self.kind != "MRR" and self.k is None:
            raise ConfigError(f"{self.kind} needs a cutoff")
        if self.k is not None and self.k < 1:
            raise ConfigError("metric cutoff must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        m = _SPEC_RE.match(text)
        if not m:
            raise ConfigError(f"cannot parse metric {text!r}")
        kind = {"mrr": "MRR", "ndcg": "NDCG", "recall": "Recall", "r": "Recall"}[m.group(1).lower()]
        k = int(m.group(2)) if m.group(2) else None
        return cls(kind, k)

    @property
    def name(self) -> str:
        if self.kind == "MRR":
            return "MRR" if self.k is None else f"MRR@{self.k}"
        return f"{self.kind}@{self.k}"

    def __str__(self):
        return self.name

    def score(self, ranked: RankedList, qrels: Mapping[str, Mapping[str, int]]) -> Optional[float]:
        if self.kind == "MRR":
            return reciprocal_rank(ranked, qrels, self.k)
        if self.kind == "NDCG":
            return ndcg_at(ranked, qrels, self.k)
        return recall_at(ranked, qrels, self.k)


DEFAULT_METRICS = tuple(MetricSpec.parse(m) for m in ("MRR", "NDCG@3", "Recall@10", "Recall@100"))


def _judgments(ranked, qrels):
    # None is the skip signal: query unjudged or without any relevant passage
    judged = qrels.get(ranked.query_id)
    if not judged or not any(g >= 1 for g in judged.values()):
        return None
    return judged


def reciprocal_rank(ranked: RankedList, qrels, cutoff: Optional[int] = None) -> Optional[float]:
    judged = _judgments(ranked, qrels)
    if judged is None:
        return None
    hits = ranked.hits if cutoff is None else ranked.hits[:cutoff]
    for r, (pid, _) in enumerate(hits, 1):
        if judged.get(pid, 0) >= 1:
            return 1.0 / r
    return 0.0


def ndcg_at(ranked: RankedList, qrels, k: int) -> Optional[float]:
    if k < 1:
        raise ConfigError("k must be >= 1")
    judged = _judgments(ranked, qrels)
    if judged is None:
        return None
    dcg = sum(judged.get(pid, 0) / math.log2(i + 1)
              for i, (pid, _) in enumerate(ranked.hits[:k], 1))
    ideal = sorted(judged.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, 1))
    return dcg / idcg


def recall_at(ranked: RankedList, qrels, k: int) -> Optional[float]:
    if k < 1:
        raise ConfigError("k must be >= 1")
    judged = _judgments(ranked, qrels)
    if judged is None:
        return None
    relevant = {pid for pid, g in judged.items() if g >= 1}
    found = sum(1 for pid, _ in ranked.hits[:k] if pid in relevant)
    return found / len(relevant)


@dataclass
class Report:
    metrics: List[MetricSpec]
    per_query: Dict[str, Dict[str, float]]
    means: Dict[str, float]
    unjudged: List[str] = field(default_factory=list)

    @property
    def n_queries(self) -> int:
        return len(self.per_query)

    def format_table(self) -> str:
        names = [m.name for m in self.metrics]
        lines = ["  ".join(f"{n:>10}" for n in ["queries"] + names)]
        lines.append("  ".join([f"{self.n_queries:>10d}"] + [f"{self.means[n]:>10.4f}" for n in names]))
        if self.unjudged:
            lines.append(f"excluded (no judgments): {' '.join(self.unjudged)}")
        return "\n".join(lines)

    def write_per_query(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for qid in sorted(self.per_query):
                for m in self.metrics:
                    fh.write(f"{qid}\t{m.name}\t{self.per_query[qid][m.name]:.6f}\n")


def evaluate(run: Iterable[RankedList], qrels, metrics: Sequence[MetricSpec] = DEFAULT_METRICS,
             depth: int = DEFAULT_DEPTH) -> Report:
    """Macro-average each metric over queries present in both run and qrels.

    An MRR spec without a cutoff is evaluated at ``depth``.
    """
    metrics = list(metrics)
    specs = [MetricSpec("MRR", depth) if m.kind == "MRR" and m.k is None else m for m in metrics]
    per_query: Dict[str, Dict[str, float]] = {}
    unjudged = []
    for rl in run:
        values = {}
        for shown, spec in zip(metrics, specs):
            v = spec.score(rl, qrels)
            if v is None:
                break
            values[shown.name] = v
        else:
            per_query[rl.query_id] = values
            continue
        unjudged.append(rl.query_id)
    if not per_query:
        raise ValidationError("run and qrels share no judged queries")
    means = {}
    for m in metrics:
        total = 0.0
        for qid in sorted(per_query):
            total += per_query[qid][m.name]
        means[m.name] = total / len(per_query)
    return Report(metrics, per_query, means, sorted(unjudged))


def side_by_side(reports: Mapping[str, Report]) -> str:
    """Text table with one row per run label."""
    labels = list(reports)
    names = [m.name for m in next(iter(reports.values())).metrics]
    width = max([10] + [len(l) for l in labels])
    lines = [f"{'run':<{width}}  {'queries':>8}  " + "  ".join(f"{n:>10}" for n in names)]
    for label in labels:
        r = reports[label]
        lines.append(f"{label:<{width}}  {r.n_queries:>8d}  "
                     + "  ".join(f"{r.means[n]:>10.4f}" for n in names))
    return "\n".join(lines)
