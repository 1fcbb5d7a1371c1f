"""Pseudo relevance judgments of historical turns and the analyses built on them.

A historical turn ``i`` is judged relevant to the current turn ``n`` when
appending it to the current query strictly improves a ranking metric of the
current turn's gold passage.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .corpus import Qrels, Session, Turn, query_id
from .errors import ConfigError, ParseError, ValidationError
from .evaluation import MetricSpec
from .index import DEFAULT_DEPTH, RankedList
from .retrieval import Retriever

log = logging.getLogger(__name__)

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"

# concatenation orders for the expanded query used while judging
ORDER_QUERY_FIRST = "query_first"      # q_n q_i p_i
ORDER_PASSAGE_FIRST = "passage_first"  # q_n p_i q_i
ORDERS = (ORDER_QUERY_FIRST, ORDER_PASSAGE_FIRST)


@dataclass(frozen=True)
class HistoryMode:
    """Where a historical turn's passage comes from: its gold id, or the
    concatenated top-``k`` passages retrieved for its query."""

    k: Optional[int] = None

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ConfigError("substitution depth k must be >= 1")

    @property
    def substituted(self) -> bool:
        return self.k is not None

    def __str__(self):
        return "gold" if self.k is None else f"substituted({self.k})"

    @classmethod
    def parse(cls, text: str) -> "HistoryMode":
        text = text.strip()
        if text == "gold":
            return cls()
        if text.startswith("substituted(") and text.endswith(")"):
            return cls(int(text[len("substituted("):-1]))
        raise ConfigError(f"unknown history mode {text!r}")


GOLD = HistoryMode()


def pseudo_gold(turn: Turn, retriever: Retriever, k: int) -> str:
    """Texts of the top-``k`` passages for the turn's raw query, in rank order."""
    return " ".join(retriever.text(pid) for pid in pseudo_gold_ids(turn, retriever, k))


def pseudo_gold_ids(turn: Turn, retriever: Retriever, k: int) -> List[str]:
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(retriever.index) == 0:
        raise ValidationError("empty collection")
    return retriever.retrieve(turn.query_text, k).ids


def history_passage_text(turn: Turn, retriever: Retriever, mode: HistoryMode) -> Optional[str]:
    if mode.substituted:
        return pseudo_gold(turn, retriever, mode.k)
    if turn.gold_passage_id is None:
        return None
    return retriever.text(turn.gold_passage_id)


def history_passage_id(turn: Turn, retriever: Retriever, mode: HistoryMode) -> Optional[str]:
    """Passage id standing in for a historical turn's gold (top-1 when substituted)."""
    if mode.substituted:
        return pseudo_gold_ids(turn, retriever, 1)[0]
    return turn.gold_passage_id


@dataclass(frozen=True)
class PrjLabel:
    session_id: str
    n: int
    i: int
    label: str
    score_raw: float
    score_reform: float
    metric: str
    mode: str

    def __post_init__(self):
        if not self.i < self.n:
            raise ValidationError(f"historical turn {self.i} must precede turn {self.n}")
        if self.label != decide(self.score_raw, self.score_reform):
            raise ValidationError("label inconsistent with scores")

    @property
    def relevant(self) -> bool:
        return self.label == RELEVANT


def decide(score_raw: float, score_reform: float) -> str:
    return RELEVANT if score_reform > score_raw else IRRELEVANT


def expanded_query(current: Turn, hist_query: str, hist_passage: str,
                   order: str = ORDER_QUERY_FIRST) -> str:
    if order == ORDER_QUERY_FIRST:
        parts = (current.query_text, hist_query, hist_passage)
    elif order == ORDER_PASSAGE_FIRST:
        parts = (current.query_text, hist_passage, hist_query)
    else:
        raise ConfigError(f"unknown concatenation order {order!r}")
    return " ".join(parts)


def _score(retriever, text, qid, metric, qrels, depth):
    value = metric.score(retriever.retrieve(text, depth, qid), qrels)
    if value is None:
        raise ValidationError(f"query {qid} has no relevance judgments")
    return value


def judge_turn(session_id: str, current: Turn, hist: Turn, retriever: Retriever,
               metric: MetricSpec, qrels: Qrels, depth: int = DEFAULT_DEPTH,
               mode: HistoryMode = GOLD, order: str = ORDER_QUERY_FIRST) -> PrjLabel:
    if hist.turn_index >= current.turn_index:
        raise ValidationError("historical turn must precede the current turn")
    passage = history_passage_text(hist, retriever, mode)
    if passage is None:
        raise ValidationError(
            f"session {session_id!r} turn {hist.turn_index} has no gold passage; "
            "use a substituted history mode")
    qid = query_id(session_id, current.turn_index)
    raw = _score(retriever, current.query_text, qid, metric, qrels, depth)
    reform = _score(retriever, expanded_query(current, hist.query_text, passage, order),
                    qid, metric, qrels, depth)
    return PrjLabel(session_id, current.turn_index, hist.turn_index, decide(raw, reform),
                    raw, reform, metric.name, str(mode))


PrjTable = Dict[Tuple[str, int], List[PrjLabel]]


def _judge_current(session, n, retriever, metric, qrels, depth, mode, order):
    current = session.turn(n)
    labels = []
    for hist in session.turns[: n - 1]:
        if not mode.substituted and hist.gold_passage_id is None:
            log.info("skip %s turn %d history %d: no gold passage",
                     session.session_id, n, hist.turn_index)
            continue
        labels.append(judge_turn(session.session_id, current, hist, retriever, metric,
                                 qrels, depth, mode, order))
    return labels


def judge_all(sessions: Sequence[Session], retriever: Retriever, metric: MetricSpec,
              qrels: Qrels, depth: int = DEFAULT_DEPTH, mode: HistoryMode = GOLD,
              order: str = ORDER_QUERY_FIRST, jobs: int = 1) -> PrjTable:
    tasks = []
    for s in sessions:
        for n in range(2, len(s) + 1):
            if query_id(s.session_id, n) not in qrels:
                log.info("skip %s: no qrels entry", query_id(s.session_id, n))
                continue
            tasks.append((s, n))

    def run(task):
        s, n = task
        return _judge_current(s, n, retriever, metric, qrels, depth, mode, order)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    table: PrjTable = {}
    for (s, n), labels in sorted(zip(tasks, results), key=lambda x: (x[0][0].session_id, x[0][1])):
        table[(s.session_id, n)] = labels
    return table


def iter_labels(table: PrjTable) -> Iterable[PrjLabel]:
    for key in sorted(table):
        yield from table[key]


def write_prj_table(table: PrjTable, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for lab in iter_labels(table):
            fh.write("\t".join([lab.session_id, str(lab.n), str(lab.i), lab.label,
                                format(lab.score_raw, ".17g"), format(lab.score_reform, ".17g"),
                                lab.metric, lab.mode]) + "\n")


def read_prj_table(path) -> PrjTable:
    table: PrjTable = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 8:
                raise ParseError(path, lineno, f"expected 8 fields, got {len(parts)}")
            sid, n, i, label, raw, reform, metric, mode = parts
            try:
                lab = PrjLabel(sid, int(n), int(i), label, float(raw), float(reform), metric, mode)
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            table.setdefault((sid, lab.n), []).append(lab)
    return table


def relevant_portion_by_turn(table: PrjTable) -> List[Tuple[int, float]]:
    """Pool labels across sessions by current-turn index; relevant / total."""
    rel: Dict[int, int] = defaultdict(int)
    tot: Dict[int, int] = defaultdict(int)
    for lab in iter_labels(table):
        tot[lab.n] += 1
        rel[lab.n] += lab.relevant
    if not tot:
        raise ValidationError("PRJ table is empty")
    return [(n, rel[n] / tot[n]) for n in sorted(tot)]


@dataclass
class HistAboveCurrent:
    percentage: float
    flags: Dict[str, bool]


def historical_gold_above_current(run: Iterable[RankedList], sessions: Sequence[Session],
                                  qrels: Qrels) -> HistAboveCurrent:
    """Share of judged queries (in percent) whose list ranks some earlier turn's
    gold passage strictly above the current gold. Passages missing from a list
    sit at rank infinity, so two missing passages never count."""
    by_qid = {}
    for s in sessions:
        for t in s.turns:
            by_qid[query_id(s.session_id, t.turn_index)] = (s, t)
    flags: Dict[str, bool] = {}
    for rl in run:
        if rl.query_id not in qrels or rl.query_id not in by_qid:
            continue
        current_gold = {p for p, g in qrels[rl.query_id].items() if g >= 1}
        if not current_gold:
            continue
        s, t = by_qid[rl.query_id]
        rank_current = min(rl.rank_of(p) for p in current_gold)
        hist = {h.gold_passage_id for h in s.turns[: t.turn_index - 1]
                if h.gold_passage_id is not None} - current_gold
        flags[rl.query_id] = any(rl.rank_of(p) < rank_current for p in hist)
    if not flags:
        raise ValidationError("no evaluable queries")
    pct = 100.0 * sum(flags.values()) / len(flags)
    return HistAboveCurrent(pct, dict(sorted(flags.items())))
