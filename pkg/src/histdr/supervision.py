"""Context-denoised query reformulation and mining of training pairs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .corpus import Qrels, Session, query_id
from .encode import fnv1a_64
from .errors import ConfigError, ParseError, ValidationError
from .index import DEFAULT_DEPTH
from .prj import GOLD, HistoryMode, PrjTable, history_passage_id, history_passage_text
from .retrieval import Retriever

log = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 512

SELECT_PRJ = "prj"   # keep PRJ-relevant turns only
SELECT_ALL = "all"   # keep every historical turn (no denoising)
SELECT_NONE = "none"  # current query alone

IN_BATCH = "in_batch"
RETRIEVED = "retrieved"
HISTORICAL = "historical"
SOURCES = (IN_BATCH, RETRIEVED, HISTORICAL)


@dataclass(frozen=True)
class HistoryPartition:
    relevant: Tuple[str, ...]
    irrelevant: Tuple[str, ...]


@dataclass(frozen=True)
class ReformulatedQuery:
    query_id: str
    text: str
    turns: Tuple[int, ...]


@dataclass(frozen=True)
class TrainingInstance:
    query_id: str
    text: str
    positives: Tuple[str, ...]
    negatives: Tuple[Tuple[str, str], ...]  # (passage id, source)

    def __post_init__(self):
        if not self.positives:
            raise ValidationError(f"{self.query_id}: no positives")
        clash = set(self.positives) & {p for p, _ in self.negatives}
        if clash:
            raise ValidationError(f"{self.query_id}: {sorted(clash)} both positive and negative")

    @property
    def gold(self) -> str:
        return self.positives[0]


def _labels_for(session: Session, n: int, table: PrjTable, mode: HistoryMode):
    labels = {lab.i: lab for lab in table.get((session.session_id, n), [])}
    missing = [t.turn_index for t in session.turns[: n - 1]
               if t.turn_index not in labels and (mode.substituted or t.gold_passage_id is not None)]
    if missing:
        raise ValidationError(
            f"session {session.session_id!r} turn {n}: no PRJ labels for historical turns {missing}")
    return labels


def partition_history(session: Session, n: int, table: PrjTable,
                      retriever: Optional[Retriever] = None,
                      mode: HistoryMode = GOLD) -> HistoryPartition:
    """Split historical passage ids by their PRJ label; relevant wins on duplicates.

    In substituted mode each turn is represented by its top-1 retrieved passage,
    which needs ``retriever``.
    """
    labels = _labels_for(session, n, table, mode)
    relevant: List[str] = []
    irrelevant: List[str] = []
    for t in session.turns[: n - 1]:
        if t.turn_index not in labels:
            continue
        if mode.substituted:
            if retriever is None:
                raise ConfigError("substituted mode needs a retriever")
            pid = history_passage_id(t, retriever, mode)
        else:
            pid = t.gold_passage_id
        (relevant if labels[t.turn_index].relevant else irrelevant).append(pid)
    rel = tuple(dict.fromkeys(relevant))
    irr = tuple(p for p in dict.fromkeys(irrelevant) if p not in set(rel))
    return HistoryPartition(rel, irr)


def _ntokens(text: str) -> int:
    return len(text.split())


def reformulate(session: Session, n: int, table: Optional[PrjTable], retriever: Retriever,
                mode: HistoryMode = GOLD, max_tokens: int = DEFAULT_MAX_TOKENS,
                select: str = SELECT_PRJ) -> ReformulatedQuery:
    """``q_n`` followed by ``p_i q_i`` for each selected historical turn in
    chronological order. Over budget, whole units are dropped oldest first."""
    current = session.turn(n)
    qid = query_id(session.session_id, n)
    budget = max_tokens - _ntokens(current.query_text)
    if budget < 0:
        raise ValidationError(f"{qid}: query alone exceeds max_tokens={max_tokens}")
    if select == SELECT_PRJ:
        if table is None:
            raise ConfigError("PRJ selection needs a PRJ table")
        labels = _labels_for(session, n, table, mode)
        chosen = [t for t in session.turns[: n - 1]
                  if t.turn_index in labels and labels[t.turn_index].relevant]
    elif select == SELECT_ALL:
        chosen = list(session.turns[: n - 1])
    elif select == SELECT_NONE:
        chosen = []
    else:
        raise ConfigError(f"unknown history selection {select!r}")

    units = []
    for t in chosen:
        passage = history_passage_text(t, retriever, mode)
        unit = t.query_text if passage is None else f"{passage} {t.query_text}"
        units.append((t.turn_index, unit))
    kept: List[Tuple[int, str]] = []
    for ti, unit in reversed(units):
        cost = _ntokens(unit)
        if cost > budget:
            break
        kept.append((ti, unit))
        budget -= cost
    kept.reverse()
    text = " ".join([current.query_text] + [u for _, u in kept])
    return ReformulatedQuery(qid, text, tuple(ti for ti, _ in kept))


def mine_retrieved_negatives(reformed: ReformulatedQuery, retriever: Retriever, qrels: Qrels,
                             depth: int = DEFAULT_DEPTH, count: int = 1,
                             exclude: Sequence[str] = ()) -> List[str]:
    """Top passages for the reformulated query minus relevant ones and ``exclude``."""
    if depth < count:
        raise ConfigError("depth must be >= count")
    banned = {p for p, g in qrels.get(reformed.query_id, {}).items() if g >= 1}
    banned.update(exclude)
    ranked = retriever.retrieve(reformed.text, depth)
    survivors = [p for p in ranked.ids if p not in banned][:count]
    if len(survivors) < count:
        log.warning("%s: only %d retrieved negatives survive filtering (wanted %d)",
                    reformed.query_id, len(survivors), count)
    return survivors


def instance_rng(seed: int, session_id: str, n: int) -> np.random.Generator:
    """PCG64 seeded from SeedSequence([seed, fnv1a_64(session_id), n])."""
    return np.random.default_rng(np.random.SeedSequence([seed, fnv1a_64(session_id), n]))


def _sample(rng, pool, count):
    if count <= 0 or not pool:
        return []
    picks = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
    return [pool[i] for i in sorted(picks.tolist())]


def assemble_instance(session: Session, n: int, partition: HistoryPartition,
                      reformed: ReformulatedQuery, retrieved_negs: Sequence[str], seed: int,
                      n_pseudo_pos: int = 1, n_hist_neg: int = 1,
                      n_retrieved: int = 1) -> Optional[TrainingInstance]:
    gold = session.turn(n).gold_passage_id
    if gold is None:
        log.info("skip %s: no gold passage", query_id(session.session_id, n))
        return None
    rng = instance_rng(seed, session.session_id, n)
    # candidates that would collide with a positive are removed before sampling,
    # which is equivalent to rejection sampling
    positives = [gold] + _sample(rng, [p for p in partition.relevant if p != gold], n_pseudo_pos)
    taken = set(positives)
    negatives = [(p, HISTORICAL) for p in
                 _sample(rng, [p for p in partition.irrelevant if p not in taken], n_hist_neg)]
    taken.update(p for p, _ in negatives)
    for p in retrieved_negs:
        if sum(src == RETRIEVED for _, src in negatives) >= n_retrieved:
            break
        if p not in taken:
            negatives.append((p, RETRIEVED))
            taken.add(p)
    return TrainingInstance(reformed.query_id, reformed.text, tuple(positives), tuple(negatives))


@dataclass
class MiningConfig:
    select: str = SELECT_PRJ
    max_tokens: int = DEFAULT_MAX_TOKENS
    n_pseudo_pos: int = 1
    n_hist_neg: int = 1
    n_retrieved: int = 1
    depth: int = DEFAULT_DEPTH
    negatives_from: str = "reformulated"  # or "raw"
    seed: int = 0


def build_instances(sessions: Sequence[Session], table: Optional[PrjTable], retriever: Retriever,
                    qrels: Qrels, mode: HistoryMode = GOLD,
                    config: MiningConfig = MiningConfig()) -> List[TrainingInstance]:
    """Reformulate, partition and mine every turn with a gold passage, ordered by
    (session id, turn). ``retriever`` must hold the initial query weights."""
    if config.negatives_from not in ("reformulated", "raw"):
        raise ConfigError("negatives_from must be 'reformulated' or 'raw'")
    # historical negatives need real gold passages; substituted histories only
    # contribute positives
    n_hist_neg = 0 if mode.substituted else config.n_hist_neg
    out = []
    for s in sorted(sessions, key=lambda s: s.session_id):
        for t in s.turns:
            n = t.turn_index
            if t.gold_passage_id is None or query_id(s.session_id, n) not in qrels:
                continue
            reformed = reformulate(s, n, table, retriever, mode, config.max_tokens, config.select)
            if table is not None:
                part = partition_history(s, n, table, retriever, mode)
            else:
                part = HistoryPartition((), ())
            probe = reformed if config.negatives_from == "reformulated" else \
                ReformulatedQuery(reformed.query_id, t.query_text, ())
            negs = mine_retrieved_negatives(probe, retriever, qrels, config.depth,
                                            config.n_retrieved, exclude=part.relevant)
            inst = assemble_instance(s, n, part, reformed, negs, config.seed,
                                     config.n_pseudo_pos, n_hist_neg, config.n_retrieved)
            if inst is not None:
                out.append(inst)
    return out


def write_instances(instances: Sequence[TrainingInstance], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "query_id": inst.query_id,
                "text": inst.text,
                "positives": list(inst.positives),
                "negatives": [{"id": p, "source": src} for p, src in inst.negatives],
            }, ensure_ascii=False) + "\n")


def read_instances(path) -> List[TrainingInstance]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(TrainingInstance(
                    rec["query_id"], rec["text"], tuple(rec["positives"]),
                    tuple((d["id"], d["source"]) for d in rec["negatives"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(path, lineno, f"bad training instance ({exc})") from None
    return out


def write_reformulated(queries: Sequence[ReformulatedQuery], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"query_id": q.query_id, "text": q.text,
                                 "turns": list(q.turns)}, ensure_ascii=False) + "\n")


def read_reformulated(path) -> List[ReformulatedQuery]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(ReformulatedQuery(rec["query_id"], rec["text"], tuple(rec["turns"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(path, lineno, f"bad reformulated query ({exc})") from None
    return out
