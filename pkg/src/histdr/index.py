"""Exact dense retrieval over frozen passage embeddings, and TREC run files."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .corpus import Passage
from .encode import PassageEncoder, encode_passage, read_embeddings, write_embeddings
from .errors import ParseError, ValidationError

DEFAULT_DEPTH = 100


@dataclass(frozen=True)
class RankedList:
    query_id: str
    hits: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "hits", tuple((str(p), float(s)) for p, s in self.hits))

    @property
    def ids(self) -> List[str]:
        return [p for p, _ in self.hits]

    def rank_of(self, pid: str) -> float:
        """1-based rank of ``pid``; ``inf`` when absent."""
        for r, (p, _) in enumerate(self.hits, 1):
            if p == pid:
                return r
        return float("inf")

    def validate(self) -> None:
        seen = set()
        for r, (p, s) in enumerate(self.hits):
            if p in seen:
                raise ValidationError(f"{self.query_id}: duplicate passage {p!r}")
            seen.add(p)
            if r:
                prev_p, prev_s = self.hits[r - 1]
                if s > prev_s or (s == prev_s and p < prev_p):
                    raise ValidationError(f"{self.query_id}: hits out of order at rank {r + 1}")


class DenseIndex:
    """Row ``i`` holds the embedding of ``ids[i]``; ids are in ascending order."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        ids = tuple(ids)
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise ValidationError("index matrix must have one row per id")
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise ValidationError("index ids must be unique and ascending")
        matrix.setflags(write=False)
        self._ids = ids
        self._matrix = matrix
        self._row = {pid: r for r, pid in enumerate(ids)}

    @property
    def ids(self) -> Tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def d_emb(self) -> int:
        return self._matrix.shape[1]

    def __len__(self):
        return len(self._ids)

    def __contains__(self, pid):
        return pid in self._row

    def embedding(self, pid: str) -> np.ndarray:
        return self._matrix[self._row[pid]]

    def embeddings(self, pids: Sequence[str]) -> np.ndarray:
        if not pids:
            return np.zeros((0, self.d_emb))
        return self._matrix[[self._row[p] for p in pids]]

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self._matrix).tobytes()).hexdigest()


def build(collection: Mapping[str, Passage], encoder: PassageEncoder) -> DenseIndex:
    ids = sorted(collection)
    if not ids:
        raise ValidationError("cannot build an index over an empty collection")
    matrix = np.vstack([encode_passage(encoder, collection[pid].text) for pid in ids])
    return DenseIndex(ids, matrix)


def search(index: DenseIndex, qvec: np.ndarray, k: int, query_id: str = "") -> RankedList:
    qvec = np.asarray(qvec, dtype=np.float64)
    if qvec.shape != (index.d_emb,):
        raise ValidationError(f"query dimension {qvec.shape} != index dimension {index.d_emb}")
    if k < 1:
        raise ValidationError("k must be >= 1")
    scores = index.matrix @ qvec
    # stable sort keeps ascending row order (= ascending id) among equal scores
    order = np.argsort(-scores, kind="stable")[: min(k, len(index))]
    ids = index.ids
    return RankedList(query_id, tuple((ids[r], float(scores[r])) for r in order))


def search_many(index: DenseIndex, queries: Sequence[Tuple[str, np.ndarray]], k: int,
                jobs: int = 1) -> List[RankedList]:
    """Search each ``(query_id, qvec)``; output follows input order."""
    if jobs <= 1:
        return [search(index, v, k, qid) for qid, v in queries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda q: search(index, q[1], k, q[0]), queries))


def save_index(index: DenseIndex, path) -> None:
    write_embeddings(path, index.ids, index.matrix)


def load_index(path) -> DenseIndex:
    ids, matrix = read_embeddings(path)
    return DenseIndex(ids, matrix)


def write_run(lists: Sequence[RankedList], tag: str, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rl in lists:
            for rank, (pid, score) in enumerate(rl.hits, 1):
                fh.write(f"{rl.query_id} Q0 {pid} {rank} {score:.6f} {tag}\n")


def read_run(path) -> List[RankedList]:
    hits: Dict[str, List[Tuple[str, float]]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(path, lineno, f"expected 6 fields, got {len(parts)}")
            qid, _, pid, rank, score, _ = parts
            try:
                rank_i, score_f = int(rank), float(score)
            except ValueError:
                raise ParseError(path, lineno, "rank/score not numeric") from None
            lst = hits.setdefault(qid, [])
            if rank_i != len(lst) + 1:
                raise ParseError(path, lineno,
                                 f"query {qid}: expected rank {len(lst) + 1}, got {rank_i}")
            lst.append((pid, score_f))
    return [RankedList(qid, tuple(h)) for qid, h in hits.items()]
