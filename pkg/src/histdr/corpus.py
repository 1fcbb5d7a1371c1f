"""Passages, conversation sessions and TREC qrels.

Files are JSON lines. A collection line is ``{"id": ..., "text": ...}``; a
sessions line is ``{"session_id": ..., "turns": [{"turn_index": 1,
"query": ..., "gold_passage_id": ... | null, "answer": ... | null}, ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .errors import ParseError, ValidationError

Collection = Dict[str, "Passage"]
Qrels = Dict[str, Dict[str, int]]


@dataclass(frozen=True)
class Passage:
    id: str
    text: str


@dataclass(frozen=True)
class Turn:
    turn_index: int
    query_text: str
    gold_passage_id: Optional[str] = None
    answer_text: Optional[str] = None


@dataclass(frozen=True)
class Session:
    session_id: str
    turns: tuple

    def turn(self, n: int) -> Turn:
        """Return turn ``n`` (1-based)."""
        return self.turns[n - 1]

    def __len__(self):
        return len(self.turns)


def query_id(session_id: str, turn_index: int) -> str:
    return f"{session_id}_{turn_index}"


def _iter_records(path):
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(path, lineno, "record is not an object")
            yield lineno, rec


def load_collection(path, allow_empty_text: bool = False) -> Collection:
    collection: Collection = {}
    for lineno, rec in _iter_records(path):
        pid, text = rec.get("id"), rec.get("text")
        if not isinstance(pid, str) or not pid:
            raise ParseError(path, lineno, "field 'id' must be a non-empty string")
        if not isinstance(text, str):
            raise ParseError(path, lineno, "field 'text' must be a string")
        if not text and not allow_empty_text:
            raise ValidationError(f"{path}:{lineno}: passage {pid!r} has empty text")
        if pid in collection:
            raise ValidationError(f"{path}:{lineno}: duplicate passage id {pid!r}")
        collection[pid] = Passage(pid, text)
    return collection


def write_collection(collection: Mapping[str, Passage], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in collection.values():
            fh.write(json.dumps({"id": p.id, "text": p.text}, ensure_ascii=False) + "\n")


def _parse_turn(path, lineno, raw) -> Turn:
    if not isinstance(raw, dict):
        raise ParseError(path, lineno, "turn is not an object")
    ti = raw.get("turn_index")
    query = raw.get("query")
    gold = raw.get("gold_passage_id")
    answer = raw.get("answer")
    if not isinstance(ti, int) or isinstance(ti, bool):
        raise ParseError(path, lineno, "turn_index must be an integer")
    if not isinstance(query, str) or not query.strip():
        raise ParseError(path, lineno, f"turn {ti}: query must be a non-empty string")
    if gold is not None and not isinstance(gold, str):
        raise ParseError(path, lineno, f"turn {ti}: gold_passage_id must be a string or null")
    if answer is not None and not isinstance(answer, str):
        raise ParseError(path, lineno, f"turn {ti}: answer must be a string or null")
    return Turn(ti, query, gold, answer)


def load_sessions(path, collection: Mapping[str, Passage]) -> List[Session]:
    sessions: List[Session] = []
    seen = set()
    for lineno, rec in _iter_records(path):
        sid = rec.get("session_id")
        turns = rec.get("turns")
        if not isinstance(sid, str) or not sid:
            raise ParseError(path, lineno, "session_id must be a non-empty string")
        if not isinstance(turns, list):
            raise ParseError(path, lineno, "turns must be an array")
        if sid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate session id {sid!r}")
        seen.add(sid)
        parsed = tuple(_parse_turn(path, lineno, t) for t in turns)
        for expected, turn in enumerate(parsed, 1):
            if turn.turn_index != expected:
                raise ValidationError(
                    f"session {sid!r}: turn indices must be 1..{len(parsed)} in order, "
                    f"found {turn.turn_index} at position {expected}"
                )
            if turn.gold_passage_id is not None and turn.gold_passage_id not in collection:
                raise ValidationError(
                    f"session {sid!r} turn {turn.turn_index}: gold passage "
                    f"{turn.gold_passage_id!r} not in collection"
                )
        sessions.append(Session(sid, parsed))
    return sessions


def write_sessions(sessions: Iterable[Session], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sessions:
            rec = {
                "session_id": s.session_id,
                "turns": [
                    {
                        "turn_index": t.turn_index,
                        "query": t.query_text,
                        "gold_passage_id": t.gold_passage_id,
                        "answer": t.answer_text,
                    }
                    for t in s.turns
                ],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def derive_qrels(sessions: Sequence[Session]) -> Qrels:
    """One grade-1 judgment per turn that has a gold passage."""
    qrels: Qrels = {}
    for s in sessions:
        for t in s.turns:
            if t.gold_passage_id is not None:
                qrels[query_id(s.session_id, t.turn_index)] = {t.gold_passage_id: 1}
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for pid in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {pid} {qrels[qid][pid]}\n")


def read_qrels(path) -> Qrels:
    qrels: Qrels = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(parts)}")
            qid, _, pid, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise ParseError(path, lineno, f"grade {grade!r} is not an integer") from None
            if g < 0:
                raise ParseError(path, lineno, "grade must be >= 0")
            qrels.setdefault(qid, {})[pid] = g
    return qrels
