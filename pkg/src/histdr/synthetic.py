"""Synthetic topic-shift conversations over a generated passage collection.

Every topic owns a disjoint content vocabulary; all topics share a pool of
function words. A topic's vocabulary splits into entity names, section terms
and general terms. Passages are laid out like encyclopedia sections: passage
``k`` of a topic describes entity ``k mod E`` under section ``(k div E) mod S``
and carries the entity's names (repeated), a few of the section's terms, some
general topic terms and function words.

A session visits topics according to a schedule and keeps one focus entity
per topic (returning to a topic returns to its entity unless it drifts to
another entity with ``entity_shift_prob``), asking about a new section at
every turn. Queries name the section and only occasionally the
entity, so earlier turns on the same topic disambiguate them while turns on
other topics share nothing with them. Each content term of a query is, with
probability ``query_variant_prob``, written in a query-side surface form
(``t1v007`` for ``t1w007``) that never occurs in passages.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .corpus import Passage, Session, Turn, query_id, write_collection, write_sessions
from .errors import ConfigError

SCHEDULES = ("alternate", "blocks", "random")


@dataclass(frozen=True)
class SyntheticSpec:
    n_topics: int = 5
    vocab_per_topic: int = 160
    passages_per_topic: int = 400
    n_sessions: int = 50
    turns_per_session: int = 8
    schedule: str = "random"
    block_length: int = 2
    shift_prob: float = 0.3
    entity_shift_prob: float = 0.3
    entities_per_topic: int = 20
    entity_terms: int = 2
    name_repeats: int = 3
    sections_per_topic: int = 20
    section_terms: int = 4
    passage_section_terms: int = 3
    passage_topic_terms: int = 6
    function_words: int = 30
    passage_function: int = 6
    query_terms: int = 2
    query_function: int = 2
    entity_mention_prob: float = 0.2
    query_variant_prob: float = 0.3
    n_test_sessions: int = 0

    def validate(self):
        if self.n_topics < 2:
            raise ConfigError("n_topics must be >= 2")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        positive = ("vocab_per_topic", "passages_per_topic", "turns_per_session", "block_length",
                    "entities_per_topic", "entity_terms", "name_repeats", "sections_per_topic", "section_terms",
                    "passage_section_terms", "query_terms")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("n_sessions", "n_test_sessions", "function_words", "passage_topic_terms",
                     "passage_function", "query_function"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_sessions + self.n_test_sessions < 1:
            raise ConfigError("need at least one session")
        if self.function_words == 0 and (self.passage_function or self.query_function):
            raise ConfigError("function words requested but the pool is empty")
        general = self.vocab_per_topic - self.n_named - self.n_section
        if general < self.passage_topic_terms or (general < 1 and self.passage_topic_terms):
            raise ConfigError("vocab_per_topic too small for names, sections and general terms")
        if self.passage_section_terms > self.section_terms:
            raise ConfigError("passage_section_terms exceeds section_terms")
        if self.query_terms > self.passage_section_terms:
            raise ConfigError("query_terms exceeds passage_section_terms")
        if self.passages_per_topic < self.entities_per_topic:
            raise ConfigError("need at least one passage per entity")
        for name in ("shift_prob", "entity_shift_prob", "entity_mention_prob", "query_variant_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @property
    def n_named(self) -> int:
        return self.entities_per_topic * self.entity_terms

    @property
    def n_section(self) -> int:
        return self.sections_per_topic * self.section_terms

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**d)


def content_term(topic: int, j: int) -> str:
    return f"t{topic}w{j:03d}"


def variant_term(topic: int, j: int) -> str:
    return f"t{topic}v{j:03d}"


def function_term(j: int) -> str:
    return f"f{j:02d}"


@dataclass
class SyntheticData:
    collection: Dict[str, Passage]
    sessions: List[Session]
    test_sessions: List[Session]
    manifest: dict


def _topic_sequence(spec, rng, session_no):
    n = spec.turns_per_session
    if spec.schedule == "alternate":
        return [t % spec.n_topics + 1 for t in range(n)]
    seq = [int(rng.integers(spec.n_topics)) + 1]
    for t in range(1, n):
        if spec.schedule == "blocks":
            shift = t % spec.block_length == 0
        else:
            shift = rng.random() < spec.shift_prob
        if shift:
            others = [k for k in range(1, spec.n_topics + 1) if k != seq[-1]]
            seq.append(others[int(rng.integers(len(others)))])
        else:
            seq.append(seq[-1])
    return seq


def synthesize(spec: SyntheticSpec, seed: int) -> SyntheticData:
    spec.validate()
    rng = np.random.default_rng(seed)
    E, S = spec.entities_per_topic, spec.sections_per_topic
    general_ids = np.arange(spec.n_named + spec.n_section, spec.vocab_per_topic)

    def section_ids(sec):
        start = spec.n_named + sec * spec.section_terms
        return np.arange(start, start + spec.section_terms)

    collection: Dict[str, Passage] = {}
    passage_topic: Dict[str, str] = {}
    passage_entity: Dict[str, str] = {}
    passage_section: Dict[Tuple[int, str], List[int]] = {}
    by_entity: Dict[Tuple[int, int], List[Tuple[str, int]]] = {}
    pid_no = 0
    for topic in range(1, spec.n_topics + 1):
        for k in range(spec.passages_per_topic):
            ent, sec = k % E, (k // E) % S
            pid = f"p{pid_no:05d}"
            pid_no += 1
            names = [ent * spec.entity_terms + e for e in range(spec.entity_terms)]
            sect = sorted(rng.choice(section_ids(sec), size=spec.passage_section_terms,
                                     replace=False).tolist())
            general = sorted(rng.choice(general_ids, size=spec.passage_topic_terms,
                                        replace=False).tolist()) if spec.passage_topic_terms else []
            words = [content_term(topic, j) for j in names * spec.name_repeats + sect + general]
            if spec.passage_function:
                words += [function_term(int(j)) for j in
                          rng.integers(spec.function_words, size=spec.passage_function)]
            words = [words[i] for i in rng.permutation(len(words))]
            collection[pid] = Passage(pid, " ".join(words))
            passage_topic[pid] = f"T{topic}"
            passage_entity[pid] = f"T{topic}E{ent + 1}"
            passage_section[(topic, pid)] = sect
            by_entity.setdefault((topic, ent), []).append((pid, sec))

    turn_topic: Dict[str, str] = {}
    turn_entity: Dict[str, str] = {}

    def make_session(sid, session_no):
        topics = _topic_sequence(spec, rng, session_no)
        focus: Dict[int, int] = {}
        used = set()
        turns = []
        for ti, topic in enumerate(topics, 1):
            if topic not in focus:
                focus[topic] = int(rng.integers(E))
            elif ti > 1 and E > 1 and rng.random() < spec.entity_shift_prob:
                # drift to another entity of the same topic
                focus[topic] = (focus[topic] + 1 + int(rng.integers(E - 1))) % E
            ent = focus[topic]
            pool = [p for p, _ in by_entity[(topic, ent)] if p not in used] or \
                [p for p, _ in by_entity[(topic, ent)]]
            gold = pool[int(rng.integers(len(pool)))]
            used.add(gold)
            sect = passage_section[(topic, gold)]
            picks = rng.choice(len(sect), size=spec.query_terms, replace=False)
            terms = [sect[i] for i in sorted(picks.tolist())]
            if rng.random() < spec.entity_mention_prob:
                terms.append(ent * spec.entity_terms + int(rng.integers(spec.entity_terms)))
            words = [variant_term(topic, j) if rng.random() < spec.query_variant_prob
                     else content_term(topic, j) for j in terms]
            if spec.query_function:
                words += [function_term(int(j)) for j in
                          rng.integers(spec.function_words, size=spec.query_function)]
            words = [words[i] for i in rng.permutation(len(words))]
            qid = query_id(sid, ti)
            turn_topic[qid] = f"T{topic}"
            turn_entity[qid] = f"T{topic}E{ent + 1}"
            turns.append(Turn(ti, " ".join(words), gold, None))
        return Session(sid, tuple(turns))

    sessions = [make_session(f"s{i + 1:03d}", i) for i in range(spec.n_sessions)]
    test_sessions = [make_session(f"e{i + 1:03d}", spec.n_sessions + i)
                     for i in range(spec.n_test_sessions)]
    manifest = {
        "seed": seed,
        "spec": asdict(spec),
        "passage_topic": passage_topic,
        "passage_entity": passage_entity,
        "turn_topic": turn_topic,
        "turn_entity": turn_entity,
        "function_words": [function_term(j) for j in range(spec.function_words)],
    }
    return SyntheticData(collection, sessions, test_sessions, manifest)


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> Dict[str, Path]:
    """Write collection.jsonl, sessions.jsonl, manifest.json and, when test
    sessions are requested, test_sessions.jsonl. Returns the written paths."""
    data = synthesize(spec, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"collection": out / "collection.jsonl", "sessions": out / "sessions.jsonl",
             "manifest": out / "manifest.json"}
    write_collection(data.collection, paths["collection"])
    write_sessions(data.sessions, paths["sessions"])
    if data.test_sessions:
        paths["test_sessions"] = out / "test_sessions.jsonl"
        write_sessions(data.test_sessions, paths["test_sessions"])
    with paths["manifest"].open("w", encoding="utf-8") as fh:
        json.dump(data.manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths
