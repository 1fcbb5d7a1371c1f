"""Pipeline configuration: a JSON document with fixed sections.

Every field has a default, unknown keys are rejected, and relative paths
resolve against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from .encode import DEFAULT_D_EMB, DEFAULT_D_FEAT
from .errors import ConfigError
from .evaluation import MetricSpec
from .index import DEFAULT_DEPTH
from .prj import GOLD, ORDERS, ORDER_QUERY_FIRST, HistoryMode
from .supervision import DEFAULT_MAX_TOKENS, MiningConfig, SELECT_ALL, SELECT_NONE, SELECT_PRJ
from .trainer import OBJECTIVE_NLL, TrainConfig


@dataclass
class PathsConfig:
    collection: str = "collection.jsonl"
    sessions: str = "sessions.jsonl"
    # sessions used for search/eval; training sessions when unset
    eval_sessions: Optional[str] = None
    work_dir: str = "work"


@dataclass
class EncoderConfig:
    d_feat: int = DEFAULT_D_FEAT
    d_emb: int = DEFAULT_D_EMB
    projection_seed: int = 0


@dataclass
class PrjConfig:
    metric: str = "MRR"
    depth: int = DEFAULT_DEPTH
    mode: str = "gold"  # or "substituted"
    k: int = 1
    order: str = ORDER_QUERY_FIRST


@dataclass
class SupervisionConfig:
    select: str = SELECT_PRJ
    max_tokens: int = DEFAULT_MAX_TOKENS
    n_pseudo_pos: int = 1
    n_hist_neg: int = 1
    n_retrieved: int = 1
    depth: int = DEFAULT_DEPTH
    negatives_from: str = "reformulated"
    seed: int = 0


@dataclass
class TrainerConfig:
    lr: float = 3e-5
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    objective: str = OBJECTIVE_NLL


@dataclass
class EvalConfig:
    metrics: List[str] = field(default_factory=lambda: ["MRR", "NDCG@3", "Recall@10", "Recall@100"])
    depth: int = DEFAULT_DEPTH


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    prj: PrjConfig = field(default_factory=PrjConfig)
    supervision: SupervisionConfig = field(default_factory=SupervisionConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    SECTIONS = ("paths", "encoder", "prj", "supervision", "trainer", "eval")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(cls.SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in cls.SECTIONS:
                continue
            section_cls = f.default_factory  # the section dataclass itself
            body = raw.get(f.name, {})
            if not isinstance(body, dict):
                raise ConfigError(f"section {f.name!r} must be an object")
            known = {x.name for x in fields(section_cls)}
            extra = set(body) - known
            if extra:
                raise ConfigError(f"unknown keys in {f.name!r}: {sorted(extra)}")
            kwargs[f.name] = section_cls(**body)
        cfg = cls(**kwargs, base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, path.parent)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in self.SECTIONS}

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Override every seed (projection, sampling, shuffling)."""
        d = self.to_dict()
        d["encoder"]["projection_seed"] = seed
        d["supervision"]["seed"] = seed
        d["trainer"]["seed"] = seed
        return PipelineConfig.from_dict(d, self.base_dir)

    def section_hash(self, *names: str) -> str:
        blob = json.dumps({n: asdict(getattr(self, n)) for n in names}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve(self, p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def work_dir(self) -> Path:
        return self.resolve(self.paths.work_dir)

    # typed views -----------------------------------------------------------

    @property
    def history_mode(self) -> HistoryMode:
        return GOLD if self.prj.mode == "gold" else HistoryMode(self.prj.k)

    @property
    def prj_metric(self) -> MetricSpec:
        m = MetricSpec.parse(self.prj.metric)
        return MetricSpec("MRR", self.prj.depth) if m.kind == "MRR" and m.k is None else m

    @property
    def eval_metrics(self) -> List[MetricSpec]:
        return [MetricSpec.parse(m) for m in self.eval.metrics]

    def mining(self) -> MiningConfig:
        s = self.supervision
        return MiningConfig(s.select, s.max_tokens, s.n_pseudo_pos, s.n_hist_neg, s.n_retrieved,
                            s.depth, s.negatives_from, s.seed)

    def train_config(self) -> TrainConfig:
        t = self.trainer
        return TrainConfig(lr=t.lr, batch_size=t.batch_size, epochs=t.epochs, seed=t.seed,
                           objective=t.objective)

    def validate(self) -> None:
        if self.encoder.d_feat < 1 or self.encoder.d_emb < 1:
            raise ConfigError("encoder dimensions must be positive")
        if self.prj.mode not in ("gold", "substituted"):
            raise ConfigError("prj.mode must be 'gold' or 'substituted'")
        if self.prj.k < 1:
            raise ConfigError("prj.k must be >= 1")
        if self.prj.order not in ORDERS:
            raise ConfigError(f"prj.order must be one of {ORDERS}")
        if self.prj.depth < 1 or self.eval.depth < 1 or self.supervision.depth < 1:
            raise ConfigError("depths must be >= 1")
        if self.supervision.select not in (SELECT_PRJ, SELECT_ALL, SELECT_NONE):
            raise ConfigError("supervision.select must be prj, all or none")
        if self.supervision.negatives_from not in ("reformulated", "raw"):
            raise ConfigError("supervision.negatives_from must be 'reformulated' or 'raw'")
        for name in ("n_pseudo_pos", "n_hist_neg", "n_retrieved"):
            if getattr(self.supervision, name) < 0:
                raise ConfigError(f"supervision.{name} must be >= 0")
        if self.supervision.max_tokens < 1:
            raise ConfigError("supervision.max_tokens must be >= 1")
        if not self.eval.metrics:
            raise ConfigError("eval.metrics must not be empty")
        self.prj_metric
        self.eval_metrics
        self.train_config().validate()
