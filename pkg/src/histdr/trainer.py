"""Contrastive training of the linear query encoder.

For each positive ``p_i`` of an instance the loss is the cross entropy of
``p_i`` against the instance's negatives only (other positives never enter a
denominator); the instance loss averages over its positives and the batch
loss averages over instances. Negatives are the explicit ones mined for the
instance plus the gold passages of the other instances in the batch.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .encode import (FeatureVector, PassageEncoder, QueryEncoderParams, featurize,
                     read_embeddings_from, write_embeddings_to)
from .errors import ConfigError, NumericalError, ValidationError
from .index import DenseIndex
from .supervision import HISTORICAL, IN_BATCH, RETRIEVED, TrainingInstance

log = logging.getLogger(__name__)

OBJECTIVE_NLL = "nll"
# maximises the mean softmax probability itself, i.e. the objective with no log
OBJECTIVE_PROB = "prob"


@dataclass
class BatchItem:
    features: FeatureVector
    positives: np.ndarray  # (N, d_emb)
    negatives: np.ndarray  # (M, d_emb)
    counts: Dict[str, int] = field(default_factory=dict)


def in_batch_negatives(instances: Sequence[TrainingInstance]) -> List[List[str]]:
    """Gold ids of the other instances, minus anything the instance already uses."""
    golds = [inst.gold for inst in instances]
    out = []
    for b, inst in enumerate(instances):
        used = set(inst.positives) | {p for p, _ in inst.negatives}
        extra = []
        for c, g in enumerate(golds):
            if c != b and g not in used:
                extra.append(g)
                used.add(g)
        out.append(extra)
    return out


def make_batch(instances: Sequence[TrainingInstance], index: DenseIndex,
               features: Sequence[FeatureVector]) -> List[BatchItem]:
    items = []
    for inst, fv, extra in zip(instances, features, in_batch_negatives(instances)):
        neg_ids = [p for p, _ in inst.negatives] + extra
        counts = {IN_BATCH: len(extra),
                  RETRIEVED: sum(s == RETRIEVED for _, s in inst.negatives),
                  HISTORICAL: sum(s == HISTORICAL for _, s in inst.negatives)}
        items.append(BatchItem(fv, index.embeddings(list(inst.positives)),
                               index.embeddings(neg_ids), counts))
    return items


def _instance_terms(q, pos, neg, objective):
    """Loss of one instance and its gradient w.r.t. the query embedding."""
    n = len(pos)
    s_pos = pos @ q
    s_neg = neg @ q
    logits = np.empty((n, 1 + len(s_neg)))
    logits[:, 0] = s_pos
    logits[:, 1:] = s_neg
    shift = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - shift)
    z = e.sum(axis=1, keepdims=True)
    prob = e / z
    if objective == OBJECTIVE_NLL:
        loss = float(np.mean(np.log(z[:, 0]) + shift[:, 0] - s_pos))
        coef = prob.copy()
        coef[:, 0] -= 1.0
    elif objective == OBJECTIVE_PROB:
        p0 = prob[:, 0]
        loss = float(-np.mean(p0))
        # d p0 / d logits = p0 * (onehot_0 - prob)
        coef = p0[:, None] * prob
        coef[:, 0] -= p0
    else:
        raise ConfigError(f"unknown objective {objective!r}")
    coef /= n
    dq = coef[:, 0] @ pos + (coef[:, 1:].sum(axis=0) @ neg if len(neg) else 0.0)
    return loss, dq


def loss_and_grad(W: np.ndarray, batch: Sequence[BatchItem],
                  objective: str = OBJECTIVE_NLL) -> Tuple[float, np.ndarray]:
    W = W.W if isinstance(W, QueryEncoderParams) else W
    grad = np.zeros_like(W)
    losses = []
    for item in batch:
        if len(item.positives) == 0:
            log.warning("instance without positives skipped")
            continue
        fv = item.features
        q = fv.values @ W[fv.indices] if fv.nnz else np.zeros(W.shape[1])
        loss, dq = _instance_terms(q, item.positives, item.negatives, objective)
        losses.append(loss)
        if fv.nnz:
            grad[fv.indices] += np.outer(fv.values, dq)
    if not losses:
        raise ValidationError("batch has no usable instances")
    grad /= len(losses)
    return float(np.mean(losses)), grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, W: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(W), np.zeros_like(W), **hyper)


def adam_step(W: np.ndarray, state: AdamState, grad: np.ndarray) -> Tuple[np.ndarray, AdamState]:
    if grad.shape != W.shape or state.m.shape != W.shape:
        raise ValidationError("shape mismatch in adam_step")
    if not np.all(np.isfinite(grad)):
        bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
        raise NumericalError(f"gradient has {bad} non-finite entries at step {state.t + 1}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    W_new = W - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return W_new, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


@dataclass
class TrainConfig:
    lr: float = 3e-5
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    objective: str = OBJECTIVE_NLL
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.objective not in (OBJECTIVE_NLL, OBJECTIVE_PROB):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid Adam hyperparameters")


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss: float
    grad_norm: float
    n_inbatch: int
    n_retrieved: int
    n_historical: int


@dataclass
class TrainLog:
    steps: List[StepRecord] = field(default_factory=list)
    epochs: List[dict] = field(default_factory=list)

    def epoch_mean_loss(self, epoch: int) -> float:
        vals = [s.loss for s in self.steps if s.epoch == epoch]
        return float(np.mean(vals))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss", "grad_norm", "n_inbatch", "n_retrieved", "n_historical"])
            for s in self.steps:
                w.writerow([s.step, format(s.loss, ".17g"), format(s.grad_norm, ".17g"),
                            s.n_inbatch, s.n_retrieved, s.n_historical])


def train(instances: Sequence[TrainingInstance], index: DenseIndex, encoder: PassageEncoder,
          config: TrainConfig = TrainConfig(), init: Optional[QueryEncoderParams] = None,
          on_epoch: Optional[Callable[[int, QueryEncoderParams], dict]] = None,
          ) -> Tuple[QueryEncoderParams, TrainLog]:
    """Adam on mini-batches; instance order reshuffled every epoch by
    ``default_rng(config.seed).permutation``; the last partial batch is kept."""
    config.validate()
    if not instances:
        raise ValidationError("no training instances")
    missing = sorted({p for inst in instances
                      for p in list(inst.positives) + [q for q, _ in inst.negatives]
                      if p not in index})
    if missing:
        raise ValidationError(f"passages not in index: {missing[:5]}")
    params = (init or QueryEncoderParams.from_encoder(encoder)).copy()
    if params.d_feat != encoder.d_feat or params.d_emb != index.d_emb:
        raise ConfigError("query encoder shape does not match encoder/index dimensions")
    checksum = index.checksum()
    features = [featurize(inst.text, encoder.d_feat) for inst in instances]
    W = params.W
    state = AdamState.zeros_like(W, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    tlog = TrainLog()
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(instances))
        for start in range(0, len(order), config.batch_size):
            sel = order[start:start + config.batch_size].tolist()
            batch = make_batch([instances[i] for i in sel], index, [features[i] for i in sel])
            loss, grad = loss_and_grad(W, batch, config.objective)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at step {step + 1}")
            W, state = adam_step(W, state, grad)
            step += 1
            tlog.steps.append(StepRecord(
                step, epoch, loss, float(np.linalg.norm(grad)),
                sum(b.counts[IN_BATCH] for b in batch),
                sum(b.counts[RETRIEVED] for b in batch),
                sum(b.counts[HISTORICAL] for b in batch)))
        snapshot = {"epoch": epoch, "mean_loss": tlog.epoch_mean_loss(epoch)}
        if on_epoch is not None:
            snapshot.update(on_epoch(epoch, QueryEncoderParams(W)))
        tlog.epochs.append(snapshot)
        log.info("epoch %d mean loss %.6f", epoch, snapshot["mean_loss"])
    if index.checksum() != checksum:
        raise NumericalError("passage embeddings changed during training")
    return QueryEncoderParams(W), tlog


# --- checkpoints -------------------------------------------------------------
#
# magic b"HDCK" | uint32 d_feat | uint32 d_emb | int64 seed | uint64 steps
# followed by W as an embedding-export block whose ids are the row numbers.

CKPT_MAGIC = b"HDCK"
_CKPT = struct.Struct("<4sIIqQ")


def save_checkpoint(path, params: QueryEncoderParams, seed: int, steps: int) -> None:
    with Path(path).open("wb") as fh:
        fh.write(_CKPT.pack(CKPT_MAGIC, params.d_feat, params.d_emb, seed, steps))
        write_embeddings_to(fh, [str(r) for r in range(params.d_feat)], params.W)


def load_checkpoint(path) -> Tuple[QueryEncoderParams, dict]:
    with Path(path).open("rb") as fh:
        head = fh.read(_CKPT.size)
        if len(head) != _CKPT.size:
            raise ValidationError(f"{path}: truncated checkpoint header")
        magic, d_feat, d_emb, seed, steps = _CKPT.unpack(head)
        if magic != CKPT_MAGIC:
            raise ValidationError(f"{path}: not a checkpoint")
        ids, W = read_embeddings_from(fh, path)
    if W.shape != (d_feat, d_emb):
        raise ValidationError(f"{path}: matrix shape {W.shape} != header ({d_feat}, {d_emb})")
    return QueryEncoderParams(W), {"d_feat": d_feat, "d_emb": d_emb, "seed": seed, "steps": steps}
