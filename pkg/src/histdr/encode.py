"""Hashed bag-of-words features and the two linear encoders.

Passages are encoded by a frozen random projection ``R`` (``d_feat x d_emb``)
followed by L2 normalisation. Queries are encoded by a trainable matrix ``W``
of the same shape, without normalisation. Scores are plain dot products.
"""

from __future__ import annotations

import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

DEFAULT_D_FEAT = 4096
DEFAULT_D_EMB = 128

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN_RE = re.compile(r"[^\W_]+")


def fnv1a_64(data: Union[str, bytes]) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _term_hash(term: str) -> int:
    return fnv1a_64(term)


def tokenize(text: str) -> List[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalised term vector; ``indices`` are sorted and unique."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))


def featurize(text: str, d_feat: int = DEFAULT_D_FEAT) -> FeatureVector:
    if d_feat < 1:
        raise ConfigError("d_feat must be >= 1")
    counts = Counter(tokenize(text))
    if not counts:
        return FeatureVector(d_feat, np.zeros(0, dtype=np.int64), np.zeros(0))
    acc = {}
    for term, tf in counts.items():
        idx = _term_hash(term) % d_feat
        acc[idx] = acc.get(idx, 0.0) + 1.0 + math.log(tf)
    indices = np.array(sorted(acc), dtype=np.int64)
    values = np.array([acc[i] for i in indices.tolist()])
    values /= np.sqrt(np.dot(values, values))
    return FeatureVector(d_feat, indices, values)


def random_projection(d_feat: int, d_emb: int, seed: int) -> np.ndarray:
    """Entries i.i.d. uniform on [-1, 1] from numpy's PCG64 ``default_rng(seed)``,
    drawn in row-major order (row = feature index)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(d_feat, d_emb))


class PassageEncoder:
    """Frozen passage encoder. The projection matrix is read-only."""

    def __init__(self, d_feat: int = DEFAULT_D_FEAT, d_emb: int = DEFAULT_D_EMB,
                 projection_seed: int = 0, projection: Optional[np.ndarray] = None):
        if d_feat < 1 or d_emb < 1:
            raise ConfigError("d_feat and d_emb must be positive")
        if projection is None:
            projection = random_projection(d_feat, d_emb, projection_seed)
        else:
            projection = np.array(projection, dtype=np.float64)
            if projection.shape != (d_feat, d_emb):
                raise ConfigError(
                    f"projection shape {projection.shape} != ({d_feat}, {d_emb})")
        projection.setflags(write=False)
        self._d_feat = d_feat
        self._d_emb = d_emb
        self._seed = projection_seed
        self._projection = projection

    @classmethod
    def identity(cls, dim: int) -> "PassageEncoder":
        """Test hook: R = I, so embeddings equal feature vectors."""
        return cls(dim, dim, projection=np.eye(dim))

    @property
    def d_feat(self):
        return self._d_feat

    @property
    def d_emb(self):
        return self._d_emb

    @property
    def projection_seed(self):
        return self._seed

    @property
    def projection(self) -> np.ndarray:
        return self._projection

    def __repr__(self):
        return f"PassageEncoder(d_feat={self._d_feat}, d_emb={self._d_emb}, projection_seed={self._seed})"


def project(matrix: np.ndarray, fv: FeatureVector) -> np.ndarray:
    """matrix^T . fv for a sparse feature vector."""
    if fv.dim != matrix.shape[0]:
        raise ConfigError(f"feature dimension {fv.dim} != matrix rows {matrix.shape[0]}")
    if fv.nnz == 0:
        return np.zeros(matrix.shape[1])
    return fv.values @ matrix[fv.indices]


def encode_passage(encoder: PassageEncoder, text: str) -> np.ndarray:
    v = project(encoder.projection, featurize(text, encoder.d_feat))
    n = np.sqrt(np.dot(v, v))
    if n == 0.0:
        return v
    return v / n


@dataclass
class QueryEncoderParams:
    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ConfigError("W must be a 2-D matrix")
        if not np.all(np.isfinite(self.W)):
            raise ValidationError("W contains non-finite entries")

    @property
    def d_feat(self):
        return self.W.shape[0]

    @property
    def d_emb(self):
        return self.W.shape[1]

    @classmethod
    def from_encoder(cls, encoder: PassageEncoder) -> "QueryEncoderParams":
        """Initialise W to the passage projection R."""
        return cls(encoder.projection.copy())

    def copy(self) -> "QueryEncoderParams":
        return QueryEncoderParams(self.W.copy())


def encode_query(params: QueryEncoderParams, text: Union[str, FeatureVector]) -> np.ndarray:
    fv = featurize(text, params.d_feat) if isinstance(text, str) else text
    return project(params.W, fv)


def similarity(qv: np.ndarray, pv: np.ndarray) -> float:
    qv = np.asarray(qv)
    pv = np.asarray(pv)
    if qv.shape != pv.shape:
        raise ValidationError(f"dimension mismatch: {qv.shape} vs {pv.shape}")
    return float(np.dot(qv, pv))


# --- embedding export --------------------------------------------------------
#
# Binary layout (little endian):
#   magic b"HDEM" | uint32 d_emb | uint64 count
#   count x ( uint32 id_len | id bytes (utf-8) | d_emb x float64 )

EMBED_MAGIC = b"HDEM"
_HEADER = struct.Struct("<4sIQ")
_IDLEN = struct.Struct("<I")


def write_embeddings(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValidationError("embedding matrix must have one row per id")
    with Path(path).open("wb") as fh:
        write_embeddings_to(fh, ids, matrix)


def write_embeddings_to(fh, ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype="<f8")
    fh.write(_HEADER.pack(EMBED_MAGIC, matrix.shape[1], len(ids)))
    for pid, row in zip(ids, matrix):
        raw = pid.encode("utf-8")
        fh.write(_IDLEN.pack(len(raw)))
        fh.write(raw)
        fh.write(row.tobytes())


def read_embeddings_from(fh, path="<stream>") -> Tuple[List[str], np.ndarray]:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValidationError(f"{path}: truncated embedding header")
    magic, d_emb, count = _HEADER.unpack(head)
    if magic != EMBED_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    ids = []
    matrix = np.empty((count, d_emb))
    for r in range(count):
        raw = fh.read(_IDLEN.size)
        if len(raw) != _IDLEN.size:
            raise ValidationError(f"{path}: truncated at record {r}")
        (n,) = _IDLEN.unpack(raw)
        ids.append(fh.read(n).decode("utf-8"))
        buf = fh.read(8 * d_emb)
        if len(buf) != 8 * d_emb:
            raise ValidationError(f"{path}: truncated at record {r}")
        matrix[r] = np.frombuffer(buf, dtype="<f8")
    return ids, matrix


def read_embeddings(path) -> Tuple[List[str], np.ndarray]:
    with Path(path).open("rb") as fh:
        out = read_embeddings_from(fh, path)
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after the last record")
    return out


def write_embeddings_text(path, rows: Iterable[Tuple[str, np.ndarray]]) -> None:
    """``id<TAB>v1,v2,...`` with round-trip precision (17 significant digits)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pid, vec in rows:
            fh.write(pid + "\t" + ",".join(format(float(x), ".17g") for x in vec) + "\n")


def read_embeddings_text(path) -> List[Tuple[str, np.ndarray]]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            pid, sep, values = line.partition("\t")
            if not sep:
                raise ParseError(path, lineno, "missing TAB separator")
            try:
                vec = np.array([float(x) for x in values.split(",")])
            except ValueError:
                raise ParseError(path, lineno, "non-numeric value") from None
            rows.append((pid, vec))
    return rows
