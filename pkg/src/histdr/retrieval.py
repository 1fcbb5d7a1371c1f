"""A retriever bundles a collection, its frozen index, and query-encoder weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .corpus import Passage
from .encode import PassageEncoder, QueryEncoderParams, encode_query, featurize
from .index import DenseIndex, RankedList, build, search


@dataclass
class Retriever:
    collection: Mapping[str, Passage]
    encoder: PassageEncoder
    index: DenseIndex
    params: Optional[QueryEncoderParams] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.params is None:
            self.params = QueryEncoderParams(self.encoder.projection)

    @classmethod
    def from_collection(cls, collection, encoder, params=None) -> "Retriever":
        return cls(collection, encoder, build(collection, encoder), params)

    def with_params(self, params: QueryEncoderParams) -> "Retriever":
        return Retriever(self.collection, self.encoder, self.index, params)

    def encode(self, text: str) -> np.ndarray:
        return encode_query(self.params, featurize(text, self.encoder.d_feat))

    def retrieve(self, text: str, k: int, query_id: str = "") -> RankedList:
        # results are a pure function of (text, k) for fixed params
        key = (text, k)
        hit = self._cache.get(key)
        if hit is None:
            hit = search(self.index, self.encode(text), k)
            self._cache[key] = hit
        return RankedList(query_id, hit.hits) if query_id else hit

    def text(self, pid: str) -> str:
        return self.collection[pid].text
