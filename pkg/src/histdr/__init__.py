"""History-aware conversational dense retrieval at desk scale.

A hashed bag-of-words feature map and a fixed random projection stand in for
a pretrained passage encoder; only a linear query encoder is trained. The
package covers pseudo relevance judgment of historical turns, denoised query
reformulation, mining of historical positives and negatives, contrastive
training, retrieval, TREC-style evaluation and the analyses built on them.
"""

__version__ = "0.1.0"

from .corpus import Passage, Session, Turn, derive_qrels, load_collection, load_sessions
from .encode import PassageEncoder, QueryEncoderParams, featurize
from .errors import (ConfigError, HistdrError, MissingArtifactError, NumericalError, ParseError,
                     StaleArtifactError, ValidationError)
from .evaluation import MetricSpec, evaluate
from .index import DenseIndex, RankedList, search
from .prj import GOLD, HistoryMode, judge_all
from .retrieval import Retriever
from .supervision import MiningConfig, build_instances, reformulate
from .trainer import TrainConfig, train

__all__ = [
    "Passage", "Session", "Turn", "derive_qrels", "load_collection", "load_sessions",
    "PassageEncoder", "QueryEncoderParams", "featurize",
    "ConfigError", "HistdrError", "MissingArtifactError", "NumericalError", "ParseError",
    "StaleArtifactError", "ValidationError",
    "MetricSpec", "evaluate", "DenseIndex", "RankedList", "search",
    "GOLD", "HistoryMode", "judge_all", "Retriever",
    "MiningConfig", "build_instances", "reformulate", "TrainConfig", "train",
]
