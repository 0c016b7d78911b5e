"""IP2Vec-style embeddings of flow attribute values."""

from .kernels import BACKEND
from .store import EmbeddingStore
from .train import IP2VecConfig, train, train_pairs
from .vocab import (EXTENDED_SCHEMA, ORIGINAL_SCHEMA, Vocabulary, build_vocabulary,
                    generate_pairs, pair_array)

__all__ = [
    "BACKEND", "EmbeddingStore", "IP2VecConfig", "train", "train_pairs",
    "EXTENDED_SCHEMA", "ORIGINAL_SCHEMA", "Vocabulary", "build_vocabulary",
    "generate_pairs", "pair_array",
]
