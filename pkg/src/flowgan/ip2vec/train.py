"""Skip-gram style training of flow-token embeddings with negative sampling."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..flows import FlowRecord
from . import kernels
from .store import EmbeddingStore
from .vocab import Vocabulary, build_vocabulary, pair_array

logger = logging.getLogger(__name__)


@dataclass
class IP2VecConfig:
    dim: int = 20
    epochs: int = 10
    negatives: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001 * 0.025
    noise_power: float = 0.75
    extended: bool = True
    chunk_size: int = 65536
    seed: int = 0
    # "auto": kinds that never occur as a pair input export their output-side rows
    embedding_side: str = "auto"

    def __post_init__(self):
        if self.embedding_side not in ("auto", "input"):
            raise ValueError("embedding_side must be 'auto' or 'input'")

    def to_dict(self) -> dict:
        return asdict(self)


def noise_distribution(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    """Unigram counts raised to ``power`` and normalized."""
    weights = np.asarray(counts, dtype=np.float64) ** power
    total = weights.sum()
    if total <= 0:
        raise ValueError("noise distribution needs at least one positive count")
    return weights / total


def draw_negatives(cdf: np.ndarray, shape, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of token indices from a cumulative noise table."""
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return np.minimum(idx, cdf.shape[0] - 1).astype(np.int64)


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def pair_objective(v: np.ndarray, u_pos: np.ndarray, u_neg: np.ndarray):
    """Negative-sampling loss of one pair and its gradients.

    loss = -log s(u_pos.v) - sum_j log s(-u_neg[j].v). Returns
    ``(loss, d/dv, d/du_pos, d/du_neg)``.
    """
    s_pos = u_pos @ v
    s_neg = u_neg @ v
    loss = -log_sigmoid(s_pos) - log_sigmoid(-s_neg).sum()
    c_pos = 1.0 / (1.0 + np.exp(-s_pos)) - 1.0
    c_neg = 1.0 / (1.0 + np.exp(-s_neg))
    grad_v = c_pos * u_pos + c_neg @ u_neg
    grad_pos = c_pos * v
    grad_neg = np.outer(c_neg, v)
    return float(loss), grad_v, grad_pos, grad_neg


def mean_pair_loss(store_in: np.ndarray, store_out: np.ndarray, pairs: np.ndarray,
                   negatives: np.ndarray) -> float:
    """Mean negative-sampling loss with fixed negatives (for monitoring)."""
    v = store_in[pairs[:, 0]]
    s_pos = np.einsum("ij,ij->i", store_out[pairs[:, 1]], v)
    s_neg = np.einsum("ikj,ij->ik", store_out[negatives], v)
    mask = negatives != pairs[:, 1:2]
    loss = -log_sigmoid(s_pos) - (log_sigmoid(-s_neg) * mask).sum(axis=1)
    return float(loss.mean())


def init_weights(size: int, dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(size, dim))
    w_out = np.zeros((size, dim))
    return w_in, w_out


def train_pairs(pairs: np.ndarray, vocab: Vocabulary, config: IP2VecConfig,
                backend: str | None = None, init: tuple[np.ndarray, np.ndarray] | None = None
                ) -> EmbeddingStore:
    """Train embeddings on an ``(n, 2)`` array of (input, output) token indices.

    Pairs are shuffled every epoch; the learning rate decays linearly from
    ``learning_rate`` to ``min_learning_rate`` over the whole run. The
    noise distribution is unigram frequency of output tokens raised to
    ``noise_power``. With a fixed seed the result is bit-reproducible.
    """
    pairs = np.ascontiguousarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[0] == 0:
        raise ValueError("no training pairs")
    if config.dim < 1 or config.negatives < 1:
        raise ValueError("dim and negatives must be >= 1")
    if pairs.min() < 0 or pairs.max() >= len(vocab):
        raise ValueError("pair index outside vocabulary")
    kernel = kernels.get_kernel(backend)
    rng = np.random.default_rng(config.seed)
    if init is None:
        w_in, w_out = init_weights(len(vocab), config.dim, rng)
    else:
        w_in, w_out = (np.array(a, dtype=np.float64, order="C") for a in init)
    counts = np.bincount(pairs[:, 1], minlength=len(vocab)).astype(np.uint64)
    cdf = np.cumsum(noise_distribution(counts, config.noise_power))
    n = pairs.shape[0]
    total_steps = n * config.epochs
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.chunk_size):
            idx = order[start:start + config.chunk_size]
            chunk = pairs[idx]
            negs = draw_negatives(cdf, (chunk.shape[0], config.negatives), rng)
            progress = (step + np.arange(chunk.shape[0])) / total_steps
            lrs = np.maximum(config.learning_rate * (1.0 - progress), config.min_learning_rate)
            epoch_loss += kernel(w_in, w_out, np.ascontiguousarray(chunk[:, 0]),
                                 np.ascontiguousarray(chunk[:, 1]), negs, lrs)
            step += chunk.shape[0]
        history.append(epoch_loss / n)
        logger.info("ip2vec epoch %d/%d mean loss %.5f", epoch + 1, config.epochs, history[-1])
        if not np.isfinite(history[-1]):
            raise FloatingPointError(f"non-finite embedding loss in epoch {epoch + 1}")
    emb = w_in if config.embedding_side == "input" else exported_embeddings(w_in, w_out, pairs, vocab)
    store = EmbeddingStore(vocab, emb, w_out, counts)
    store.loss_history = history
    return store


def exported_embeddings(w_in: np.ndarray, w_out: np.ndarray, pairs: np.ndarray,
                        vocab: Vocabulary) -> np.ndarray:
    """Input-side rows, except for kinds no pair ever uses as input.

    Such tokens receive gradient only through their output-side rows, so
    those rows are their learned representation. Tokens that were never an
    output either keep their input-side row.
    """
    as_input = np.zeros(len(vocab), dtype=bool)
    as_input[pairs[:, 0]] = True
    as_output = np.zeros(len(vocab), dtype=bool)
    as_output[pairs[:, 1]] = True
    emb = w_in.copy()
    for kind in vocab.kinds:
        r = vocab.partition(kind)
        if not as_input[r.start:r.stop].any():
            rows = np.arange(r.start, r.stop)[as_output[r.start:r.stop]]
            emb[rows] = w_out[rows]
    return emb


def train(flows: Sequence[FlowRecord], config: IP2VecConfig | None = None,
          vocab: Vocabulary | None = None, backend: str | None = None) -> EmbeddingStore:
    """Build the vocabulary, extract pairs and train embeddings for a corpus."""
    config = config or IP2VecConfig()
    if not flows:
        raise ValueError("cannot train embeddings on an empty corpus")
    vocab = vocab or build_vocabulary(flows, extended=config.extended)
    pairs = pair_array(flows, vocab, extended=config.extended)
    return train_pairs(pairs, vocab, config, backend=backend)
