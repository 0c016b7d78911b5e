"""Learned token embeddings: lookup, cosine similarity, nearest neighbour, persistence.

File layout (all integers little-endian)::

    magic       8 bytes  b"IP2VEC\\r\\n"
    version     uint16   (1)
    flags       uint16   bit 0 set: output-side weights follow the embeddings
    m           uint32   embedding width
    size        uint32   number of tokens |V|
    n_kinds     uint32
    n_kinds x   uint8 name length, ASCII kind name, uint32 token count
    size x      uint16 byte length, UTF-8 token value   (index order)
    size x      uint64 unigram count
    size*m      float64 input-side weights, row-major
    [size*m     float64 output-side weights, row-major]
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .vocab import ATTRIBUTE_KIND, Vocabulary, token_value

MAGIC = b"IP2VEC\r\n"
VERSION = 1
_CHUNK = 2048


class StoreFormatError(ValueError):
    pass


class EmbeddingStore:
    def __init__(self, vocab: Vocabulary, embeddings: np.ndarray,
                 output_weights: np.ndarray | None = None, counts: np.ndarray | None = None):
        embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
        if embeddings.shape[0] != len(vocab):
            raise ValueError("embedding rows must match vocabulary size")
        self.vocab = vocab
        self.embeddings = embeddings
        self.output_weights = output_weights
        self.counts = (np.zeros(len(vocab), dtype=np.uint64) if counts is None
                       else np.asarray(counts, dtype=np.uint64))
        self.loss_history: list[float] = []
        self._normed: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def lookup(self, kind: str, value) -> np.ndarray:
        """Embedding of a token given by partition and value (string or number)."""
        attr = "duration" if kind == "duration" else kind
        return self.embeddings[self.vocab.index(kind, token_value(attr, value))]

    def lookup_attribute(self, attribute: str, value) -> np.ndarray:
        kind = ATTRIBUTE_KIND[attribute]
        key = token_value(attribute, value)
        idx = self.vocab.get(kind, key)
        if idx is None:
            raise KeyError(f"{attribute} token {key!r} not in vocabulary")
        return self.embeddings[idx]

    def similarity(self, a: tuple[str, str], b: tuple[str, str]) -> float:
        """Cosine similarity of two ``(kind, value)`` tokens."""
        va = self.lookup(*a)
        vb = self.lookup(*b)
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0 or nb == 0:
            raise ValueError("cosine similarity undefined for a zero-norm embedding")
        return float(np.dot(va, vb) / (na * nb))

    def _partition_normed(self, kind: str) -> np.ndarray:
        if kind not in self._normed:
            part = self.embeddings[self.vocab.offsets[kind]:self.vocab.offsets[kind]
                                   + len(self.vocab.tokens[kind])]
            norms = np.linalg.norm(part, axis=1, keepdims=True)
            self._normed[kind] = part / np.where(norms == 0, 1.0, norms)
        return self._normed[kind]

    def nearest_indices(self, queries: np.ndarray, kind: str) -> np.ndarray:
        """Partition-local index of the most cosine-similar token for each query row.

        Ties go to the lowest index; an all-zero query falls back to the
        Euclidean nearest neighbour.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if not self.vocab.tokens.get(kind):
            raise ValueError(f"partition {kind!r} is empty")
        normed = self._partition_normed(kind)
        out = np.empty(queries.shape[0], dtype=np.int64)
        qnorm = np.linalg.norm(queries, axis=1)
        for start in range(0, queries.shape[0], _CHUNK):
            q = queries[start:start + _CHUNK]
            n = qnorm[start:start + _CHUNK]
            scores = (q / np.where(n == 0, 1.0, n)[:, None]) @ normed.T
            out[start:start + _CHUNK] = np.argmax(scores, axis=1)
        zero = np.flatnonzero(qnorm == 0)
        if zero.size:
            part = self.embeddings[self.vocab.partition(kind).start:self.vocab.partition(kind).stop]
            for r in zero:
                out[r] = int(np.argmin(((part - queries[r]) ** 2).sum(axis=1)))
        return out

    def nearest(self, query: np.ndarray, kind: str) -> str:
        return self.vocab.tokens[kind][int(self.nearest_indices(query, kind)[0])]

    def nearest_many(self, queries: np.ndarray, kind: str) -> list[str]:
        tokens = self.vocab.tokens[kind]
        return [tokens[i] for i in self.nearest_indices(queries, kind)]

    # ----------------------------------------------------------------- io
    def save(self, path: str | os.PathLike, include_output: bool = True) -> None:
        vocab = self.vocab
        has_out = include_output and self.output_weights is not None
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<HHIII", VERSION, int(has_out), self.dim, len(vocab), len(vocab.kinds)))
            for kind in vocab.kinds:
                name = kind.encode("ascii")
                fh.write(struct.pack("<B", len(name)) + name + struct.pack("<I", len(vocab.tokens[kind])))
            for kind in vocab.kinds:
                for tok in vocab.tokens[kind]:
                    raw = tok.encode("utf-8")
                    fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(self.counts.astype("<u8").tobytes())
            fh.write(self.embeddings.astype("<f8").tobytes())
            if has_out:
                fh.write(np.asarray(self.output_weights).astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EmbeddingStore":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != MAGIC:
            raise StoreFormatError(f"{path}: not an embedding store")
        version, flags, m, size, n_kinds = struct.unpack_from("<HHIII", data, 8)
        if version != VERSION:
            raise StoreFormatError(f"{path}: unsupported store version {version}")
        pos = 8 + struct.calcsize("<HHIII")
        layout = []
        for _ in range(n_kinds):
            (ln,) = struct.unpack_from("<B", data, pos)
            pos += 1
            kind = data[pos:pos + ln].decode("ascii")
            pos += ln
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            layout.append((kind, count))
        tokens: dict[str, list[str]] = {}
        for kind, count in layout:
            values = []
            for _ in range(count):
                (ln,) = struct.unpack_from("<H", data, pos)
                pos += 2
                values.append(data[pos:pos + ln].decode("utf-8"))
                pos += ln
            tokens[kind] = values
        vocab = Vocabulary(tokens)
        if len(vocab) != size:
            raise StoreFormatError(f"{path}: token table does not match header")
        counts = np.frombuffer(data, dtype="<u8", count=size, offset=pos).astype(np.uint64)
        pos += 8 * size
        emb = np.frombuffer(data, dtype="<f8", count=size * m, offset=pos).reshape(size, m).astype(np.float64)
        pos += 8 * size * m
        out = None
        if flags & 1:
            out = np.frombuffer(data, dtype="<f8", count=size * m, offset=pos).reshape(size, m).astype(np.float64)
        return cls(vocab, emb, out, counts)
