"""Reversible flow <-> vector transformations: numeric (N), binary (B), embedding (E).

Every method shares the same preliminaries: seven weekday indicator slots, a
daytime slot (seconds since midnight / 86400), three protocol indicators and
six TCP flag bits. The remaining attributes are encoded per method:

* N: IP octets / 255, ports / 65535, min-max normalized duration, bytes, packets
* B: IP octets as 8 bits each, ports as 16 bits, bytes and packets as 32 bits
  (all most-significant bit first), min-max normalized duration
* E: the IP2Vec embedding of IPs, ports, duration, bytes and packets
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from .flows import PROTOCOLS, FlowRecord, int_to_ip, ip_to_int
from .ip2vec.store import EmbeddingStore
from .ip2vec.vocab import ATTRIBUTE_KIND, token_value

SCHEMA_FORMAT = "flowgan-encoding-schema"
SCHEMA_VERSION = 1
DEFAULT_WEEK_START = date(2017, 3, 13)  # a Monday
NORMALIZED = ("duration", "bytes", "packets")
EMBEDDED = ("duration", "src_ip", "src_port", "dst_ip", "dst_port", "bytes", "packets")
MAX_COUNT = 2**32 - 1
_MS_PER_DAY = 86_400_000


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Slot:
    attribute: str
    offset: int
    width: int
    codec: str

    @property
    def stop(self) -> int:
        return self.offset + self.width


_LAYOUTS: dict[str, list[tuple[str, object]]] = {
    "N": [("weekday", (7, "onehot")), ("daytime", (1, "unit")), ("duration", (1, "minmax")),
          ("proto", (3, "onehot")), ("src_ip", (4, "octet")), ("src_port", (1, "port")),
          ("dst_ip", (4, "octet")), ("dst_port", (1, "port")), ("bytes", (1, "minmax")),
          ("packets", (1, "minmax")), ("tcp_flags", (6, "bits"))],
    "B": [("weekday", (7, "onehot")), ("daytime", (1, "unit")), ("duration", (1, "minmax")),
          ("proto", (3, "onehot")), ("src_ip", (32, "bits")), ("src_port", (16, "bits")),
          ("dst_ip", (32, "bits")), ("dst_port", (16, "bits")), ("bytes", (32, "bits")),
          ("packets", (32, "bits")), ("tcp_flags", (6, "bits"))],
    "E": [("weekday", (7, "onehot")), ("daytime", (1, "unit")), ("duration", ("m", "embedding")),
          ("proto", (3, "onehot")), ("src_ip", ("m", "embedding")), ("src_port", ("m", "embedding")),
          ("dst_ip", ("m", "embedding")), ("dst_port", ("m", "embedding")),
          ("bytes", ("m", "embedding")), ("packets", ("m", "embedding")), ("tcp_flags", (6, "bits"))],
}


@dataclass
class EncodingSchema:
    method: str
    slots: list[Slot]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    embedding_dim: int | None = None
    week_start: date = DEFAULT_WEEK_START
    embedding_store: str | None = None

    def __post_init__(self):
        for attr, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise EncodingError(f"bounds for {attr} need min < max, got ({lo}, {hi})")

    @classmethod
    def create(cls, method: str, bounds: Mapping[str, tuple[float, float]] | None = None,
               embedding_dim: int | None = None, **kwargs) -> "EncodingSchema":
        method = method.upper()
        if method not in _LAYOUTS:
            raise EncodingError(f"unknown encoding method {method!r}")
        if method == "E" and not embedding_dim:
            raise EncodingError("method E needs the embedding dimension")
        slots, pos = [], 0
        for attr, (width, codec) in _LAYOUTS[method]:
            w = embedding_dim if width == "m" else width
            slots.append(Slot(attr, pos, int(w), codec))
            pos += int(w)
        needed = {s.attribute for s in slots if s.codec == "minmax"}
        bounds = {k: (float(v[0]), float(v[1])) for k, v in (bounds or {}).items() if k in needed}
        missing = needed - set(bounds)
        if missing:
            raise EncodingError(f"method {method} needs fitted bounds for {sorted(missing)}")
        return cls(method, slots, bounds, embedding_dim if method == "E" else None, **kwargs)

    @property
    def width(self) -> int:
        return sum(s.width for s in self.slots)

    def slot(self, attribute: str) -> Slot:
        for s in self.slots:
            if s.attribute == attribute:
                return s
        raise KeyError(attribute)

    def output_activation(self) -> str | tuple[str, ...]:
        """Generator output activation: sigmoid on bounded slots, linear on embeddings."""
        if self.method != "E":
            return "sigmoid"
        acts: list[str] = []
        for s in self.slots:
            acts.extend(["linear" if s.codec == "embedding" else "sigmoid"] * s.width)
        return tuple(acts)

    def to_dict(self) -> dict:
        return {
            "format": SCHEMA_FORMAT,
            "version": SCHEMA_VERSION,
            "method": self.method,
            "width": self.width,
            "slots": [{"attribute": s.attribute, "offset": s.offset, "width": s.width, "codec": s.codec}
                      for s in self.slots],
            "bounds": {k: list(v) for k, v in sorted(self.bounds.items())},
            "embedding_dim": self.embedding_dim,
            "embedding_store": self.embedding_store,
            "week_start": self.week_start.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncodingSchema":
        if d.get("format") != SCHEMA_FORMAT or d.get("version") != SCHEMA_VERSION:
            raise EncodingError("not a version-1 encoding schema")
        schema = cls(d["method"], [Slot(**s) for s in d["slots"]],
                     {k: tuple(v) for k, v in d["bounds"].items()}, d.get("embedding_dim"),
                     date.fromisoformat(d["week_start"]), d.get("embedding_store"))
        if schema.width != d["width"]:
            raise EncodingError("slot widths do not add up to the recorded width")
        return schema

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EncodingSchema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_bounds(flows: Sequence[FlowRecord], attributes: Sequence[str] = NORMALIZED,
               overrides: Mapping[str, tuple[float, float]] | None = None) -> dict[str, tuple[float, float]]:
    """Per-attribute (min, max) over a training corpus; ``overrides`` replace fitted values."""
    if not flows:
        raise EncodingError("cannot fit bounds on an empty corpus")
    overrides = overrides or {}
    bounds = {}
    for attr in attributes:
        if attr in overrides:
            bounds[attr] = tuple(float(x) for x in overrides[attr])
            continue
        values = np.fromiter((getattr(f, attr) for f in flows), dtype=np.float64, count=len(flows))
        lo, hi = float(values.min()), float(values.max())
        if not lo < hi:
            raise EncodingError(f"{attr} is constant ({lo}) in the training data; pass a bounds override")
        bounds[attr] = (lo, hi)
    return bounds


def build_schema(method: str, flows: Sequence[FlowRecord] | None = None,
                 store: EmbeddingStore | None = None, **kwargs) -> EncodingSchema:
    """Schema for ``method`` with bounds fitted on ``flows`` (N, B) or the store's width (E)."""
    method = method.upper()
    overrides = kwargs.pop("bounds", None)
    if method == "E":
        if store is None:
            raise EncodingError("method E needs an embedding store")
        return EncodingSchema.create("E", embedding_dim=store.dim, **kwargs)
    attrs = NORMALIZED if method == "N" else ("duration",)
    return EncodingSchema.create(method, fit_bounds(flows or [], attrs, overrides), **kwargs)


# ----------------------------------------------------------------- encoding

def _bits(values: np.ndarray, n_bits: int) -> np.ndarray:
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.uint64)
    return ((values.astype(np.uint64)[:, None] >> shifts) & 1).astype(np.float64)


def _from_bits(bits: np.ndarray) -> np.ndarray:
    n_bits = bits.shape[1]
    weights = (np.uint64(1) << np.arange(n_bits - 1, -1, -1, dtype=np.uint64))
    return ((bits > 0.5).astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


def _columns(flows: Sequence[FlowRecord]) -> dict[str, np.ndarray]:
    n = len(flows)
    return {
        "weekday": np.fromiter((f.weekday for f in flows), np.int64, n),
        "seconds": np.fromiter((f.seconds_of_day for f in flows), np.float64, n),
        "duration": np.fromiter((f.duration for f in flows), np.float64, n),
        "proto": np.fromiter((PROTOCOLS.index(f.proto) for f in flows), np.int64, n),
        "src_ip": np.fromiter((ip_to_int(f.src_ip) for f in flows), np.int64, n),
        "dst_ip": np.fromiter((ip_to_int(f.dst_ip) for f in flows), np.int64, n),
        "src_port": np.fromiter((f.src_port for f in flows), np.int64, n),
        "dst_port": np.fromiter((f.dst_port for f in flows), np.int64, n),
        "bytes": np.fromiter((f.bytes for f in flows), np.int64, n),
        "packets": np.fromiter((f.packets for f in flows), np.int64, n),
        "tcp_flags": np.array([f.tcp_flags for f in flows], dtype=np.float64).reshape(n, 6),
    }


def _onehot(index: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((index.shape[0], width))
    out[np.arange(index.shape[0]), index] = 1.0
    return out


def encode_preliminaries(flow: FlowRecord) -> np.ndarray:
    """The 17 method-independent slots: weekday one-hot, daytime, protocol one-hot, flags."""
    c = _columns([flow])
    return np.concatenate([_onehot(c["weekday"], 7)[0], [c["seconds"][0] / 86400.0],
                           _onehot(c["proto"], 3)[0], c["tcp_flags"][0]])


def encode_many(flows: Sequence[FlowRecord], schema: EncodingSchema,
                store: EmbeddingStore | None = None) -> np.ndarray:
    """Encode a corpus into an ``(n, schema.width)`` matrix."""
    n = len(flows)
    out = np.zeros((n, schema.width))
    if n == 0:
        return out
    c = _columns(flows)
    if schema.method == "B" and (c["bytes"].max() > MAX_COUNT or c["packets"].max() > MAX_COUNT):
        raise EncodingError("bytes and packets must be < 2^32 for binary encoding")
    if schema.method == "E" and store is None:
        raise EncodingError("method E needs an embedding store")
    for s in schema.slots:
        a = s.attribute
        if a == "weekday":
            block = _onehot(c["weekday"], 7)
        elif a == "daytime":
            block = (c["seconds"] / 86400.0)[:, None]
        elif a == "proto":
            block = _onehot(c["proto"], 3)
        elif a == "tcp_flags":
            block = c["tcp_flags"]
        elif s.codec == "minmax":
            lo, hi = schema.bounds[a]
            block = np.clip((c[a] - lo) / (hi - lo), 0.0, 1.0)[:, None]
        elif s.codec == "octet":
            v = c[a]
            block = np.stack([(v >> sh) & 255 for sh in (24, 16, 8, 0)], axis=1) / 255.0
        elif s.codec == "port":
            block = (c[a] / 65535.0)[:, None]
        elif s.codec == "bits":
            block = _bits(c[a], s.width)
        elif s.codec == "embedding":
            block = _embed_column(flows, a, store)
        else:
            raise EncodingError(f"unknown codec {s.codec}")
        out[:, s.offset:s.stop] = block
    return out


def _embed_column(flows: Sequence[FlowRecord], attribute: str, store: EmbeddingStore) -> np.ndarray:
    kind = ATTRIBUTE_KIND[attribute]
    idx = np.empty(len(flows), dtype=np.int64)
    for i, f in enumerate(flows):
        value = token_value(attribute, getattr(f, attribute))
        j = store.vocab.get(kind, value)
        if j is None:
            raise EncodingError(f"{attribute} token {value!r} not in the embedding vocabulary")
        idx[i] = j
    return store.embeddings[idx]


def encode(flow: FlowRecord, schema: EncodingSchema, store: EmbeddingStore | None = None) -> np.ndarray:
    return encode_many([flow], schema, store)[0]


def encode_numeric(flow: FlowRecord, schema: EncodingSchema) -> np.ndarray:
    if schema.method != "N":
        raise EncodingError("schema is not a numeric (N) schema")
    return encode(flow, schema)


def encode_binary(flow: FlowRecord, schema: EncodingSchema) -> np.ndarray:
    if schema.method != "B":
        raise EncodingError("schema is not a binary (B) schema")
    return encode(flow, schema)


def encode_embedding(flow: FlowRecord, schema: EncodingSchema, store: EmbeddingStore) -> np.ndarray:
    if schema.method != "E":
        raise EncodingError("schema is not an embedding (E) schema")
    return encode(flow, schema, store)


# ----------------------------------------------------------------- decoding

def decode_many(vectors: np.ndarray, schema: EncodingSchema,
                store: EmbeddingStore | None = None) -> list[FlowRecord]:
    """Turn (generated) vectors back into flows.

    Indicator groups decode by argmax, bits and flags by a 0.5 threshold,
    bounded slots are clamped before de-normalization, and embedding slots
    become the cosine-nearest token of their vocabulary partition.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[1] != schema.width:
        raise EncodingError(f"vector width {vectors.shape[1]} != schema width {schema.width}")
    if schema.method == "E" and store is None:
        raise EncodingError("decoding method E needs the embedding store")
    n = vectors.shape[0]
    cols: dict[str, object] = {}
    for s in schema.slots:
        a = s.attribute
        block = vectors[:, s.offset:s.stop]
        if a in ("weekday", "proto"):
            cols[a] = np.argmax(block, axis=1)
        elif a == "daytime":
            ms = np.round(np.clip(block[:, 0], 0.0, 1.0) * _MS_PER_DAY)
            cols[a] = np.minimum(ms, _MS_PER_DAY - 1).astype(np.int64)
        elif a == "tcp_flags":
            cols[a] = block > 0.5
        elif s.codec == "minmax":
            lo, hi = schema.bounds[a]
            v = lo + np.clip(block[:, 0], 0.0, 1.0) * (hi - lo)
            cols[a] = np.round(v, 3) if a == "duration" else np.maximum(np.round(v), 1).astype(np.int64)
        elif s.codec == "octet":
            octets = np.clip(np.round(block * 255.0), 0, 255).astype(np.int64)
            cols[a] = (octets[:, 0] << 24) | (octets[:, 1] << 16) | (octets[:, 2] << 8) | octets[:, 3]
        elif s.codec == "port":
            cols[a] = np.clip(np.round(block[:, 0] * 65535.0), 0, 65535).astype(np.int64)
        elif s.codec == "bits":
            v = _from_bits(block).astype(np.int64)
            cols[a] = np.maximum(v, 1) if a in ("bytes", "packets") else v
        elif s.codec == "embedding":
            kind = ATTRIBUTE_KIND[a]
            idx = store.nearest_indices(block, kind)  # type: ignore[union-attr]
            tokens = store.vocab.tokens[kind]  # type: ignore[union-attr]
            cols[a] = [tokens[i] for i in idx]
        else:
            raise EncodingError(f"unknown codec {s.codec}")

    start = datetime.combine(schema.week_start, datetime.min.time())
    flows = []
    for r in range(n):
        def ip(attr):
            v = cols[attr][r]
            return v if isinstance(v, str) else int_to_ip(int(v))

        def num(attr, cast):
            v = cols[attr][r]
            return cast(v)

        flows.append(FlowRecord(
            date_first_seen=start + timedelta(days=int(cols["weekday"][r]),
                                              milliseconds=int(cols["daytime"][r])),
            duration=round(num("duration", float), 3),
            proto=PROTOCOLS[int(cols["proto"][r])],
            src_ip=ip("src_ip"),
            src_port=num("src_port", int),
            dst_ip=ip("dst_ip"),
            dst_port=num("dst_port", int),
            bytes=num("bytes", int),
            packets=num("packets", int),
            tcp_flags=tuple(bool(x) for x in cols["tcp_flags"][r]),  # type: ignore[arg-type]
        ))
    return flows


def decode(vector: np.ndarray, schema: EncodingSchema, store: EmbeddingStore | None = None) -> FlowRecord:
    return decode_many(np.asarray(vector)[None, :], schema, store)[0]
