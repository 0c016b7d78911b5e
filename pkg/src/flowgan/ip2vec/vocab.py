"""Kind-tagged token vocabulary and training-pair extraction."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..flows import FlowRecord, format_duration, ip_to_int

KINDS = ("ip", "port", "proto", "duration", "bytes", "packets")

# Flow attribute -> vocabulary partition.
ATTRIBUTE_KIND = {
    "src_ip": "ip",
    "dst_ip": "ip",
    "src_port": "port",
    "dst_port": "port",
    "proto": "proto",
    "duration": "duration",
    "bytes": "bytes",
    "packets": "packets",
}

# (input attribute, output attribute) per flow.
ORIGINAL_SCHEMA: tuple[tuple[str, str], ...] = (
    ("src_ip", "dst_ip"),
    ("src_ip", "dst_port"),
    ("src_ip", "proto"),
    ("dst_port", "proto"),
    ("proto", "dst_port"),
)

_CONTEXT = ("dst_port", "proto", "duration", "bytes", "packets")
EXTENDED_SCHEMA: tuple[tuple[str, str], ...] = (
    tuple(("src_ip", a) for a in ("dst_ip",) + _CONTEXT)
    + tuple(("dst_ip", a) for a in ("src_ip",) + _CONTEXT)
    + (("dst_port", "proto"),)
)

_ORIGINAL_ATTRIBUTES = ("src_ip", "dst_ip", "dst_port", "proto")
_EXTENDED_ATTRIBUTES = _ORIGINAL_ATTRIBUTES + ("src_port", "duration", "bytes", "packets")


def token_value(attribute: str, value) -> str:
    """Canonical string of a flow attribute value inside its partition."""
    if attribute == "duration":
        return format_duration(float(value))
    return str(value)


def _sort_key(kind: str):
    if kind == "ip":
        return ip_to_int
    if kind == "proto":
        return str
    return float


class Vocabulary:
    """Dense token index partitioned by kind.

    Indices run over the kinds in ``KINDS`` order and, inside a kind, in
    ascending natural value order, so a vocabulary is a pure function of the
    set of values it holds.
    """

    def __init__(self, tokens: dict[str, Sequence[str]]):
        self.kinds = tuple(k for k in KINDS if tokens.get(k))
        self.offsets: dict[str, int] = {}
        self.tokens: dict[str, list[str]] = {}
        self._index: dict[tuple[str, str], int] = {}
        pos = 0
        for kind in KINDS:
            values = list(tokens.get(kind, ()))
            self.offsets[kind] = pos
            self.tokens[kind] = values
            for i, v in enumerate(values):
                self._index[(kind, v)] = pos + i
            pos += len(values)
        self.size = pos

    def __len__(self) -> int:
        return self.size

    def __contains__(self, item: tuple[str, str]) -> bool:
        return item in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def index(self, kind: str, value: str) -> int:
        return self._index[(kind, value)]

    def get(self, kind: str, value: str) -> int | None:
        return self._index.get((kind, value))

    def partition(self, kind: str) -> range:
        start = self.offsets[kind]
        return range(start, start + len(self.tokens[kind]))

    def token(self, index: int) -> tuple[str, str]:
        for kind in KINDS:
            r = self.partition(kind)
            if index in r:
                return kind, self.tokens[kind][index - r.start]
        raise IndexError(index)

    def flow_index(self, flow: FlowRecord, attribute: str) -> int:
        kind = ATTRIBUTE_KIND[attribute]
        value = token_value(attribute, getattr(flow, attribute))
        try:
            return self._index[(kind, value)]
        except KeyError:
            raise KeyError(f"{attribute} token {value!r} not in vocabulary") from None


def build_vocabulary(flows: Iterable[FlowRecord], extended: bool = True) -> Vocabulary:
    """Collect every distinct attribute value of the corpus.

    Without ``extended`` this is the original IP2Vec vocabulary (IP
    addresses, destination ports, protocols); ``extended`` adds source
    ports, durations, bytes and packets.
    """
    attributes = _EXTENDED_ATTRIBUTES if extended else _ORIGINAL_ATTRIBUTES
    seen: dict[str, set[str]] = {k: set() for k in KINDS}
    for flow in flows:
        for attr in attributes:
            seen[ATTRIBUTE_KIND[attr]].add(token_value(attr, getattr(flow, attr)))
    return Vocabulary({k: sorted(v, key=_sort_key(k)) for k, v in seen.items()})


def pair_schema(extended: bool) -> tuple[tuple[str, str], ...]:
    return EXTENDED_SCHEMA if extended else ORIGINAL_SCHEMA


def generate_pairs(flow: FlowRecord, vocab: Vocabulary, extended: bool = True) -> list[tuple[int, int]]:
    """Training pairs (input index, output index): 13 extended, 5 original."""
    return [(vocab.flow_index(flow, a), vocab.flow_index(flow, b)) for a, b in pair_schema(extended)]


def pair_array(flows: Sequence[FlowRecord], vocab: Vocabulary, extended: bool = True) -> np.ndarray:
    """All pairs of a corpus as an ``(n_flows * pairs_per_flow, 2)`` int64 array."""
    schema = pair_schema(extended)
    attrs = sorted({a for pair in schema for a in pair})
    cols = {a: np.fromiter((vocab.flow_index(f, a) for f in flows), dtype=np.int64, count=len(flows))
            for a in attrs}
    out = np.empty((len(flows), len(schema), 2), dtype=np.int64)
    for j, (a, b) in enumerate(schema):
        out[:, j, 0] = cols[a]
        out[:, j, 1] = cols[b]
    return out.reshape(-1, 2)
