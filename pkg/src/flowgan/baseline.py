"""Independent per-attribute empirical sampler (the maximum-likelihood baseline)."""

from __future__ import annotations

import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Sequence

import numpy as np

from .flows import FlowRecord, ip_to_int, parse_flags, render_flags

BASELINE_FORMAT = "flowgan-empirical-model"
BASELINE_VERSION = 1
PARTITION_SIZE = 65536

ATTRIBUTES = ("weekday", "daytime", "duration", "proto", "src_ip", "src_port",
              "dst_ip", "dst_port", "bytes", "packets", "tcp_flags")

_NUMERIC = {"weekday", "daytime", "duration", "src_port", "dst_port", "bytes", "packets"}


def _value(flow: FlowRecord, attribute: str):
    if attribute == "weekday":
        return flow.weekday
    if attribute == "daytime":
        return int(flow.seconds_of_day)
    if attribute == "tcp_flags":
        return render_flags(flow.tcp_flags)
    return getattr(flow, attribute)


def _sort_key(attribute: str):
    if attribute in ("src_ip", "dst_ip"):
        return ip_to_int
    if attribute in _NUMERIC:
        return float
    return str


@dataclass
class Table:
    values: list
    counts: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.counts, dtype=np.float64)
        return c / c[-1]


@dataclass
class EmpiricalModel:
    tables: dict[str, Table]
    week_start: date = date(2017, 3, 13)
    n_flows: int = 0
    meta: dict = field(default_factory=dict)

    def probabilities(self, attribute: str) -> dict:
        t = self.tables[attribute]
        return dict(zip(t.values, t.probabilities))

    def save(self, path: str | os.PathLike) -> None:
        doc = {
            "format": BASELINE_FORMAT,
            "version": BASELINE_VERSION,
            "week_start": self.week_start.isoformat(),
            "n_flows": self.n_flows,
            "tables": {a: [[v, int(c)] for v, c in zip(t.values, t.counts)]
                       for a, t in self.tables.items()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EmpiricalModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != BASELINE_FORMAT or doc.get("version") != BASELINE_VERSION:
            raise ValueError(f"{path}: not a version-{BASELINE_VERSION} empirical model")
        tables = {a: Table([v for v, _ in rows], np.array([c for _, c in rows], dtype=np.int64))
                  for a, rows in doc["tables"].items()}
        return cls(tables, date.fromisoformat(doc["week_start"]), doc["n_flows"])


def fit(flows: Sequence[FlowRecord], week_start: date = date(2017, 3, 13)) -> EmpiricalModel:
    """Count value frequencies per attribute; tables are sorted by value."""
    if not flows:
        raise ValueError("cannot fit the baseline on an empty corpus")
    tables = {}
    for attr in ATTRIBUTES:
        counts = Counter(_value(f, attr) for f in flows)
        values = sorted(counts, key=_sort_key(attr))
        tables[attr] = Table(values, np.array([counts[v] for v in values], dtype=np.int64))
    return EmpiricalModel(tables, week_start, len(flows))


def _sample_partition(model: EmpiricalModel, seed: int, index: int, count: int) -> list[FlowRecord]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    drawn = {}
    for attr in ATTRIBUTES:
        t = model.tables[attr]
        idx = np.searchsorted(t.cdf, rng.random(count), side="right")
        idx = np.minimum(idx, len(t.values) - 1)
        drawn[attr] = [t.values[i] for i in idx]
    start = datetime.combine(model.week_start, datetime.min.time())
    return [
        FlowRecord(
            date_first_seen=start + timedelta(days=int(drawn["weekday"][i]),
                                              seconds=int(drawn["daytime"][i])),
            duration=float(drawn["duration"][i]),
            proto=drawn["proto"][i],
            src_ip=drawn["src_ip"][i],
            src_port=int(drawn["src_port"][i]),
            dst_ip=drawn["dst_ip"][i],
            dst_port=int(drawn["dst_port"][i]),
            bytes=int(drawn["bytes"][i]),
            packets=int(drawn["packets"][i]),
            tcp_flags=parse_flags(drawn["tcp_flags"][i]),
        )
        for i in range(count)
    ]


def sample(model: EmpiricalModel, count: int, seed: int = 0, workers: int = 1) -> list[FlowRecord]:
    """Draw ``count`` flows, every attribute independently by inverse CDF.

    Rows are produced in fixed-size partitions, each with its own seed
    derived from ``seed``, so the output does not depend on ``workers``.
    """
    parts = [(i, min(PARTITION_SIZE, count - start))
             for i, start in enumerate(range(0, max(count, 0), PARTITION_SIZE))]
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _sample_partition(model, seed, *p), parts))
    else:
        chunks = [_sample_partition(model, seed, *p) for p in parts]
    return [f for chunk in chunks for f in chunk]
