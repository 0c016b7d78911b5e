"""Scoring a generated corpus against a reference corpus."""

from __future__ import annotations

import csv
import ipaddress
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .flows import ROLES, FlowRecord, SubnetRules, ip_to_int, render_flags

# Rows of the distance table, in display order.
DISTANCE_ATTRIBUTES = ("duration", "proto", "src_ip", "src_port", "dst_ip", "dst_port",
                       "bytes", "packets", "tcp_flags")
ATTRIBUTE_TITLES = {
    "duration": "duration",
    "proto": "transport protocol",
    "src_ip": "source IP address",
    "src_port": "source port",
    "dst_ip": "destination IP address",
    "dst_port": "destination port",
    "bytes": "bytes",
    "packets": "packets",
    "tcp_flags": "TCP flags",
}

_MULTICAST = (0xE0000000, 0xF0000000)  # 224.0.0.0/4
_LIMITED_BROADCAST = 0xFFFFFFFF


@dataclass
class AttributeDistribution:
    attribute: str
    probabilities: dict

    @classmethod
    def from_flows(cls, flows: Iterable[FlowRecord], attribute: str) -> "AttributeDistribution":
        if attribute == "date_first_seen":
            raise ValueError("timestamps are not compared as value distributions")
        getter = (lambda f: render_flags(f.tcp_flags)) if attribute == "tcp_flags" \
            else (lambda f: getattr(f, attribute))
        counts = Counter(getter(f) for f in flows)
        total = sum(counts.values())
        if total == 0:
            return cls(attribute, {})
        return cls(attribute, {v: c / total for v, c in counts.items()})


def euclidean_distance(p: AttributeDistribution, q: AttributeDistribution) -> float:
    """L2 distance between two value distributions over the union of their supports."""
    if p.attribute != q.attribute:
        raise ValueError(f"cannot compare {p.attribute} with {q.attribute}")
    keys = set(p.probabilities) | set(q.probabilities)
    return math.sqrt(math.fsum((p.probabilities.get(k, 0.0) - q.probabilities.get(k, 0.0)) ** 2
                               for k in keys))


def attribute_distances(candidate: Sequence[FlowRecord], reference: Sequence[FlowRecord],
                        attributes: Sequence[str] = DISTANCE_ATTRIBUTES) -> dict[str, float]:
    return {a: euclidean_distance(AttributeDistribution.from_flows(candidate, a),
                                  AttributeDistribution.from_flows(reference, a))
            for a in attributes}


# ----------------------------------------------------------------- domain checks

@dataclass
class CheckConfig:
    internal_prefixes: tuple[str, ...] = ("192.168.0.0/16",)
    # "auto": condition tests 3-4 on the normal label when the corpus has labels
    label_handling: str = "auto"

    def __post_init__(self):
        if self.label_handling not in ("auto", "normal", "all"):
            raise ValueError("label_handling must be 'auto', 'normal' or 'all'")
        self._nets = [(int(n.network_address), int(n.netmask)) for n in
                      (ipaddress.IPv4Network(p, strict=False) for p in self.internal_prefixes)]

    def is_internal(self, value: int) -> bool:
        return any(value & mask == net for net, mask in self._nets)


@dataclass
class DomainCheckResult:
    test: int
    applicable: int
    passing: int

    @property
    def rate(self) -> float | None:
        return None if self.applicable == 0 else 100.0 * self.passing / self.applicable

    def as_dict(self) -> dict:
        return {"test": self.test, "applicable": self.applicable, "passing": self.passing,
                "rate": self.rate}


CHECK_DESCRIPTIONS = {
    1: "UDP flows carry no TCP flags",
    2: "source or destination address is internal",
    3: "ports 80/443 imply TCP",
    4: "port 53 implies UDP",
    5: "multicast/broadcast addresses only as destination",
    6: "NetBIOS (dst port 137/138): internal source, internal broadcast destination",
    7: "42 * packets <= bytes <= 65535 * packets",
}


def _special(value: int, cfg: CheckConfig) -> bool:
    if value & _MULTICAST[1] == _MULTICAST[0] or value == _LIMITED_BROADCAST:
        return True
    return (value & 255) == 255 and cfg.is_internal(value)


def check_flow(flow: FlowRecord, cfg: CheckConfig, condition_on_label: bool = False
               ) -> dict[int, bool | None]:
    """Outcome of each test for one flow; ``None`` where the premise does not apply."""
    src, dst = ip_to_int(flow.src_ip), ip_to_int(flow.dst_ip)
    ports = (flow.src_port, flow.dst_port)
    normal = (flow.class_label == "normal") if condition_on_label else True
    src_int, dst_int = cfg.is_internal(src), cfg.is_internal(dst)
    out: dict[int, bool | None] = {}
    out[1] = (not any(flow.tcp_flags)) if flow.proto == "UDP" else None
    out[2] = src_int or dst_int
    out[3] = (flow.proto == "TCP") if normal and (80 in ports or 443 in ports) else None
    out[4] = (flow.proto == "UDP") if normal and 53 in ports else None
    src_special, dst_special = _special(src, cfg), _special(dst, cfg)
    out[5] = (not src_special) if (src_special or dst_special) else None
    out[6] = (src_int and dst_int and (dst & 255) == 255) if flow.dst_port in (137, 138) else None
    out[7] = 42 * flow.packets <= flow.bytes <= 65535 * flow.packets
    return out


def domain_checks(flows: Iterable[FlowRecord], config: CheckConfig | None = None
                  ) -> tuple[list[DomainCheckResult], bool]:
    """Run the seven checks; returns results and whether tests 3-4 used labels."""
    cfg = config or CheckConfig()
    flows = list(flows)
    if cfg.label_handling == "all":
        use_labels = False
    elif cfg.label_handling == "normal":
        use_labels = True
    else:
        use_labels = any(f.class_label is not None for f in flows)
    applicable = Counter()
    passing = Counter()
    for f in flows:
        for test, ok in check_flow(f, cfg, use_labels).items():
            if ok is not None:
                applicable[test] += 1
                passing[test] += bool(ok)
    return [DomainCheckResult(t, applicable[t], passing[t]) for t in range(1, 8)], use_labels


# ----------------------------------------------------------------- plot data

def temporal_profile(flows: Sequence[FlowRecord]) -> list[float]:
    """Fraction of flows in each of the 168 hours of the week (Monday 00h first)."""
    if not flows:
        raise ValueError("temporal profile of an empty corpus")
    counts = [0] * 168
    for f in flows:
        counts[f.weekday * 24 + f.date_first_seen.hour] += 1
    n = len(flows)
    return [c / n for c in counts]


def write_temporal_profile(profile: Sequence[float], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_of_week", "weekday", "hour", "fraction"])
        for h, frac in enumerate(profile):
            w.writerow([h, h // 24, h % 24, repr(frac)])


def grouped_export(flows: Sequence[FlowRecord], rules: SubnetRules,
                   attributes: Sequence[str] = ("src_port", "dst_ip")) -> dict[str, dict[str, list[int]]]:
    """Per source-subnet role, the sample lists of ``attributes`` (IPs as 32-bit ints)."""
    groups = {role: {a: [] for a in attributes} for role in ROLES}
    for f in flows:
        g = groups[rules.classify(f.src_ip)]
        for a in attributes:
            v = getattr(f, a)
            g[a].append(ip_to_int(v) if a in ("src_ip", "dst_ip") else int(v))
    return groups


def write_grouped(groups: Mapping[str, Mapping[str, list[int]]], directory: str | os.PathLike,
                  prefix: str = "grouped") -> list[str]:
    paths = []
    d = Path(directory)
    for role, cols in groups.items():
        path = d / f"{prefix}_{role}.csv"
        names = list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            w.writerows(zip(*(cols[n] for n in names)))
        paths.append(str(path))
    return paths


# ----------------------------------------------------------------- report

@dataclass
class EvaluationReport:
    distances: dict[str, float]
    checks: list[DomainCheckResult]
    labels_used: bool
    temporal: list[float]
    groups: dict[str, dict[str, list[int]]] = field(repr=False, default_factory=dict)
    exports: dict[str, str] = field(default_factory=dict)
    n_candidate: int = 0
    n_reference: int = 0

    def as_dict(self) -> dict:
        return {
            "n_candidate": self.n_candidate,
            "n_reference": self.n_reference,
            "distances": self.distances,
            "domain_checks": [c.as_dict() for c in self.checks],
            "tests_3_4_conditioned_on_normal_label": self.labels_used,
            "temporal_profile": self.temporal,
            "group_sizes": {r: len(next(iter(g.values()), [])) for r, g in self.groups.items()},
            "exports": self.exports,
        }


def compare(candidate: Sequence[FlowRecord], reference: Sequence[FlowRecord],
            rules: SubnetRules | None = None, check_config: CheckConfig | None = None) -> EvaluationReport:
    if not candidate or not reference:
        raise ValueError("both corpora must be non-empty")
    rules = rules or SubnetRules.default()
    checks, used = domain_checks(candidate, check_config)
    return EvaluationReport(
        distances=attribute_distances(candidate, reference),
        checks=checks,
        labels_used=used,
        temporal=temporal_profile(candidate),
        groups=grouped_export(candidate, rules),
        n_candidate=len(candidate),
        n_reference=len(reference),
    )


def _fmt(x: float | None, digits: int) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def render_tables(reports: Mapping[str, EvaluationReport]) -> str:
    """Aligned text tables: distances (attributes x corpora) and checks (tests x corpora)."""
    names = list(reports)
    width = max([10] + [len(n) for n in names])
    first = max(len(t) for t in ATTRIBUTE_TITLES.values())
    lines = ["Euclidean distance to the reference corpus", ""]
    lines.append("Attribute".ljust(first) + "".join(f"  {n:>{width}}" for n in names))
    lines.append("-" * len(lines[-1]))
    for a in DISTANCE_ATTRIBUTES:
        lines.append(ATTRIBUTE_TITLES[a].ljust(first)
                     + "".join(f"  {_fmt(reports[n].distances[a], 4):>{width}}" for n in names))
    lines += ["", "Domain knowledge checks (% of applicable flows passing)", ""]
    lines.append("Test".ljust(first) + "".join(f"  {n:>{width}}" for n in names))
    lines.append("-" * len(lines[-1]))
    for t in range(1, 8):
        lines.append(f"Test {t}".ljust(first)
                     + "".join(f"  {_fmt(reports[n].checks[t - 1].rate, 2):>{width}}" for n in names))
    lines.append("")
    for t in range(1, 8):
        lines.append(f"  Test {t}: {CHECK_DESCRIPTIONS[t]}")
    return "\n".join(lines) + "\n"


def write_report(reports: Mapping[str, EvaluationReport], directory: str | os.PathLike) -> dict[str, str]:
    """Write report.json, report.txt, temporal profiles and grouped exports."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, rep in reports.items():
        tpath = d / f"temporal_{name}.csv"
        write_temporal_profile(rep.temporal, tpath)
        rep.exports = {"temporal": str(tpath.name)}
        for p in write_grouped(rep.groups, d, prefix=f"grouped_{name}"):
            rep.exports[Path(p).stem.rsplit("_", 1)[-1]] = Path(p).name
    (d / "report.json").write_text(json.dumps({n: r.as_dict() for n, r in reports.items()},
                                              indent=2, sort_keys=True) + "\n")
    text = render_tables(reports)
    (d / "report.txt").write_text(text)
    return {"json": str(d / "report.json"), "text": str(d / "report.txt")}
