"""Flow records, CIDDS-001-style CSV ingestion/serialization and subnet roles."""

from __future__ import annotations

import csv
import hashlib
import ipaddress
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

PROTOCOLS = ("TCP", "UDP", "ICMP")
FLAG_NAMES = ("URG", "ACK", "PSH", "RES", "SYN", "FIN")
FLAG_LETTERS = "UAPRSF"
CLASS_LABELS = ("normal", "attacker", "victim", "suspicious", "unknown")
ROLES = ("dev", "off", "mgt", "srv", "ext")

DEFAULT_COLUMNS: dict[str, str] = {
    "date_first_seen": "Date first seen",
    "duration": "Duration",
    "proto": "Proto",
    "src_ip": "Src IP Addr",
    "src_port": "Src Pt",
    "dst_ip": "Dst IP Addr",
    "dst_port": "Dst Pt",
    "packets": "Packets",
    "bytes": "Bytes",
    "tcp_flags": "Flags",
    "class_label": "class",
}

# CIDDS-001 OpenStack subnets, see the dataset's network documentation.
DEFAULT_SUBNETS: tuple[tuple[str, str], ...] = (
    ("192.168.100.0/24", "srv"),
    ("192.168.200.0/24", "mgt"),
    ("192.168.210.0/24", "off"),
    ("192.168.220.0/24", "dev"),
)

_SUFFIXES = {"K": 2**10, "M": 2**20, "G": 2**30}
_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
# Anonymized (non-dotted) addresses are mapped into 240.0.0.0 - 254.255.255.254.
_ALIAS_BASE = 240 << 24
_ALIAS_SPAN = (255 << 24) - _ALIAS_BASE


class CorpusError(ValueError):
    """Raised when a corpus file cannot be ingested."""


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One unidirectional NetFlow record."""

    date_first_seen: datetime
    duration: float
    proto: str
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    bytes: int
    packets: int
    tcp_flags: tuple[bool, bool, bool, bool, bool, bool]
    class_label: str | None = None

    def __post_init__(self):
        if self.proto not in PROTOCOLS:
            raise ValueError(f"unsupported protocol {self.proto!r}")
        if not (0 <= self.src_port <= 65535 and 0 <= self.dst_port <= 65535):
            raise ValueError(f"port out of range: {self.src_port}, {self.dst_port}")
        if self.packets < 1 or self.bytes < 1:
            raise ValueError("packets and bytes must be >= 1")
        if self.duration < 0:
            raise ValueError(f"negative duration {self.duration}")
        if len(self.tcp_flags) != 6:
            raise ValueError("tcp_flags needs six entries")

    @property
    def weekday(self) -> int:
        """0 = Monday ... 6 = Sunday."""
        return self.date_first_seen.weekday()

    @property
    def seconds_of_day(self) -> float:
        t = self.date_first_seen
        return t.hour * 3600 + t.minute * 60 + t.second + t.microsecond / 1e6


@dataclass
class IngestStats:
    total_rows: int = 0
    kept_rows: int = 0
    dropped: Counter = field(default_factory=Counter)
    bad_rows: int = 0
    first_bad_line: int | None = None
    first_bad_reason: str | None = None
    aliases: dict[str, str] = field(default_factory=dict)

    @property
    def dropped_rows(self) -> int:
        return sum(self.dropped.values())

    def as_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "kept_rows": self.kept_rows,
            "dropped_rows": self.dropped_rows,
            "dropped_by_reason": dict(sorted(self.dropped.items())),
            "bad_rows": self.bad_rows,
            "first_bad_line": self.first_bad_line,
            "aliased_addresses": len(self.aliases),
        }


# --------------------------------------------------------------------------
# small value codecs

def parse_flags(flag_string: str) -> tuple[bool, bool, bool, bool, bool, bool]:
    """Parse a positional 6-character flag string such as ``.A..S.``.

    Positions are URG, ACK, PSH, RES, SYN, FIN; ``.`` means unset and any
    other character means set.
    """
    if len(flag_string) != 6:
        raise ValueError(f"flag string must have 6 characters, got {flag_string!r}")
    return tuple(c != "." for c in flag_string)  # type: ignore[return-value]


def render_flags(flags: Sequence[bool]) -> str:
    return "".join(FLAG_LETTERS[i] if f else "." for i, f in enumerate(flags))


def parse_bytes(text: str) -> int:
    """Parse a byte/packet count, expanding magnitude suffixes (``1.2 M``)."""
    s = text.strip()
    if not s:
        raise ValueError("empty count")
    suffix = s[-1].upper()
    if suffix in _SUFFIXES:
        return int(round(float(s[:-1].strip()) * _SUFFIXES[suffix]))
    value = float(s)
    if value != int(value):
        raise ValueError(f"non-integral count {text!r}")
    return int(value)


def ip_to_int(ip: str) -> int:
    a, b, c, d = (int(x) for x in ip.split("."))
    return (a << 24) | (b << 16) | (c << 8) | d


def int_to_ip(value: int) -> str:
    value = int(value)
    return f"{(value >> 24) & 255}.{(value >> 16) & 255}.{(value >> 8) & 255}.{value & 255}"


def ip_octets(ip: str) -> tuple[int, int, int, int]:
    return tuple(int(x) for x in ip.split("."))  # type: ignore[return-value]


def _check_ipv4(ip: str) -> str:
    parts = ip.split(".")
    if len(parts) != 4 or not all(p.isdigit() and int(p) <= 255 for p in parts):
        raise ValueError(f"not an IPv4 address: {ip!r}")
    return ".".join(str(int(p)) for p in parts)


def alias_address(token: str) -> str:
    """Deterministic IPv4 stand-in for an anonymized address token."""
    digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
    return int_to_ip(_ALIAS_BASE + int.from_bytes(digest, "big") % _ALIAS_SPAN)


def format_timestamp(t: datetime) -> str:
    return f"{t.strftime(_TIME_FORMAT)}.{t.microsecond // 1000:03d}"


def parse_timestamp(text: str) -> datetime:
    t = datetime.fromisoformat(text.strip())
    # millisecond precision
    return t.replace(microsecond=(t.microsecond // 1000) * 1000)


def format_duration(seconds: float) -> str:
    return f"{seconds:.3f}"


# --------------------------------------------------------------------------
# subnet roles

class SubnetRules:
    """Ordered CIDR -> role rules; the first match wins, no match is ``ext``."""

    def __init__(self, rules: Iterable[tuple[str, str]]):
        self.rules: list[tuple[str, str]] = []
        self._compiled: list[tuple[int, int, str]] = []
        for cidr, role in rules:
            if role not in ROLES:
                raise ValueError(f"unknown subnet role {role!r}")
            net = ipaddress.IPv4Network(cidr, strict=False)
            self.rules.append((str(net), role))
            self._compiled.append((int(net.network_address), int(net.netmask), role))
        if not self._compiled:
            raise ValueError("subnet rules must not be empty")

    @classmethod
    def default(cls) -> "SubnetRules":
        return cls(DEFAULT_SUBNETS)

    @classmethod
    def from_config(cls, entries: Sequence[Mapping[str, str]] | None) -> "SubnetRules":
        if not entries:
            return cls.default()
        return cls((e["cidr"], e["role"]) for e in entries)

    def classify_int(self, value: int) -> str:
        for network, mask, role in self._compiled:
            if value & mask == network:
                return role
        return "ext"

    def classify(self, ip: str) -> str:
        return self.classify_int(ip_to_int(ip))

    def to_config(self) -> list[dict[str, str]]:
        return [{"cidr": c, "role": r} for c, r in self.rules]


def classify_subnet(ip: str, rules: SubnetRules) -> str:
    return rules.classify(ip)


# --------------------------------------------------------------------------
# CSV in/out

def _port(text: str, proto: str) -> int:
    if proto == "ICMP":
        # ICMP type.code values are not ports
        return 0
    value = float(text)
    if value != int(value) or not 0 <= value <= 65535:
        raise ValueError(f"invalid port {text!r}")
    return int(value)


def _address(text: str, unknown_addresses: str, aliases: dict[str, str]) -> str:
    text = text.strip()
    try:
        return _check_ipv4(text)
    except ValueError:
        if unknown_addresses != "alias":
            raise
    if text not in aliases:
        aliases[text] = alias_address(text)
    return aliases[text]


def _parse_row(row: Mapping[str, str], cols: Mapping[str, str], proto: str,
               unknown_addresses: str, aliases: dict[str, str]) -> FlowRecord:
    label_col = cols.get("class_label")
    label = row.get(label_col, "") if label_col else ""
    label = (label or "").strip() or None
    if label is not None and label not in CLASS_LABELS:
        raise ValueError(f"unknown class label {label!r}")
    return FlowRecord(
        date_first_seen=parse_timestamp(row[cols["date_first_seen"]]),
        duration=round(float(row[cols["duration"]]), 3),
        proto=proto,
        src_ip=_address(row[cols["src_ip"]], unknown_addresses, aliases),
        src_port=_port(row[cols["src_port"]], proto),
        dst_ip=_address(row[cols["dst_ip"]], unknown_addresses, aliases),
        dst_port=_port(row[cols["dst_port"]], proto),
        bytes=parse_bytes(row[cols["bytes"]]),
        packets=parse_bytes(row[cols["packets"]]),
        tcp_flags=parse_flags(row[cols["tcp_flags"]].strip()),
        class_label=label,
    )


def parse_corpus(
    path: str | os.PathLike,
    column_map: Mapping[str, str] | None = None,
    *,
    max_bad_fraction: float = 0.001,
    strict: bool = True,
    limit: int | None = None,
    unknown_addresses: str = "alias",
) -> tuple[list[FlowRecord], IngestStats]:
    """Read a flow CSV into ``FlowRecord`` objects, in file order.

    Rows whose protocol is not TCP/UDP/ICMP (e.g. IGMP) and rows with zero
    packets or bytes are dropped and counted by reason. Malformed rows are
    skipped; if their fraction exceeds ``max_bad_fraction`` a ``CorpusError``
    naming the first offending line is raised (only a warning when
    ``strict`` is false). ``limit`` stops after that many kept flows.
    ``unknown_addresses`` is ``"alias"`` (map anonymized host tokens to
    stable reserved IPv4 addresses) or ``"reject"``.
    """
    cols = dict(DEFAULT_COLUMNS if column_map is None else column_map)
    missing = [k for k in DEFAULT_COLUMNS if k != "class_label" and k not in cols]
    if missing:
        raise CorpusError(f"column map lacks entries for {missing}")
    stats = IngestStats()
    flows: list[FlowRecord] = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh, skipinitialspace=False)
        if reader.fieldnames is None:
            return flows, stats
        header = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = header
        absent = [c for k, c in cols.items() if k != "class_label" and c not in header]
        if absent:
            raise CorpusError(f"{path}: missing columns {absent}")
        for lineno, row in enumerate(reader, start=2):
            if limit is not None and stats.kept_rows >= limit:
                break
            stats.total_rows += 1
            try:
                proto = row[cols["proto"]].strip().upper()
                if proto not in PROTOCOLS:
                    stats.dropped[f"proto:{proto or 'empty'}"] += 1
                    continue
                if parse_bytes(row[cols["packets"]]) < 1 or parse_bytes(row[cols["bytes"]]) < 1:
                    stats.dropped["empty_flow"] += 1
                    continue
                flow = _parse_row(row, cols, proto, unknown_addresses, stats.aliases)
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                stats.bad_rows += 1
                if stats.first_bad_line is None:
                    stats.first_bad_line = lineno
                    stats.first_bad_reason = str(exc)
                stats.dropped["malformed"] += 1
                continue
            flows.append(flow)
            stats.kept_rows += 1
    if stats.total_rows and stats.bad_rows / stats.total_rows > max_bad_fraction:
        msg = (f"{path}: {stats.bad_rows} malformed rows of {stats.total_rows} exceed "
               f"tolerance {max_bad_fraction}; first at line {stats.first_bad_line}: "
               f"{stats.first_bad_reason}")
        if strict:
            raise CorpusError(msg)
        logger.warning(msg)
    return flows, stats


def parse_corpora(paths: Sequence[str | os.PathLike], column_map=None, *,
                  limit: int | None = None, **kwargs) -> tuple[list[FlowRecord], IngestStats]:
    """Concatenate several corpus files (e.g. the week2-4 split)."""
    all_flows: list[FlowRecord] = []
    total = IngestStats()
    for path in paths:
        remaining = None if limit is None else limit - len(all_flows)
        if remaining is not None and remaining <= 0:
            break
        flows, stats = parse_corpus(path, column_map, limit=remaining, **kwargs)
        all_flows.extend(flows)
        total.total_rows += stats.total_rows
        total.kept_rows += stats.kept_rows
        total.dropped.update(stats.dropped)
        total.bad_rows += stats.bad_rows
        total.aliases.update(stats.aliases)
        if total.first_bad_line is None:
            total.first_bad_line = stats.first_bad_line
    return all_flows, total


def flow_to_row(flow: FlowRecord) -> dict[str, str]:
    return {
        "date_first_seen": format_timestamp(flow.date_first_seen),
        "duration": format_duration(flow.duration),
        "proto": flow.proto,
        "src_ip": flow.src_ip,
        "src_port": str(flow.src_port),
        "dst_ip": flow.dst_ip,
        "dst_port": str(flow.dst_port),
        "packets": str(flow.packets),
        "bytes": str(flow.bytes),
        "tcp_flags": render_flags(flow.tcp_flags),
        "class_label": flow.class_label or "",
    }


def write_corpus(flows: Iterable[FlowRecord], path: str | os.PathLike,
                 column_map: Mapping[str, str] | None = None) -> None:
    """Write flows as CSV with the ingestion column layout.

    Timestamps carry millisecond precision and byte counts are written as
    plain integers, so ``parse_corpus`` reads back identical records.
    """
    cols = dict(DEFAULT_COLUMNS if column_map is None else column_map)
    keys = [k for k in DEFAULT_COLUMNS if k in cols]
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot write corpus {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cols[k] for k in keys])
        for flow in flows:
            row = flow_to_row(flow)
            writer.writerow([row[k] for k in keys])
