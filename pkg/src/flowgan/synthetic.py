"""Synthetic corpus with the structure of the CIDDS-001 OpenStack traffic.

Used for tests, benchmarks and demos when the real dataset is not at hand.
Hosts live in the CIDDS-001 subnets (dev/off/mgt/srv) plus a pool of
external addresses; every session produces a request flow and, for
connection-oriented services, a response flow. Normal traffic satisfies the
seven domain checks; optional attack flows (scans) are labelled
``attacker``/``victim``.
"""

from __future__ import annotations

import csv
import os
from datetime import date, datetime, timedelta
from typing import Sequence

import numpy as np

from .flows import FlowRecord, format_duration, format_timestamp, parse_flags, render_flags

CIDDS_COLUMNS = ("Date first seen", "Duration", "Proto", "Src IP Addr", "Src Pt", "Dst IP Addr",
                 "Dst Pt", "Packets", "Bytes", "Flows", "Flags", "Tos", "class", "attackType",
                 "attackID", "attackDescription")

SERVERS = {
    "file": "192.168.100.2",
    "mail": "192.168.100.3",
    "dns": "192.168.100.4",
    "web": "192.168.100.5",
    "backup": "192.168.100.6",
}

_SERVICE_MIX = {
    "dev": {"web_ext": 0.33, "web_int": 0.10, "dns": 0.20, "ssh": 0.12, "smb": 0.08,
            "icmp": 0.03, "netbios": 0.04, "mcast": 0.04, "mail": 0.06},
    "off": {"web_ext": 0.33, "web_int": 0.05, "dns": 0.20, "smb": 0.15, "mail": 0.10,
            "netbios": 0.10, "mcast": 0.05, "icmp": 0.02},
    "mgt": {"ssh": 0.25, "web_int": 0.20, "dns": 0.20, "web_ext": 0.20, "icmp": 0.10, "smb": 0.05},
}
_ROLE_WEIGHT = {"dev": 0.38, "off": 0.38, "mgt": 0.12, "inbound": 0.08, "forward": 0.04}
_SUBNET = {"dev": 220, "off": 210, "mgt": 200}


def _hour_weights() -> np.ndarray:
    w = np.empty(168)
    for day in range(7):
        for hour in range(24):
            if day < 5 and 8 <= hour < 17:
                v = 0.35 if hour == 12 else 1.0
            elif day < 5 and hour in (7, 17):
                v = 0.4
            else:
                v = 0.04
            w[day * 24 + hour] = v
    return w / w.sum()


def _external_pool(rng: np.random.Generator, n: int) -> list[str]:
    out: set[str] = set()
    while len(out) < n:
        a = int(rng.integers(1, 224))
        if a in (10, 127, 169, 172, 192):
            continue
        out.add(f"{a}.{rng.integers(0, 256)}.{rng.integers(0, 256)}.{rng.integers(1, 255)}")
    return sorted(out)


class _Builder:
    def __init__(self, rng: np.random.Generator, week_start: date, n_ext: int):
        self.rng = rng
        self.start = datetime.combine(week_start, datetime.min.time())
        self.hours = _hour_weights()
        self.clients = {r: [f"192.168.{s}.{h}" for h in range(2, 2 + (6 if r == "mgt" else 15))]
                        for r, s in _SUBNET.items()}
        self.ext = _external_pool(rng, n_ext)
        pop = 1.0 / np.arange(1, n_ext + 1) ** 1.1
        self.ext_p = pop / pop.sum()
        self.flows: list[FlowRecord] = []

    # -- helpers
    def when(self) -> datetime:
        h = int(self.rng.choice(168, p=self.hours))
        ms = int(self.rng.integers(0, 3_600_000))
        return self.start + timedelta(hours=h, milliseconds=ms)

    def eph(self, role: str) -> int:
        lo, hi = (49152, 65535) if role == "off" else (32768, 60999)
        return int(self.rng.integers(lo, hi + 1))

    def ext_host(self) -> str:
        return self.ext[int(self.rng.choice(len(self.ext), p=self.ext_p))]

    def duration(self, packets: int) -> float:
        if packets <= 1:
            return 0.0
        return round(float(min(self.rng.lognormal(-1.5, 1.6), 300.0)), 3)

    def tcp_sizes(self, large: bool) -> tuple[int, int]:
        rng = self.rng
        if large and rng.random() < 0.08:
            b = int(rng.integers(1_100_000, 40_000_000))
            b = int(round(round(b / 2**20, 1) * 2**20))
            return max(1, -(-b // 1400)), b
        p = int(1 + rng.geometric(0.18))
        per = rng.integers(60, 1400 if large else 400, size=p)
        return p, int(per.sum())

    def add(self, t, dur, proto, src, sport, dst, dport, pk, by, flags, label="normal"):
        self.flows.append(FlowRecord(t, dur, proto, src, sport, dst, dport, by, pk,
                                     parse_flags(flags), label))

    def tcp_session(self, t, client, cport, server, sport, label_req="normal", label_resp="normal",
                    large_resp=True):
        rng = self.rng
        pk, by = self.tcp_sizes(False)
        pr, br = self.tcp_sizes(large_resp)
        flags_req = rng.choice([".AP.SF", ".A..S.", ".AP.S.", ".A...F"], p=[0.6, 0.15, 0.2, 0.05])
        flags_resp = rng.choice([".AP.SF", ".A..S.", ".AP.S.", ".A.R.."], p=[0.6, 0.15, 0.2, 0.05])
        d = self.duration(max(pk, pr))
        self.add(t, d, "TCP", client, cport, server, sport, pk, by, flags_req, label_req)
        self.add(t + timedelta(milliseconds=int(rng.integers(0, 40))), max(0.0, round(d * 0.97, 3)), "TCP",
                 server, sport, client, cport, pr, br, flags_resp, label_resp)

    def udp_exchange(self, t, client, cport, server, sport, req=(60, 90), resp=(90, 300)):
        rng = self.rng
        pk = 1 if rng.random() < 0.9 else 2
        self.add(t, self.duration(pk), "UDP", client, cport, server, sport, pk,
                 pk * int(rng.integers(*req)), "......")
        self.add(t + timedelta(milliseconds=int(rng.integers(0, 20))), self.duration(pk), "UDP",
                 server, sport, client, cport, pk, pk * int(rng.integers(*resp)), "......")

    # -- sessions
    def client_session(self, role: str) -> None:
        rng = self.rng
        mix = _SERVICE_MIX[role]
        service = rng.choice(list(mix), p=np.array(list(mix.values())) / sum(mix.values()))
        client = self.clients[role][int(rng.integers(len(self.clients[role])))]
        t = self.when()
        if service == "web_ext":
            self.tcp_session(t, client, self.eph(role), self.ext_host(), int(rng.choice([80, 443], p=[0.3, 0.7])))
        elif service == "web_int":
            self.tcp_session(t, client, self.eph(role), SERVERS["web"], int(rng.choice([80, 443])))
        elif service == "dns":
            self.udp_exchange(t, client, self.eph(role), SERVERS["dns"], 53)
        elif service == "ssh":
            target = SERVERS["backup"] if rng.random() < 0.7 else self.clients["dev"][int(rng.integers(15))]
            self.tcp_session(t, client, self.eph(role), target, 22, large_resp=False)
        elif service == "smb":
            self.tcp_session(t, client, self.eph(role), SERVERS["file"], 445)
        elif service == "mail":
            self.tcp_session(t, client, self.eph(role), SERVERS["mail"], int(rng.choice([25, 993])),
                             large_resp=False)
        elif service == "icmp":
            target = list(SERVERS.values())[int(rng.integers(len(SERVERS)))]
            pk = int(rng.integers(1, 5))
            self.add(t, self.duration(pk), "ICMP", client, 0, target, 0, pk, 84 * pk, "......")
            self.add(t + timedelta(milliseconds=1), self.duration(pk), "ICMP", target, 0, client, 0, pk,
                     84 * pk, "......")
        elif service == "netbios":
            port = int(rng.choice([137, 138]))
            pk = int(rng.integers(1, 4))
            size = (78, 93) if port == 137 else (200, 250)
            self.add(t, self.duration(pk), "UDP", client, port, f"192.168.{_SUBNET[role]}.255", port, pk,
                     pk * int(rng.integers(*size)), "......")
        else:  # multicast discovery
            if rng.random() < 0.5:
                dst, port, size = "224.0.0.252", 5355, (60, 80)
            else:
                dst, port, size = "239.255.255.250", 1900, (150, 180)
            self.add(t, 0.0, "UDP", client, self.eph(role), dst, port, 1, int(rng.integers(*size)), "......")

    def inbound_session(self) -> None:
        self.tcp_session(self.when(), self.ext_host(), int(self.rng.integers(1024, 65536)),
                         SERVERS["web"], int(self.rng.choice([80, 443])))

    def forward_session(self) -> None:
        self.udp_exchange(self.when(), SERVERS["dns"], int(self.rng.integers(32768, 61000)),
                          "8.8.8.8", 53, resp=(120, 500))

    def attack(self) -> None:
        rng = self.rng
        attacker = "192.168.220.16"
        victim = list(SERVERS.values())[int(rng.integers(len(SERVERS)))]
        t = self.when()
        kind = rng.choice(["syn", "udp", "ping"], p=[0.6, 0.3, 0.1])
        for k in range(int(rng.integers(5, 30))):
            tk = t + timedelta(milliseconds=3 * k)
            port = int(rng.integers(1, 1025))
            if port in (137, 138):
                port = 139
            sport = int(rng.integers(32768, 61000))
            if kind == "syn":
                self.add(tk, 0.0, "TCP", attacker, sport, victim, port, 1, 58, "....S.", "attacker")
                self.add(tk, 0.0, "TCP", victim, port, attacker, sport, 1, 54, ".A.R..", "victim")
            elif kind == "udp":
                self.add(tk, 0.0, "UDP", attacker, sport, victim, port, 1, 42 + int(rng.integers(0, 20)),
                         "......", "attacker")
            else:
                self.add(tk, 0.0, "ICMP", attacker, 0, victim, 0, 1, 84, "......", "attacker")
                self.add(tk, 0.0, "ICMP", victim, 0, attacker, 0, 1, 84, "......", "victim")


def cidds_like_flows(n: int, seed: int = 0, week_start: date = date(2017, 3, 13),
                     attacks: bool = False, n_external: int = 800) -> list[FlowRecord]:
    """``n`` time-ordered flows resembling one CIDDS-001 week."""
    rng = np.random.default_rng(seed)
    b = _Builder(rng, week_start, n_external)
    kinds = list(_ROLE_WEIGHT)
    p = np.array(list(_ROLE_WEIGHT.values()))
    while len(b.flows) < n:
        if attacks and rng.random() < 0.01:
            b.attack()
            continue
        kind = kinds[int(rng.choice(len(kinds), p=p))]
        if kind == "inbound":
            b.inbound_session()
        elif kind == "forward":
            b.forward_session()
        else:
            b.client_session(kind)
    flows = b.flows[:n]
    flows.sort(key=lambda f: f.date_first_seen)
    return flows


def _raw_bytes(value: int) -> str:
    if value >= 2**20:
        return f"{value / 2**20:.1f} M"
    return str(value)


def write_cidds_csv(flows: Sequence[FlowRecord], path: str | os.PathLike, igmp_rows: int = 0,
                    seed: int = 0) -> None:
    """Write flows in the raw CIDDS-001 layout (padded protocol, ``M`` byte suffixes,
    ICMP type.code in the port column) with ``igmp_rows`` extra IGMP flows mixed in."""
    rng = np.random.default_rng(seed)
    igmp_at = set(rng.choice(len(flows) + igmp_rows, size=igmp_rows, replace=False).tolist()) \
        if igmp_rows else set()
    it = iter(flows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CIDDS_COLUMNS)
        last = None
        for i in range(len(flows) + igmp_rows):
            if i in igmp_at:
                t = last.date_first_seen if last else datetime(2017, 3, 13)
                w.writerow([format_timestamp(t), "0.000", "IGMP ", "192.168.210.5", "0",
                            "224.0.0.22", "0.0", "1", "46", "1", "......", "0", "normal", "---", "---", "---"])
                continue
            f = last = next(it)
            dport = ("8.0" if f.src_ip < f.dst_ip else "0.0") if f.proto == "ICMP" else str(f.dst_port)
            label = f.class_label or "normal"
            attack = ("portScan", "1", "---") if label in ("attacker", "victim") else ("---", "---", "---")
            w.writerow([format_timestamp(f.date_first_seen), format_duration(f.duration), f"{f.proto:<5}",
                        f.src_ip, str(f.src_port), f.dst_ip, dport, str(f.packets), _raw_bytes(f.bytes),
                        "1", render_flags(f.tcp_flags), "0", label, *attack])
