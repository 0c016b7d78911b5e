import itertools
from datetime import datetime

import pytest
from hypothesis import given, settings, strategies as st

from flowgan.flows import (CorpusError, FlowRecord, SubnetRules, alias_address, classify_subnet,
                           format_timestamp, int_to_ip, ip_to_int, parse_bytes, parse_corpus,
                           parse_flags, render_flags, write_corpus)
from flowgan.synthetic import write_cidds_csv

HEADER = "Date first seen,Duration,Proto,Src IP Addr,Src Pt,Dst IP Addr,Dst Pt,Packets,Bytes,Flows,Flags,Tos,class\n"


def _write(tmp_path, rows, name="c.csv"):
    p = tmp_path / name
    p.write_text(HEADER + "".join(r + "\n" for r in rows))
    return p


def test_flag_examples():
    assert parse_flags(".A..S.") == (False, True, False, False, True, False)
    assert parse_flags("......") == (False,) * 6
    assert parse_flags("UAPRSF") == (True,) * 6
    assert render_flags((False, True, False, False, True, False)) == ".A..S."


def test_flags_wrong_length():
    with pytest.raises(ValueError):
        parse_flags(".A..S")


def test_flag_round_trip_all_64():
    for bits in itertools.product((False, True), repeat=6):
        assert parse_flags(render_flags(bits)) == bits


def test_parse_bytes():
    assert parse_bytes("1.2 M") == 1258291
    assert parse_bytes(" 144 ") == 144
    assert parse_bytes("2 K") == 2048


def test_classify_subnet():
    rules = SubnetRules([("192.168.220.0/24", "dev")])
    assert classify_subnet("192.168.220.14", rules) == "dev"
    assert classify_subnet("8.8.8.8", rules) == "ext"
    assert classify_subnet("192.168.100.5", SubnetRules.default()) == "srv"


def test_first_rule_wins():
    rules = SubnetRules([("192.168.0.0/16", "mgt"), ("192.168.220.0/24", "dev")])
    assert rules.classify("192.168.220.3") == "mgt"


@given(st.integers(0, 2**32 - 1))
def test_classification_total(value):
    rules = SubnetRules.default()
    role = rules.classify(int_to_ip(value))
    assert role in ("dev", "off", "mgt", "srv", "ext")
    assert role == rules.classify_int(value)
    assert ip_to_int(int_to_ip(value)) == value


def test_igmp_dropped_and_counted(tmp_path):
    p = _write(tmp_path, [
        "2017-03-15 00:01:16.632,0.000,TCP  ,192.168.100.5,445,192.168.220.16,58844,1,108,1,.AP...,0,normal",
        "2017-03-15 00:01:16.700,0.000,IGMP ,192.168.210.5,0,224.0.0.22,0.0,1,46,1,......,0,normal",
    ])
    flows, stats = parse_corpus(p)
    assert len(flows) == 1 and flows[0].proto == "TCP"
    assert stats.total_rows == 2 and stats.kept_rows == 1
    assert stats.dropped["proto:IGMP"] == 1


def test_suffix_bytes_and_icmp_ports(tmp_path):
    p = _write(tmp_path, [
        "2017-03-13 11:39:23.000,1.503,TCP  ,192.168.210.5,53872,192.168.100.5,80,900,  1.2 M,1,.A..S.,0,normal",
        "2017-03-13 11:40:00.000,0.000,ICMP ,192.168.210.5,0,192.168.100.5,3.3,1,84,1,......,0,normal",
    ])
    flows, _ = parse_corpus(p)
    assert flows[0].bytes == 1258291
    assert flows[0].tcp_flags == (False, True, False, False, True, False)
    assert flows[1].dst_port == 0 and flows[1].src_port == 0


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    flows, stats = parse_corpus(p)
    assert flows == [] and stats.total_rows == 0 and stats.kept_rows == 0


def test_unreadable_file(tmp_path):
    with pytest.raises(CorpusError, match="cannot read"):
        parse_corpus(tmp_path / "nope.csv")


def test_bad_rows_over_threshold(tmp_path):
    good = "2017-03-13 11:39:23.000,0.000,UDP  ,192.168.210.5,5000,192.168.100.4,53,1,70,1,......,0,normal"
    p = _write(tmp_path, [good] * 5 + ["garbage,row"] + [good] * 3)
    with pytest.raises(CorpusError, match="line 7"):
        parse_corpus(p)
    flows, stats = parse_corpus(p, strict=False)
    assert len(flows) == 8 and stats.bad_rows == 1
    flows, _ = parse_corpus(p, max_bad_fraction=0.5)
    assert len(flows) == 8


def test_anonymized_hosts_aliased(tmp_path):
    p = _write(tmp_path, [
        "2017-03-13 11:39:23.000,0.000,TCP  ,EXT_SERVER,8082,192.168.100.5,80,2,120,1,.A....,0,normal",
    ])
    flows, stats = parse_corpus(p)
    assert flows[0].src_ip == alias_address("EXT_SERVER")
    assert ip_to_int(flows[0].src_ip) >> 28 == 0xF
    with pytest.raises(CorpusError):
        parse_corpus(p, unknown_addresses="reject", max_bad_fraction=0.0)


def test_write_round_trip(tmp_path, small_corpus):
    raw = tmp_path / "raw.csv"
    write_cidds_csv(small_corpus, raw, igmp_rows=3)
    flows, stats = parse_corpus(raw)
    assert flows == small_corpus
    assert stats.dropped["proto:IGMP"] == 3
    out = tmp_path / "out.csv"
    write_corpus(flows, out)
    again, _ = parse_corpus(out)
    assert again == flows
    out2 = tmp_path / "out2.csv"
    write_corpus(again, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_write_empty_is_header_only(tmp_path):
    out = tmp_path / "e.csv"
    write_corpus([], out)
    assert out.read_text().count("\n") == 1


def test_record_invariants():
    t = datetime(2017, 3, 13, 11, 39, 23)
    with pytest.raises(ValueError):
        FlowRecord(t, 0.0, "IGMP", "1.2.3.4", 0, "1.2.3.5", 0, 10, 1, (False,) * 6)
    with pytest.raises(ValueError):
        FlowRecord(t, 0.0, "TCP", "1.2.3.4", 70000, "1.2.3.5", 0, 10, 1, (False,) * 6)
    with pytest.raises(ValueError):
        FlowRecord(t, 0.0, "TCP", "1.2.3.4", 1, "1.2.3.5", 0, 0, 1, (False,) * 6)


flow_strategy = st.builds(
    FlowRecord,
    date_first_seen=st.datetimes(datetime(2017, 3, 1), datetime(2017, 5, 1)).map(
        lambda d: d.replace(microsecond=d.microsecond // 1000 * 1000)),
    duration=st.integers(0, 10**7).map(lambda ms: ms / 1000),
    proto=st.sampled_from(["TCP", "UDP"]),
    src_ip=st.integers(0, 2**32 - 1).map(int_to_ip),
    src_port=st.integers(0, 65535),
    dst_ip=st.integers(0, 2**32 - 1).map(int_to_ip),
    dst_port=st.integers(0, 65535),
    bytes=st.integers(1, 2**40),
    packets=st.integers(1, 2**31),
    tcp_flags=st.tuples(*[st.booleans()] * 6),
    class_label=st.sampled_from([None, "normal", "attacker", "victim"]),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(flow_strategy, max_size=20))
def test_round_trip_property(tmp_path_factory, flows):
    p = tmp_path_factory.mktemp("rt") / "f.csv"
    write_corpus(flows, p)
    back, _ = parse_corpus(p)
    assert back == flows


def test_timestamp_millis():
    t = datetime(2017, 3, 13, 11, 39, 23, 456000)
    assert format_timestamp(t) == "2017-03-13 11:39:23.456"
