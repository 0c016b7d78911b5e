from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowgan import ip2vec
from flowgan.encoding import (EncodingError, EncodingSchema, build_schema, decode, decode_many,
                              encode, encode_binary, encode_embedding, encode_many, encode_numeric,
                              encode_preliminaries, fit_bounds)
from flowgan.flows import FlowRecord, parse_flags

# The worked example flow of the encoding table (a Monday).
EXAMPLE = FlowRecord(datetime(2018, 5, 28, 11, 39, 23), 1.503, "TCP", "192.168.210.5", 53872,
                     "192.168.100.5", 445, 144, 1, parse_flags(".A..S."), "normal")
BOUNDS = {"duration": (0.0, 3.006), "bytes": (42.0, 65535.0), "packets": (1.0, 100.0)}


def bits(s):
    return [int(c) for c in s.replace(" ", "")]


def key(f):
    return (f.weekday, f.seconds_of_day, f.duration, f.proto, f.src_ip, f.src_port, f.dst_ip,
            f.dst_port, f.bytes, f.packets, f.tcp_flags)


@pytest.mark.parametrize("method,width", [("N", 30), ("B", 178)])
def test_widths(method, width):
    assert EncodingSchema.create(method, BOUNDS).width == width


@pytest.mark.parametrize("m", [1, 5, 20])
def test_embedding_width(m):
    assert EncodingSchema.create("E", embedding_dim=m).width == 17 + 7 * m


def test_preliminaries():
    p = encode_preliminaries(EXAMPLE)
    assert p.shape == (17,)
    assert list(p[:7]) == [1, 0, 0, 0, 0, 0, 0]
    assert p[7] == pytest.approx(41963 / 86400, abs=1e-12)
    assert list(p[8:11]) == [1, 0, 0]
    assert list(p[11:]) == [0, 1, 0, 0, 1, 0]
    midnight = FlowRecord(datetime(2018, 5, 29), 0.0, "UDP", "1.1.1.1", 1, "2.2.2.2", 2, 50, 1, (False,) * 6)
    p = encode_preliminaries(midnight)
    assert p[7] == 0.0 and p[1] == 1 and list(p[8:11]) == [0, 1, 0]


def test_numeric_fixture():
    s = EncodingSchema.create("N", BOUNDS)
    v = encode_numeric(EXAMPLE, s)
    ip = s.slot("src_ip")
    # octet / 255 for 192, 168, 210, 5
    np.testing.assert_allclose(v[ip.offset:ip.stop], [0.7529, 0.6588, 0.8235, 0.0196], atol=1e-4)
    np.testing.assert_array_equal(v[ip.offset:ip.stop] * 255, [192, 168, 210, 5])
    assert v[s.slot("src_port").offset] == pytest.approx(0.8220, abs=1e-4)
    assert v[s.slot("duration").offset] == pytest.approx(0.5)
    assert np.all((v >= 0) & (v <= 1))


def test_numeric_zero_address():
    s = EncodingSchema.create("N", BOUNDS)
    f = FlowRecord(EXAMPLE.date_first_seen, 0.0, "TCP", "0.0.0.0", 0, "1.2.3.4", 0, 50, 1, (False,) * 6)
    ip = s.slot("src_ip")
    assert list(encode(f, s)[ip.offset:ip.stop]) == [0, 0, 0, 0]


def test_binary_fixture():
    s = EncodingSchema.create("B", BOUNDS)
    v = encode_binary(EXAMPLE, s)

    def block(attr):
        sl = s.slot(attr)
        return [int(x) for x in v[sl.offset:sl.stop]]

    assert block("src_ip") == bits("11000000 10101000 11010010 00000101")
    assert block("src_port") == bits("11010010 01110000")
    assert block("bytes") == bits("00000000 00000000 00000000 10010000")
    assert block("packets") == bits("00000000 00000000 00000000 00000001")
    assert block("tcp_flags") == [0, 1, 0, 0, 1, 0]
    assert v[s.slot("daytime").offset] == pytest.approx(41963 / 86400, abs=1e-6)


def test_binary_rejects_huge_counts():
    s = EncodingSchema.create("B", BOUNDS)
    f = FlowRecord(EXAMPLE.date_first_seen, 0.0, "TCP", "1.1.1.1", 1, "2.2.2.2", 2, 2**32, 1, (False,) * 6)
    with pytest.raises(EncodingError):
        encode(f, s)


def test_unfitted_bounds_error():
    with pytest.raises(EncodingError, match="bounds"):
        EncodingSchema.create("N")


def test_fit_bounds():
    base = dict(date_first_seen=EXAMPLE.date_first_seen, proto="TCP", src_ip="1.1.1.1", src_port=1,
                dst_ip="2.2.2.2", dst_port=2, tcp_flags=(False,) * 6)
    flows = [FlowRecord(duration=0.0, bytes=42, packets=1, **base),
             FlowRecord(duration=1.503, bytes=65535, packets=3, **base)]
    b = fit_bounds(flows)
    assert b["duration"] == (0.0, 1.503) and b["bytes"] == (42.0, 65535.0)
    with pytest.raises(EncodingError, match="override"):
        fit_bounds([flows[0], flows[0]])
    assert fit_bounds([flows[0]] * 2, overrides={"duration": (0, 1), "bytes": (0, 1),
                                                 "packets": (0, 2)})["packets"] == (0.0, 2.0)
    with pytest.raises(EncodingError):
        fit_bounds([])


def test_port_slot_inverse():
    s = EncodingSchema.create("N", BOUNDS)
    v = encode(EXAMPLE, s)
    v[s.slot("src_port").offset] = 53872 / 65535
    assert decode(v, s).src_port == 53872
    v[s.slot("src_port").offset] = 0.8220
    assert abs(decode(v, s).src_port - 53872) <= 4


def test_round_trip_binary(corpus):
    s = build_schema("B", corpus)
    back = decode_many(encode_many(corpus, s), s)
    assert [key(f) for f in back] == [key(f) for f in corpus]


def test_round_trip_numeric(corpus):
    s = build_schema("N", corpus)
    X = encode_many(corpus, s)
    assert X.min() >= 0 and X.max() <= 1
    back = decode_many(X, s)
    for a, b in zip(back, corpus):
        assert (a.weekday, a.proto, a.tcp_flags) == (b.weekday, b.proto, b.tcp_flags)
        assert (a.src_ip, a.dst_ip, a.src_port, a.dst_port) == (b.src_ip, b.dst_ip, b.src_port, b.dst_port)


@pytest.fixture(scope="module")
def store(small_corpus):
    return ip2vec.train(small_corpus, ip2vec.IP2VecConfig(dim=8, epochs=1))


def test_round_trip_embedding(small_corpus, store):
    s = build_schema("E", store=store)
    X = encode_many(small_corpus, s, store)
    back = decode_many(X, s, store)
    assert [key(f) for f in back] == [key(f) for f in small_corpus]


def test_embedding_slots_copy_store(small_corpus, store):
    s = build_schema("E", store=store)
    f = small_corpus[0]
    v = encode_embedding(f, s, store)
    sl = s.slot("src_ip")
    np.testing.assert_array_equal(v[sl.offset:sl.stop], store.lookup("ip", f.src_ip))
    proto = s.slot("proto")
    assert v[proto.offset:proto.stop].sum() == 1


def test_embedding_unknown_token(small_corpus, store):
    s = build_schema("E", store=store)
    f = small_corpus[0]
    unused = next(p for p in range(65536) if store.vocab.get("port", str(p)) is None)
    odd = FlowRecord(f.date_first_seen, f.duration, f.proto, f.src_ip, f.src_port, f.dst_ip, unused,
                     f.bytes, f.packets, f.tcp_flags)
    with pytest.raises(EncodingError, match=f"dst_port token '{unused}'"):
        encode(odd, s, store)


def test_embedding_zero_slot_decodes(small_corpus, store):
    s = build_schema("E", store=store)
    v = encode(small_corpus[0], s, store)
    sl = s.slot("dst_ip")
    v[sl.offset:sl.stop] = 0.0
    flow = decode(v, s, store)
    assert store.vocab.get("ip", flow.dst_ip) is not None


def test_schema_io(tmp_path):
    s = EncodingSchema.create("N", BOUNDS)
    s.save(tmp_path / "s.json")
    t = EncodingSchema.load(tmp_path / "s.json")
    assert t == s
    np.testing.assert_array_equal(encode(EXAMPLE, s), encode(EXAMPLE, t))


def test_output_activation():
    assert EncodingSchema.create("B", BOUNDS).output_activation() == "sigmoid"
    acts = EncodingSchema.create("E", embedding_dim=3).output_activation()
    assert len(acts) == 38 and acts.count("linear") == 21


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0))
def test_daytime_quantization_bound(x):
    s = EncodingSchema.create("N", BOUNDS)
    v = encode(EXAMPLE, s)
    v[s.slot("daytime").offset] = x
    f = decode(v, s)
    assert abs(f.seconds_of_day - min(x, 1.0) * 86400) <= 0.5 + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=178, max_size=178))
def test_decode_arbitrary_binary_vectors(values):
    s = EncodingSchema.create("B", BOUNDS)
    f = decode(np.array(values), s)
    assert f.packets >= 1 and f.bytes >= 1
    assert 0 <= f.src_port <= 65535 and 0.0 <= f.duration <= 3.006
