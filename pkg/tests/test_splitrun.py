import json
import socket
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osiris.errors import InvalidParameter
from osiris.nnet import ModelConfig, init_params
from osiris.splitrun import bench_latency, compute_share_report
from osiris.splitrun.nodes import (
    DuNode,
    RuNode,
    RuUnreachable,
    connect_with_retry,
    du_listen,
    du_serve,
    monolithic_posteriors,
    ru_serve,
    serve_connection,
    strip_cp,
)
from osiris.splitrun.protocol import (
    HEADER,
    MAGIC,
    MAX_PAYLOAD,
    VERSION,
    ClassifyResponse,
    ErrorCode,
    FrameError,
    LatentMessage,
    MsgType,
    decode_error,
    decode_header,
    decode_latent,
    decode_request,
    decode_response,
    encode_frame,
    encode_latent,
    encode_request,
    encode_response,
    read_frame,
)
from osiris.wavegen.synth import csi_from_freq, freq_from_time

CFG = ModelConfig()


@pytest.fixture(scope="module")
def params():
    return init_params(CFG, 5)


@pytest.fixture
def ru_port(params):
    stop = threading.Event()
    box, ready = [], threading.Event()
    t = threading.Thread(target=ru_serve, args=(params, CFG),
                         kwargs=dict(stop=stop, ready=lambda p: (box.append(p), ready.set())), daemon=True)
    t.start()
    assert ready.wait(10)
    yield box[0]
    stop.set()
    t.join(5)


def windows(n, seed=0, length=4096):
    r = np.random.default_rng(seed)
    return [(r.standard_normal(length) + 1j * r.standard_normal(length)).astype(np.complex64) for _ in range(n)]


def exchange(raw: bytes, handler):
    """Push ``raw`` into serve_connection over a socketpair; return the reply frames."""
    a, b = socket.socketpair()
    with a, b:
        a.sendall(raw)
        a.shutdown(socket.SHUT_WR)
        served = serve_connection(b, handler)
        b.shutdown(socket.SHUT_WR)
        replies = []
        while (f := read_frame(a)) is not None:
            replies.append(f)
    return served, replies


# ------------------------------------------------------------- protocol

def test_header_layout():
    raw = encode_frame(MsgType.PING, 7, b"abc")
    assert raw[:12] == struct.pack("<HBBII", 0x4F53, 1, 4, 7, 3)
    assert decode_header(raw[:12]) == (4, 7, 3)


@pytest.mark.parametrize("field,value,code", [(0, 0x1234, ErrorCode.BAD_MAGIC), (1, 2, ErrorCode.BAD_VERSION),
                                              (4, MAX_PAYLOAD + 1, ErrorCode.TOO_LARGE)])
def test_fatal_header_errors(field, value, code):
    vals = [MAGIC, VERSION, 1, 0, 0]
    vals[field] = value
    with pytest.raises(FrameError) as ei:
        decode_header(HEADER.pack(*vals))
    assert ei.value.code == code and ei.value.fatal


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 5000), st.integers(0, 2**32 - 1))
def test_request_round_trip(n, seed):
    x = windows(1, seed % 1000, n)[0] if n else np.zeros(0, np.complex64)
    np.testing.assert_array_equal(decode_request(encode_request(x)), x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 200), st.integers(0, 300), st.integers(0, 2**32 - 1), st.integers(0, 255))
def test_latent_round_trip(nf, ng, micros, tag):
    r = np.random.default_rng(nf * 1000 + ng)
    msg = LatentMessage(r.standard_normal(nf).astype(np.float32),
                        (r.standard_normal(ng) + 1j * r.standard_normal(ng)).astype(np.complex64), micros, tag)
    out = decode_latent(encode_latent(msg))
    np.testing.assert_array_equal(out.features, msg.features)
    np.testing.assert_array_equal(out.grid, msg.grid)
    assert (out.ru_micros, out.domain_tag) == (micros, tag)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.lists(st.floats(0, 1, width=32), min_size=7, max_size=7))
def test_response_round_trip(seq, cls, post):
    r = decode_response(encode_response(ClassifyResponse(seq, cls, np.array(post, np.float32), 11, 22)))
    assert (r.seq, r.class_id, r.ru_micros, r.du_micros) == (seq, cls, 11, 22)
    np.testing.assert_array_equal(r.posteriors, np.array(post, np.float32))


@pytest.mark.parametrize("payload", [b"", b"\x01\x00", struct.pack("<I", 3) + b"\0" * 16])
def test_bad_request_payload(payload):
    with pytest.raises(FrameError) as ei:
        decode_request(payload)
    assert ei.value.code == ErrorCode.BAD_PAYLOAD


def test_truncated_latent():
    raw = encode_latent(LatentMessage(np.ones(4, np.float32), np.ones(3, np.complex64)))
    for cut in (1, 10, len(raw) - 1):
        with pytest.raises(FrameError):
            decode_latent(raw[:cut])
    with pytest.raises(FrameError):
        decode_latent(raw + b"x")


# ---------------------------------------------------------------- RU

def test_strip_cp():
    x = np.arange(4384)
    np.testing.assert_array_equal(strip_cp(x), np.arange(288, 4384))
    assert strip_cp(np.arange(4096)).size == 4096
    with pytest.raises(FrameError):
        strip_cp(np.arange(100))


def test_zero_window_gives_zero_latent(params):
    msg = RuNode(params, CFG).latent(np.zeros(4384, np.complex64))
    assert msg.features.shape == (96,) and not np.any(msg.features)
    assert msg.grid.shape == (4096,)


def test_ping_and_seq_rules(params):
    ru = RuNode(params, CFG).handle
    raw = (encode_frame(MsgType.PING, 1, b"hi") + encode_frame(MsgType.PING, 1, b"again")
           + encode_frame(MsgType.PING, 2, b"ok"))
    n, replies = exchange(raw, ru)
    assert n == 3
    assert [(f.msg_type, f.seq) for f in replies] == [(4, 1), (5, 1), (4, 2)]
    assert replies[0].payload == b"hi"
    assert decode_error(replies[1].payload)[0] == ErrorCode.BAD_SEQ


def test_recoverable_errors_keep_connection(params):
    ru = RuNode(params, CFG).handle
    bad_len = HEADER.pack(MAGIC, VERSION, MsgType.CLASSIFY_REQUEST, 1, 8) + struct.pack("<I", 9) + b"\0" * 4
    raw = bad_len + encode_frame(MsgType.LATENT, 2, b"") + encode_frame(MsgType.PING, 3)
    _, replies = exchange(raw, ru)
    codes = [decode_error(f.payload)[0] if f.msg_type == MsgType.ERROR else None for f in replies]
    assert codes == [ErrorCode.BAD_PAYLOAD, ErrorCode.BAD_TYPE, None]


def test_fatal_error_closes_connection(params):
    ru = RuNode(params, CFG).handle
    raw = encode_frame(MsgType.PING, 1) + HEADER.pack(0xBEEF, 1, 4, 2, 0) + encode_frame(MsgType.PING, 3)
    n, replies = exchange(raw, ru)
    assert n == 1
    assert [f.msg_type for f in replies] == [MsgType.PING, MsgType.ERROR]
    assert decode_error(replies[1].payload)[0] == ErrorCode.BAD_MAGIC


def test_fuzzed_headers_only_produce_error_frames(params):
    ru = RuNode(params, CFG).handle
    r = np.random.default_rng(9)
    for _ in range(200):
        raw = bytearray(encode_frame(MsgType.PING, 5, b"pp"))
        pos = int(r.integers(0, 12))
        raw[pos] ^= int(r.integers(1, 256))
        _, replies = exchange(bytes(raw) + encode_frame(MsgType.PING, 0), ru)
        assert all(f.msg_type in (MsgType.ERROR, MsgType.PING) for f in replies)


# ------------------------------------------------------------ DU + RU

def test_split_matches_monolithic(params, ru_port):
    du = DuNode.connect(params, CFG, "127.0.0.1", ru_port)
    try:
        for w in windows(5, 3, 4384):
            res = du.classify(w)
            t = strip_cp(w)
            f = freq_from_time(t)
            mono = monolithic_posteriors(t, f, csi_from_freq(f), params, CFG)
            np.testing.assert_array_equal(res.posteriors, mono.astype(np.float32))
        assert du.ping(b"x") == b"x"
    finally:
        du.close()


def test_du_serve_writes_json_lines(params, ru_port, tmp_path):
    du = DuNode.connect(params, CFG, "127.0.0.1", ru_port)
    sink = tmp_path / "sink.jsonl"
    try:
        assert du_serve(du, windows(100, 1), sink) == 100
    finally:
        du.close()
    lines = [json.loads(s) for s in sink.read_text().splitlines()]
    assert len(lines) == 100
    seqs = [d["seq"] for d in lines]
    assert seqs == sorted(seqs) and len(set(seqs)) == 100
    for d in lines:
        assert d["class"] == int(np.argmax(d["posteriors"]))
        assert abs(sum(d["posteriors"]) - 1) < 1e-5
        assert d["ru_micros"] >= 0 and d["du_micros"] >= 0 and d["wall_micros"] >= d["du_micros"]


def test_ru_unreachable():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(RuUnreachable):
        connect_with_retry("127.0.0.1", port, retries=2, backoff=0.01)


def test_du_listen_mode(params, ru_port):
    du = DuNode.connect(params, CFG, "127.0.0.1", ru_port)
    stop, box, ready = threading.Event(), [], threading.Event()
    t = threading.Thread(target=du_listen, args=(du,),
                         kwargs=dict(stop=stop, ready=lambda p: (box.append(p), ready.set())), daemon=True)
    t.start()
    assert ready.wait(10)
    try:
        with socket.create_connection(("127.0.0.1", box[0])) as c:
            c.sendall(encode_frame(MsgType.CLASSIFY_REQUEST, 1, encode_request(windows(1)[0])))
            f = read_frame(c)
            assert f.msg_type == MsgType.CLASSIFY_RESPONSE
            resp = decode_response(f.payload)
            assert resp.seq == 1 and resp.class_id == int(np.argmax(resp.posteriors))
            c.sendall(encode_frame(MsgType.LATENT, 2))
            assert read_frame(c).msg_type == MsgType.ERROR
    finally:
        stop.set()
        t.join(5)
        du.close()


# ---------------------------------------------------------------- bench

def test_share_report_sums_to_one():
    shares = compute_share_report()
    assert sum(shares.values()) == pytest.approx(1.0)
    assert shares["ru_fraction"] == shares["du_freq_fraction"]


def test_bench_monolithic(params):
    sample = [(w, w, w[:1638]) for w in windows(2)]
    res = bench_latency(params, sample, CFG, iterations=30, warmup=5)
    assert res.iterations == 30 and len(res.samples_us) == 25
    assert res.median_us <= res.p95_us
    assert sum(res.stage_shares.values()) == pytest.approx(1.0)
    one = bench_latency(params, sample, CFG, iterations=51, warmup=50)
    assert one.median_us == one.p95_us


def test_bench_split_loopback(params):
    sample = [(w, None, None) for w in windows(2)]
    res = bench_latency(params, sample, CFG, iterations=12, warmup=2, mode="split-loopback")
    assert res.wire_us is not None and res.median_us > 0


@pytest.mark.parametrize("kw", [dict(iterations=5, warmup=5), dict(iterations=5, warmup=-1), dict(mode="gpu")])
def test_bench_validation(params, kw):
    with pytest.raises(InvalidParameter):
        bench_latency(params, [(np.zeros(4096), np.zeros(4096), np.zeros(1638))], CFG, **kw)
