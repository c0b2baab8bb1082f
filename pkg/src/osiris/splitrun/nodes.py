"""
RU and DU services for split inference.

The RU strips the cyclic prefix, runs the time-domain backbone and forwards
its latent together with the FFT grid. The DU derives the CSI from that grid,
runs the frequency and CSI backbones plus the fusion head, and reports each
classification as one JSON line.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..dsp import CP_LEN, FFT_SIZE
from ..errors import OsirisError
from ..nnet.model import ModelConfig, backbone_forward, fused_forward, normalize_domain
from ..wavegen.synth import csi_from_freq, freq_from_time
from .protocol import (
    ClassifyResponse,
    ErrorCode,
    Frame,
    FrameError,
    LatentMessage,
    MsgType,
    decode_error,
    decode_latent,
    decode_request,
    encode_error,
    encode_frame,
    encode_latent,
    encode_request,
    encode_response,
    error_frame,
    read_frame,
)

log = logging.getLogger(__name__)


def _micros(t0: int) -> int:
    return (time.perf_counter_ns() - t0) // 1000


def domain_features(x, cfg: ModelConfig, params, domain: str) -> np.ndarray:
    """Normalize one complex sequence and run it through ``domain``'s backbone."""
    return backbone_forward(normalize_domain(x), cfg, params, domain)


def strip_cp(samples: np.ndarray) -> np.ndarray:
    """Accept a CP-prefixed window or an already stripped symbol."""
    if samples.size == FFT_SIZE + CP_LEN:
        return samples[CP_LEN:]
    if samples.size == FFT_SIZE:
        return samples
    raise FrameError(ErrorCode.BAD_PAYLOAD,
                     f"expected {FFT_SIZE} or {FFT_SIZE + CP_LEN} samples, got {samples.size}")


def monolithic_posteriors(time_seq, freq, csi, params, cfg: ModelConfig = ModelConfig()) -> np.ndarray:
    """Single-sample fused inference on precomputed domains."""
    f_t = domain_features(time_seq, cfg, params, "time")
    f_f = domain_features(freq, cfg, params, "freq")
    f_c = domain_features(csi, cfg, params, "csi")
    return fused_forward(f_t, f_f, f_c, params)


# -------------------------------------------------------------------- RU

class RuNode:
    """Stateless RU compute; ``handle`` maps one frame to one reply frame."""

    def __init__(self, params, cfg: ModelConfig = ModelConfig()):
        self.params = params
        self.cfg = cfg

    def latent(self, samples) -> LatentMessage:
        t0 = time.perf_counter_ns()
        x = strip_cp(np.asarray(samples, dtype=np.complex64))
        grid = freq_from_time(x)
        feats = domain_features(x, self.cfg, self.params, "time")
        return LatentMessage(feats, grid, _micros(t0))

    def handle(self, frame: Frame) -> bytes:
        if frame.msg_type == MsgType.PING:
            return encode_frame(MsgType.PING, frame.seq, frame.payload)
        if frame.msg_type == MsgType.CLASSIFY_REQUEST:
            msg = self.latent(decode_request(frame.payload))
            return encode_frame(MsgType.LATENT, frame.seq, encode_latent(msg))
        raise FrameError(ErrorCode.BAD_TYPE, f"RU does not accept msg_type {frame.msg_type}")


def serve_connection(sock: socket.socket, handler) -> int:
    """
    Serve frames on ``sock`` until EOF or a fatal framing error.

    ``handler(frame) -> bytes`` produces the reply. Recoverable problems yield
    an error frame and the loop continues. Returns the number of frames read.
    """
    last_seq = -1
    n = 0
    while True:
        try:
            frame = read_frame(sock)
        except FrameError as exc:
            _send_quiet(sock, error_frame(exc))
            return n
        except (ConnectionError, OSError):
            return n
        if frame is None:
            return n
        n += 1
        try:
            if frame.seq <= last_seq:
                raise FrameError(ErrorCode.BAD_SEQ, f"seq {frame.seq} not above {last_seq}", seq=frame.seq)
            last_seq = frame.seq
            reply = handler(frame)
        except FrameError as exc:
            reply = error_frame(exc, frame.seq)
        except Exception as exc:  # keep serving on compute failures
            log.exception("handler failed")
            reply = encode_frame(MsgType.ERROR, frame.seq, encode_error(ErrorCode.INTERNAL, repr(exc)))
        if not _send_quiet(sock, reply):
            return n


def _send_quiet(sock: socket.socket, data: bytes) -> bool:
    try:
        sock.sendall(data)
        return True
    except OSError:
        return False


def _listen(host: str, port: int) -> socket.socket:
    srv = socket.create_server((host, port))
    srv.settimeout(0.2)
    return srv


def serve_forever(srv: socket.socket, handler, stop: threading.Event | None = None) -> None:
    """Accept one connection at a time and serve it until ``stop`` is set."""
    stop = stop or threading.Event()
    with srv:
        while not stop.is_set():
            try:
                conn, peer = srv.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            log.info("connection from %s", peer)
            with conn:
                conn.settimeout(None)
                if conn.family != socket.AF_UNIX:
                    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                serve_connection(conn, handler)


def ru_serve(params, cfg: ModelConfig = ModelConfig(), host: str = "127.0.0.1", port: int = 0,
             stop: threading.Event | None = None, ready=None) -> None:
    """Run the RU until ``stop`` is set; ``ready(port)`` is called once listening."""
    srv = _listen(host, port)
    if ready is not None:
        ready(srv.getsockname()[1])
    serve_forever(srv, RuNode(params, cfg).handle, stop)


# -------------------------------------------------------------------- DU

@dataclass
class Classification:
    seq: int
    class_id: int
    posteriors: np.ndarray
    ru_micros: int
    du_micros: int
    wall_micros: int
    stage_micros: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "seq": self.seq,
            "class": self.class_id,
            "posteriors": [float(p) for p in self.posteriors],
            "ru_micros": self.ru_micros,
            "du_micros": self.du_micros,
            "wall_micros": self.wall_micros,
        })


class RuUnreachable(OsirisError, ConnectionError):
    pass


def connect_with_retry(host: str, port: int, retries: int = 5, backoff: float = 0.05,
                       max_backoff: float = 1.0) -> socket.socket:
    """Connect with exponential backoff; raise RuUnreachable after ``retries`` attempts."""
    delay = backoff
    for attempt in range(1, retries + 1):
        try:
            sock = socket.create_connection((host, port), timeout=5.0)
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as exc:
            log.warning("RU %s:%d unreachable (attempt %d/%d): %s", host, port, attempt, retries, exc)
            if attempt < retries:
                time.sleep(delay)
                delay = min(2 * delay, max_backoff)
    raise RuUnreachable(f"RU at {host}:{port} unreachable after {retries} attempts")


class DuNode:
    """DU side of the split; owns the connection to the RU."""

    def __init__(self, params, cfg: ModelConfig = ModelConfig(), sock: socket.socket | None = None):
        self.params = params
        self.cfg = cfg
        self.sock = sock
        self.seq = 0

    @classmethod
    def connect(cls, params, cfg: ModelConfig, host: str, port: int, **retry) -> "DuNode":
        return cls(params, cfg, connect_with_retry(host, port, **retry))

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    def _round_trip(self, msg_type: int, payload: bytes) -> Frame:
        self.seq += 1
        self.sock.sendall(encode_frame(msg_type, self.seq, payload))
        frame = read_frame(self.sock)
        if frame is None:
            raise ConnectionError("RU closed the connection")
        if frame.msg_type == MsgType.ERROR:
            code, text = decode_error(frame.payload)
            raise FrameError(ErrorCode(code) if code in ErrorCode._value2member_map_ else ErrorCode.INTERNAL,
                             f"RU error: {text}", seq=frame.seq)
        if frame.seq != self.seq:
            raise FrameError(ErrorCode.BAD_SEQ, f"RU answered seq {frame.seq} to request {self.seq}")
        return frame

    def ping(self, payload: bytes = b"") -> bytes:
        return self._round_trip(MsgType.PING, payload).payload

    def finish(self, latent: LatentMessage, seq: int, wall_t0: int | None = None) -> Classification:
        """DU compute on a received latent."""
        t0 = time.perf_counter_ns()
        csi = csi_from_freq(latent.grid)
        f_f = domain_features(latent.grid, self.cfg, self.params, "freq")
        t1 = time.perf_counter_ns()
        f_c = domain_features(csi, self.cfg, self.params, "csi")
        t2 = time.perf_counter_ns()
        probs = fused_forward(latent.features, f_f, f_c, self.params)
        t3 = time.perf_counter_ns()
        stages = {"freq": (t1 - t0) / 1e3, "csi": (t2 - t1) / 1e3, "head": (t3 - t2) / 1e3}
        return Classification(seq, int(np.argmax(probs)), probs.astype(np.float32), latent.ru_micros,
                              (t3 - t0) // 1000, _micros(wall_t0 if wall_t0 is not None else t0), stages)

    def classify(self, samples) -> Classification:
        t0 = time.perf_counter_ns()
        frame = self._round_trip(MsgType.CLASSIFY_REQUEST, encode_request(samples))
        if frame.msg_type != MsgType.LATENT:
            raise FrameError(ErrorCode.BAD_TYPE, f"expected a latent frame, got type {frame.msg_type}")
        latent = decode_latent(frame.payload)
        if latent.features.size != self.cfg.backbone.out_features:
            raise FrameError(ErrorCode.BAD_PAYLOAD,
                             f"latent has {latent.features.size} features, expected {self.cfg.backbone.out_features}")
        return self.finish(latent, frame.seq, t0)

    def handle(self, frame: Frame) -> bytes:
        """Answer a client's classify_request with a classify_response."""
        if frame.msg_type == MsgType.PING:
            return encode_frame(MsgType.PING, frame.seq, frame.payload)
        if frame.msg_type != MsgType.CLASSIFY_REQUEST:
            raise FrameError(ErrorCode.BAD_TYPE, f"DU does not accept msg_type {frame.msg_type}")
        res = self.classify(decode_request(frame.payload))
        resp = ClassifyResponse(frame.seq, res.class_id, res.posteriors, res.ru_micros, res.du_micros)
        return encode_frame(MsgType.CLASSIFY_RESPONSE, frame.seq, encode_response(resp))


def du_serve(node: DuNode, windows, sink_path) -> int:
    """Classify every window through the RU and append one JSON line each to ``sink_path``."""
    n = 0
    last = -1
    with open(sink_path, "a", encoding="utf-8") as sink:
        for w in windows:
            res = node.classify(w)
            if res.seq <= last:
                raise FrameError(ErrorCode.BAD_SEQ, f"non-monotonic seq {res.seq} after {last}")
            last = res.seq
            sink.write(res.to_json() + "\n")
            sink.flush()
            n += 1
    return n


def du_listen(node: DuNode, host: str = "127.0.0.1", port: int = 0,
              stop: threading.Event | None = None, ready=None) -> None:
    """Serve classify requests from clients, forwarding each to the RU."""
    srv = _listen(host, port)
    if ready is not None:
        ready(srv.getsockname()[1])
    serve_forever(srv, node.handle, stop)
