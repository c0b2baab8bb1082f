"""
Length-prefixed framing between the RU, the DU and DU clients.

Every frame starts with a 12-byte little-endian header::

    magic u16 (0x4F53) | version u8 (1) | msg_type u8 | seq u32 | payload_len u32

Payloads:

* ``CLASSIFY_REQUEST`` (2): sample_count u32, then f32 (I, Q) pairs. 4384 samples
  are treated as a CP-prefixed window, 4096 as an already CP-stripped one.
* ``LATENT`` (1): domain_tag u8, feature_count u32, f32 features, followed by
  grid_len u32, the f32 (I, Q) frequency grid, and ru_micros u32.
* ``CLASSIFY_RESPONSE`` (3): seq u32, class_id u8, 7 f32 posteriors,
  ru_micros u32, du_micros u32.
* ``PING`` (4): arbitrary payload, echoed back.
* ``ERROR`` (5): code u16 plus a utf-8 message.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError

MAGIC = 0x4F53
VERSION = 1
HEADER = struct.Struct("<HBBII")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 1 << 20
NUM_POSTERIORS = 7


class MsgType(enum.IntEnum):
    LATENT = 1
    CLASSIFY_REQUEST = 2
    CLASSIFY_RESPONSE = 3
    PING = 4
    ERROR = 5


class ErrorCode(enum.IntEnum):
    BAD_MAGIC = 1
    BAD_VERSION = 2
    BAD_TYPE = 3
    TOO_LARGE = 4
    BAD_PAYLOAD = 5
    BAD_SEQ = 6
    INTERNAL = 7


class FrameError(FormatError):
    """A frame could not be accepted.

    ``fatal`` errors leave the stream position unknown (bad magic, version or
    length), so the connection must be closed after reporting them.
    """

    def __init__(self, code: ErrorCode, message: str, fatal: bool = False, seq: int = 0):
        super().__init__(message)
        self.code = code
        self.fatal = fatal
        self.seq = seq


@dataclass(frozen=True)
class Frame:
    msg_type: int
    seq: int
    payload: bytes = b""


def encode_frame(msg_type: int, seq: int, payload: bytes = b"") -> bytes:
    return HEADER.pack(MAGIC, VERSION, int(msg_type), seq & 0xFFFFFFFF, len(payload)) + payload


def decode_header(raw: bytes) -> tuple[int, int, int]:
    """Validate a header; return ``(msg_type, seq, payload_len)``."""
    magic, version, msg_type, seq, length = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FrameError(ErrorCode.BAD_MAGIC, f"bad magic 0x{magic:04x}", fatal=True, seq=seq)
    if version != VERSION:
        raise FrameError(ErrorCode.BAD_VERSION, f"unsupported version {version}", fatal=True, seq=seq)
    if length > MAX_PAYLOAD:
        raise FrameError(ErrorCode.TOO_LARGE, f"payload_len {length} exceeds {MAX_PAYLOAD}", fatal=True, seq=seq)
    return msg_type, seq, length


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly ``n`` bytes; None on a clean EOF before the first byte."""
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ConnectionError("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> Frame | None:
    raw = recv_exact(sock, HEADER_SIZE)
    if raw is None:
        return None
    msg_type, seq, length = decode_header(raw)
    payload = recv_exact(sock, length) if length else b""
    if payload is None:
        raise ConnectionError("connection closed mid-frame")
    return Frame(msg_type, seq, payload)


# ------------------------------------------------------------ payloads

def _iq_bytes(samples) -> bytes:
    return np.ascontiguousarray(samples, dtype="<c8").tobytes()


def _iq_from(payload: bytes, offset: int, count: int) -> np.ndarray:
    return np.frombuffer(payload, dtype="<c8", count=count, offset=offset).astype(np.complex64)


def encode_request(samples) -> bytes:
    samples = np.asarray(samples)
    return struct.pack("<I", samples.size) + _iq_bytes(samples)


def decode_request(payload: bytes) -> np.ndarray:
    if len(payload) < 4:
        raise FrameError(ErrorCode.BAD_PAYLOAD, "request shorter than its count field")
    (count,) = struct.unpack_from("<I", payload)
    if len(payload) != 4 + 8 * count:
        raise FrameError(ErrorCode.BAD_PAYLOAD,
                         f"request declares {count} samples but carries {len(payload) - 4} bytes")
    return _iq_from(payload, 4, count)


@dataclass
class LatentMessage:
    features: np.ndarray       # float32
    grid: np.ndarray           # complex64 FFT-shifted frequency grid
    ru_micros: int = 0
    domain_tag: int = 0        # 0 = time


def encode_latent(msg: LatentMessage) -> bytes:
    feats = np.ascontiguousarray(msg.features, dtype="<f4")
    grid = np.asarray(msg.grid)
    return (struct.pack("<BI", msg.domain_tag, feats.size) + feats.tobytes()
            + struct.pack("<I", grid.size) + _iq_bytes(grid)
            + struct.pack("<I", min(int(msg.ru_micros), 0xFFFFFFFF)))


def decode_latent(payload: bytes) -> LatentMessage:
    try:
        tag, n_feat = struct.unpack_from("<BI", payload, 0)
        off = 5
        feats = np.frombuffer(payload, dtype="<f4", count=n_feat, offset=off).astype(np.float32)
        off += 4 * n_feat
        (n_grid,) = struct.unpack_from("<I", payload, off)
        off += 4
        grid = _iq_from(payload, off, n_grid)
        off += 8 * n_grid
        (ru_micros,) = struct.unpack_from("<I", payload, off)
        off += 4
    except (struct.error, ValueError) as exc:
        raise FrameError(ErrorCode.BAD_PAYLOAD, f"malformed latent payload: {exc}") from exc
    if off != len(payload):
        raise FrameError(ErrorCode.BAD_PAYLOAD, "trailing bytes in latent payload")
    return LatentMessage(feats, grid, ru_micros, tag)


@dataclass
class ClassifyResponse:
    seq: int
    class_id: int
    posteriors: np.ndarray  # float32[7]
    ru_micros: int = 0
    du_micros: int = 0


_RESPONSE = struct.Struct(f"<IB{NUM_POSTERIORS}fII")


def encode_response(r: ClassifyResponse) -> bytes:
    return _RESPONSE.pack(r.seq, r.class_id, *np.asarray(r.posteriors, dtype=np.float32).tolist(),
                          min(int(r.ru_micros), 0xFFFFFFFF), min(int(r.du_micros), 0xFFFFFFFF))


def decode_response(payload: bytes) -> ClassifyResponse:
    if len(payload) != _RESPONSE.size:
        raise FrameError(ErrorCode.BAD_PAYLOAD, "classify response has the wrong size")
    seq, cls, *rest = _RESPONSE.unpack(payload)
    post = np.array(rest[:NUM_POSTERIORS], dtype=np.float32)
    return ClassifyResponse(seq, cls, post, rest[NUM_POSTERIORS], rest[NUM_POSTERIORS + 1])


def encode_error(code: int, message: str) -> bytes:
    return struct.pack("<H", int(code)) + message.encode("utf-8", "replace")[:1024]


def decode_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 2:
        return int(ErrorCode.INTERNAL), ""
    (code,) = struct.unpack_from("<H", payload)
    return code, payload[2:].decode("utf-8", "replace")


def error_frame(exc: FrameError, seq: int | None = None) -> bytes:
    return encode_frame(MsgType.ERROR, exc.seq if seq is None else seq, encode_error(exc.code, str(exc)))
