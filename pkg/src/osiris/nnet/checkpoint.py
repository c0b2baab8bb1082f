"""
OSMW checkpoints.

magic "OSMW" | version u16 | tensor_count u32, then per tensor:
name_len u16 | utf-8 name | rank u8 | dims u32 x rank | f32 little-endian data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import ParameterSet

MAGIC = b"OSMW"
VERSION = 1


def save_checkpoint(params: ParameterSet, path) -> None:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"tensor name too long ({len(raw)} bytes)")
        arr = np.asarray(value)
        if arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} has rank {arr.ndim}")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> ParameterSet:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("bad checkpoint magic")
    version, count = r.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not valid utf-8") from exc
        if name in params:
            raise FormatError(f"duplicate tensor {name!r}")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        n = int(np.prod(dims, dtype=np.int64))
        params[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(data):
        raise FormatError("trailing bytes after last tensor")
    return params
