"""
OSDS dataset files.

Layout (little-endian)::

    header  magic "OSDS" | version u16 | sample_count u32 | time_len u32
            | freq_len u32 | csi_len u32 | class_count u8
    record  label u8 | snr_db f32 | sir_db f32 | seed u64
            | time, freq, csi as interleaved f32 (I, Q) pairs
"""

from __future__ import annotations

import itertools
import logging
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, InvalidParameter
from .interferers import InterferenceClass
from .synth import CSI_LEN, FREQ_LEN, SIR_RANGE_DB, SNR_RANGE_DB, TIME_LEN, MixSpec, synthesize

log = logging.getLogger(__name__)

MAGIC = b"OSDS"
VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHIIIIB")
HEADER_SIZE = HEADER_STRUCT.size

DEFAULT_SNRS = (-12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
DEFAULT_SIRS = (-10.0, -5.0, 0.0, 5.0, 10.0)
DEFAULT_CLASSES = tuple(InterferenceClass)

_MASK64 = (1 << 64) - 1


def record_dtype(time_len=TIME_LEN, freq_len=FREQ_LEN, csi_len=CSI_LEN) -> np.dtype:
    return np.dtype([
        ("label", "u1"), ("snr_db", "<f4"), ("sir_db", "<f4"), ("seed", "<u8"),
        ("time", "<c8", (time_len,)), ("freq", "<c8", (freq_len,)), ("csi", "<c8", (csi_len,)),
    ])


RECORD_DTYPE = record_dtype()
RECORD_SIZE = RECORD_DTYPE.itemsize


@dataclass(frozen=True)
class DatasetHeader:
    sample_count: int
    time_len: int = TIME_LEN
    freq_len: int = FREQ_LEN
    csi_len: int = CSI_LEN
    class_count: int = len(InterferenceClass)
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER_STRUCT.pack(MAGIC, self.version, self.sample_count, self.time_len,
                                  self.freq_len, self.csi_len, self.class_count)

    @classmethod
    def unpack(cls, raw: bytes) -> "DatasetHeader":
        if len(raw) < HEADER_SIZE:
            raise FormatError("truncated OSDS header")
        magic, version, count, tl, fl, cl, cc = HEADER_STRUCT.unpack(raw[:HEADER_SIZE])
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported OSDS version {version}")
        return cls(count, tl, fl, cl, cc, version)


def splitmix64(base_seed: int, index: int) -> int:
    """SplitMix64 output for stream position ``index`` of ``base_seed``."""
    z = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def plan_records(classes, snr_list, sir_list, per_cell: int, base_seed: int) -> list[MixSpec]:
    """Every record's MixSpec in file order (cells shuffled by ``base_seed``)."""
    classes = [InterferenceClass(c) for c in classes]
    snr_list = [float(s) for s in snr_list]
    sir_list = [float(s) for s in sir_list]
    if not isinstance(per_cell, (int, np.integer)) or per_cell < 1:
        raise InvalidParameter(f"per_cell must be >= 1, got {per_cell}")
    if not classes or not snr_list or not sir_list:
        raise InvalidParameter("class, SNR and SIR lists must be non-empty")
    for lst, name in ((classes, "class"), (snr_list, "SNR"), (sir_list, "SIR")):
        if len(set(lst)) != len(lst):
            raise InvalidParameter(f"duplicate {name} values")
    if any(not SNR_RANGE_DB[0] <= s <= SNR_RANGE_DB[1] for s in snr_list):
        raise InvalidParameter(f"SNR values must lie in {SNR_RANGE_DB}")
    if any(not SIR_RANGE_DB[0] <= s <= SIR_RANGE_DB[1] for s in sir_list):
        raise InvalidParameter(f"SIR values must lie in {SIR_RANGE_DB}")
    cells = [c for c in itertools.product(classes, snr_list, sir_list) for _ in range(per_cell)]
    order = np.random.default_rng(base_seed).permutation(len(cells))
    specs = []
    for idx, pos in enumerate(order):
        cls, snr, sir = cells[pos]
        # stored as f32 on disk; round now so regeneration from a record matches
        specs.append(MixSpec(float(np.float32(sir)), float(np.float32(snr)), cls,
                             splitmix64(base_seed, idx)))
    return specs


def make_records(specs: list[MixSpec]) -> np.ndarray:
    out = np.zeros(len(specs), dtype=RECORD_DTYPE)
    for i, spec in enumerate(specs):
        s = synthesize(spec)
        out[i] = (int(spec.cls), spec.snr_db, spec.sir_db, spec.seed, s.time, s.freq, s.csi)
    return out


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("OSIRIS_THREADS", os.cpu_count() or 1))
    return max(1, min(workers, os.cpu_count() or 1))


def generate_dataset(classes, snr_list, sir_list, per_cell: int, base_seed: int,
                     out_path, workers: int | None = None, chunk: int = 64) -> DatasetHeader:
    """
    Synthesize ``|classes|*|snr|*|sir|*per_cell`` records into an OSDS file.

    Records are generated in parallel chunks but written in index order, so the
    file is independent of the worker count.
    """
    specs = plan_records(classes, snr_list, sir_list, per_cell, base_seed)
    header = DatasetHeader(len(specs))
    chunks = [specs[i:i + chunk] for i in range(0, len(specs), chunk)]
    out_path = Path(out_path)
    n_workers = _worker_count(workers)
    try:
        with open(out_path, "wb") as fh:
            fh.write(header.pack())
            if n_workers == 1:
                for c in chunks:
                    make_records(c).tofile(fh)
            else:
                with ProcessPoolExecutor(n_workers) as pool:
                    for recs in pool.map(make_records, chunks):
                        recs.tofile(fh)
    except OSError as exc:
        raise IOError(f"cannot write dataset {out_path}: {exc}") from exc
    log.info("wrote %d records to %s", header.sample_count, out_path)
    return header


class Dataset:
    """Read-only, memory-mapped view of an OSDS file."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            with open(self.path, "rb") as fh:
                self.header = DatasetHeader.unpack(fh.read(HEADER_SIZE))
        except OSError as exc:
            raise IOError(f"cannot read dataset {self.path}: {exc}") from exc
        h = self.header
        self.dtype = record_dtype(h.time_len, h.freq_len, h.csi_len)
        expected = HEADER_SIZE + h.sample_count * self.dtype.itemsize
        actual = self.path.stat().st_size
        if actual != expected:
            raise FormatError(f"{self.path}: size {actual} != expected {expected}")
        self.records = np.memmap(self.path, dtype=self.dtype, mode="r",
                                 offset=HEADER_SIZE, shape=(h.sample_count,))
        # metadata is small; keep it resident
        self.labels = np.array(self.records["label"], dtype=np.int64)
        self.snr_db = np.array(self.records["snr_db"], dtype=np.float32)
        self.sir_db = np.array(self.records["sir_db"], dtype=np.float32)
        self.seeds = np.array(self.records["seed"], dtype=np.uint64)

    def __len__(self) -> int:
        return self.header.sample_count

    def domains(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(time, freq, csi) complex64 arrays for an index or index array."""
        rec = self.records[idx]
        return np.asarray(rec["time"]), np.asarray(rec["freq"]), np.asarray(rec["csi"])

    def spec(self, i: int) -> MixSpec:
        return MixSpec(float(self.sir_db[i]), float(self.snr_db[i]),
                       InterferenceClass(int(self.labels[i])), int(self.seeds[i]))
