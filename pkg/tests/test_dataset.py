import hashlib
import itertools
import struct

import numpy as np
import pytest

from osiris.errors import FormatError, InvalidParameter
from osiris.wavegen.dataset import (
    HEADER_SIZE,
    RECORD_SIZE,
    Dataset,
    DatasetHeader,
    generate_dataset,
    plan_records,
    splitmix64,
)
from osiris.wavegen.interferers import InterferenceClass
from osiris.wavegen.synth import synthesize

ALL_SNR = [-12, -8, -4, 0, 4, 8, 12, 16, 20]
ALL_SIR = [-10, -5, 0, 5, 10]


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_record_size():
    # label u8, snr f32, sir f32, seed u64, then (4096 + 4096 + 1638) complex64
    assert RECORD_SIZE == 1 + 4 + 4 + 8 + 8 * (4096 + 4096 + 1638) == 78657
    assert HEADER_SIZE == 23


def test_splitmix64_reference_outputs():
    # published SplitMix64 stream for seed 0
    assert [splitmix64(0, i) for i in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_full_grid_record_count():
    specs = plan_records(list(InterferenceClass), ALL_SNR, ALL_SIR, 1024, 0)
    assert len(specs) == 7 * 9 * 5 * 1024 == 322_560


def test_cells_are_balanced_and_shuffled():
    specs = plan_records(list(InterferenceClass), [0, 4], [-10, 10], 3, 5)
    cells = [(int(s.cls), s.snr_db, s.sir_db) for s in specs]
    counts = {c: cells.count(c) for c in set(cells)}
    assert len(counts) == 7 * 2 * 2 and set(counts.values()) == {3}
    ordered = [(int(c), float(a), float(b)) for c, a, b in
               itertools.product(range(7), [0, 4], [-10, 10]) for _ in range(3)]
    assert cells != ordered
    assert len({s.seed for s in specs}) == len(specs)
    assert [s.seed for s in specs] == [splitmix64(5, i) for i in range(len(specs))]


@pytest.mark.parametrize("kwargs", [
    dict(per_cell=0),
    dict(per_cell=-3),
    dict(snr=[]),
    dict(snr=[0, 0]),
    dict(sir=[11]),
    dict(snr=[-20]),
])
def test_plan_validation(kwargs):
    with pytest.raises(InvalidParameter):
        plan_records([InterferenceClass.LTE], kwargs.get("snr", [0]), kwargs.get("sir", [0]),
                     kwargs.get("per_cell", 1), 0)


def test_file_size_exact(tmp_path):
    p = tmp_path / "four.osds"
    hdr = generate_dataset([InterferenceClass.Radar], [4.0], [0.0], 4, 1, p, workers=1)
    assert hdr.sample_count == 4
    assert p.stat().st_size == HEADER_SIZE + 4 * RECORD_SIZE


def test_deterministic_and_worker_independent(tmp_path):
    args = ([InterferenceClass.Noise, InterferenceClass.WiFi], [-4.0, 12.0], [5.0], 3, 11)
    a, b, c = tmp_path / "a.osds", tmp_path / "b.osds", tmp_path / "c.osds"
    generate_dataset(*args, a, workers=1)
    generate_dataset(*args, b, workers=1)
    generate_dataset(*args, c, workers=2, chunk=2)
    assert sha(a) == sha(b) == sha(c)


def test_records_match_synthesis(small_dataset):
    ds = small_dataset
    assert len(ds) == 70
    for i in (0, 17, 69):
        spec = ds.spec(i)
        s = synthesize(spec)
        t, f, c = ds.domains(i)
        np.testing.assert_array_equal(t, s.time)
        np.testing.assert_array_equal(f, s.freq)
        np.testing.assert_array_equal(c, s.csi)
        assert ds.labels[i] == int(spec.cls)


def test_metadata_columns(small_dataset):
    ds = small_dataset
    assert set(np.unique(ds.labels)) == set(range(7))
    assert set(np.unique(ds.sir_db)) == {-10, -5, 0, 5, 10}
    assert set(np.unique(ds.snr_db)) == {4}


def test_header_round_trip():
    h = DatasetHeader(1234)
    assert DatasetHeader.unpack(h.pack()) == h


def test_bad_magic_and_version():
    raw = bytearray(DatasetHeader(1).pack())
    with pytest.raises(FormatError):
        DatasetHeader.unpack(b"XXXX" + bytes(raw[4:]))
    raw[4:6] = struct.pack("<H", 9)
    with pytest.raises(FormatError):
        DatasetHeader.unpack(bytes(raw))
    with pytest.raises(FormatError):
        DatasetHeader.unpack(bytes(raw[:10]))


def test_truncated_file_rejected(tmp_path):
    p = tmp_path / "t.osds"
    generate_dataset([InterferenceClass.LTE], [0.0], [0.0], 2, 3, p, workers=1)
    data = p.read_bytes()
    p.write_bytes(data[:-100])
    with pytest.raises(FormatError):
        Dataset(p)
