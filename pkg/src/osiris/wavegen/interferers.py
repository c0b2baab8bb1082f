"""
Structural approximations of the seven interference classes.

Every waveform is synthesized directly at 122.88 Msps. OFDM interferers keep
the subcarrier spacing, occupied bandwidth and burst structure of their
standards; payloads are random constellation points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..dsp import CP_LEN, FFT_SIZE, SAMPLE_RATE_HZ, IQBuffer

WINDOW_LEN = CP_LEN + FFT_SIZE
HALF_BAND_HZ = 50e6


class InterferenceClass(enum.IntEnum):
    Noise = 0
    Radar = 1
    LTE = 2
    WiFi = 3
    NR_0_20 = 4
    NR_1_20 = 5
    NR_1_40 = 6


CLASS_NAMES = [c.name for c in InterferenceClass]


@dataclass(frozen=True)
class OfdmProfile:
    fft_size: int
    cp_len: int
    tones: tuple[int, int]  # (first, last) signed subcarrier index, inclusive
    dc_null: int = 0        # tones with |k| < dc_null are left empty
    qam: int = 4
    bursty: bool = False

    @property
    def scs_hz(self) -> float:
        return SAMPLE_RATE_HZ / self.fft_size

    def subcarriers(self) -> np.ndarray:
        k = np.arange(self.tones[0], self.tones[1] + 1)
        return k[np.abs(k) >= self.dc_null]

    @property
    def bandwidth_hz(self) -> float:
        return (self.tones[1] - self.tones[0] + 1) * self.scs_hz


OFDM_PROFILES = {
    # 15 kHz, 1200 tones around a DC null
    InterferenceClass.LTE: OfdmProfile(8192, 576, (-600, 600), dc_null=1),
    # 80 kHz stands in for 78.125 kHz so the FFT divides 122.88 Msps
    InterferenceClass.WiFi: OfdmProfile(1536, 384, (-122, 122), dc_null=2, qam=16, bursty=True),
    InterferenceClass.NR_0_20: OfdmProfile(8192, 576, (-636, 635)),
    InterferenceClass.NR_1_20: OfdmProfile(4096, 288, (-306, 305)),
    InterferenceClass.NR_1_40: OfdmProfile(4096, 288, (-636, 635)),
}

RADAR_WIDTH_S = (2e-6, 5e-6)
RADAR_PRI_S = (10e-6, 20e-6)
RADAR_BW_HZ = (20e6, 60e6)
WIFI_ON_FRACTION = (0.4, 0.9)


@dataclass(frozen=True)
class RadarParams:
    width: int       # samples
    pri: int         # samples
    bandwidth_hz: float
    center_hz: float
    first_pulse: int  # start of the first pulse, may be negative


def draw_radar_params(rng: np.random.Generator, fs: float = SAMPLE_RATE_HZ) -> RadarParams:
    width = int(round(rng.uniform(*RADAR_WIDTH_S) * fs))
    pri = int(round(rng.uniform(*RADAR_PRI_S) * fs))
    bw = rng.uniform(*RADAR_BW_HZ)
    center = rng.uniform(-1, 1) * (HALF_BAND_HZ - bw / 2)
    first = int(rng.integers(-pri + 1, 1))
    return RadarParams(width, pri, bw, center, first)


def radar_pulse_train(p: RadarParams, length: int, fs: float = SAMPLE_RATE_HZ,
                      phase: float = 0.0) -> np.ndarray:
    """Unit-amplitude linear-FM pulses sweeping ``center +- bw/2``."""
    n = np.arange(length)
    rel = (n - p.first_pulse) % p.pri
    on = rel < p.width
    t = rel / fs
    duration = p.width / fs
    f0 = p.center_hz - p.bandwidth_hz / 2
    slope = p.bandwidth_hz / duration
    ph = 2 * np.pi * (f0 * t + 0.5 * slope * t * t) + phase
    x = np.exp(1j * ph)
    x[~on] = 0.0
    return x


def _constellation(rng: np.random.Generator, order: int, n: int) -> np.ndarray:
    m = int(round(np.sqrt(order)))
    levels = 2 * np.arange(m) - (m - 1)
    sym = levels[rng.integers(0, m, n)] + 1j * levels[rng.integers(0, m, n)]
    return sym / np.sqrt(2 * (m * m - 1) / 3)


def ofdm_stream(rng: np.random.Generator, prof: OfdmProfile, length: int,
                random_start: bool = True) -> np.ndarray:
    """Back-to-back CP-OFDM symbols, cut at a random symbol phase unless ``random_start`` is off."""
    sym_len = prof.fft_size + prof.cp_len
    n_sym = -(-(length + sym_len) // sym_len)
    sc = prof.subcarriers()
    grid = np.zeros((n_sym, prof.fft_size), dtype=np.complex128)
    grid[:, sc % prof.fft_size] = _constellation(rng, prof.qam, n_sym * sc.size).reshape(n_sym, sc.size)
    body = np.fft.ifft(grid, axis=-1)
    symbols = np.concatenate([body[:, prof.fft_size - prof.cp_len:], body], axis=1)
    stream = symbols.reshape(-1)
    start = int(rng.integers(0, sym_len)) if random_start else 0
    return stream[start:start + length]


def _shift(x: np.ndarray, center_hz: float, phase: float, fs: float) -> np.ndarray:
    n = np.arange(x.size)
    return x * np.exp(1j * (2 * np.pi * center_hz * n / fs + phase))


def gen_interferer(cls: InterferenceClass, rng: np.random.Generator | int,
                   length: int = WINDOW_LEN) -> IQBuffer:
    """
    One interference window at 122.88 Msps.

    Active samples have unit mean power; Noise returns zeros. The occupied band
    is placed at a random center inside +-50 MHz.
    """
    cls = InterferenceClass(cls)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    fs = SAMPLE_RATE_HZ
    if cls == InterferenceClass.Noise:
        return IQBuffer(np.zeros(length, dtype=np.complex128), fs)
    phase = rng.uniform(0, 2 * np.pi)
    if cls == InterferenceClass.Radar:
        return IQBuffer(radar_pulse_train(draw_radar_params(rng, fs), length, fs, phase), fs)

    prof = OFDM_PROFILES[cls]
    center = rng.uniform(-1, 1) * (HALF_BAND_HZ - prof.bandwidth_hz / 2)
    if prof.bursty:
        on_len = int(round(rng.uniform(*WIFI_ON_FRACTION) * length))
        start = int(rng.integers(0, length - on_len + 1))
        x = np.zeros(length, dtype=np.complex128)
        # packets begin on a symbol boundary
        x[start:start + on_len] = ofdm_stream(rng, prof, on_len, random_start=False)
        active = slice(start, start + on_len)
    else:
        x = ofdm_stream(rng, prof, length)
        active = slice(None)
    x = x / np.sqrt(np.mean(np.abs(x[active]) ** 2))
    return IQBuffer(_shift(x, center, phase, fs), fs)
