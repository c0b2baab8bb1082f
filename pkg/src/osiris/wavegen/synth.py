"""SRS synthesis, signal mixing and three-domain extraction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..dsp import CP_LEN, FFT_SIZE, IQBuffer, OfdmConfig, ofdm_modulate, zadoff_chu
from ..errors import InvalidParameter
from .channel import ChannelRealization, apply_channel, random_channel
from .interferers import WINDOW_LEN, InterferenceClass, gen_interferer

SRS_ROOT = 25
SRS_NZC = 1637
SRS_LEN = 1638
SRS_ALLOC = 2 * SRS_LEN  # comb-2 over 3276 subcarriers

TIME_LEN = FFT_SIZE
FREQ_LEN = FFT_SIZE
CSI_LEN = SRS_LEN

SNR_RANGE_DB = (-12.0, 20.0)
SIR_RANGE_DB = (-10.0, 10.0)


@lru_cache(maxsize=None)
def srs_active_bins() -> np.ndarray:
    """Indices (FFT-shifted grid) of the comb-2 SRS bins, ascending."""
    first = FFT_SIZE // 2 - SRS_ALLOC // 2
    bins = first + 2 * np.arange(SRS_LEN)
    bins.setflags(write=False)
    return bins


def gen_srs_grid() -> np.ndarray:
    """The 4096-bin FFT-shifted SRS grid: ZC(25) extended to 1638, comb-2, centered."""
    grid = np.zeros(FFT_SIZE, dtype=np.complex128)
    grid[srs_active_bins()] = zadoff_chu(SRS_ROOT, SRS_NZC, SRS_LEN)
    return grid


@lru_cache(maxsize=1)
def _srs_cached() -> tuple[np.ndarray, np.ndarray]:
    grid = gen_srs_grid()
    time = ofdm_modulate(grid, OfdmConfig(FFT_SIZE, CP_LEN)).samples
    grid.setflags(write=False)
    time.setflags(write=False)
    return grid, time


def srs_time() -> IQBuffer:
    """CP-prepended SRS symbol, 4384 samples."""
    return IQBuffer(_srs_cached()[1].copy())


@dataclass(frozen=True)
class MixSpec:
    sir_db: float
    snr_db: float
    cls: InterferenceClass
    seed: int = 0

    def __post_init__(self):
        if not SIR_RANGE_DB[0] <= self.sir_db <= SIR_RANGE_DB[1]:
            raise InvalidParameter(f"SIR {self.sir_db} dB outside {SIR_RANGE_DB}")
        # +inf SNR disables noise (used by calibration checks)
        if not (SNR_RANGE_DB[0] <= self.snr_db <= SNR_RANGE_DB[1] or self.snr_db == np.inf):
            raise InvalidParameter(f"SNR {self.snr_db} dB outside {SNR_RANGE_DB}")
        object.__setattr__(self, "cls", InterferenceClass(self.cls))


@dataclass
class DomainSample:
    time: np.ndarray
    freq: np.ndarray
    csi: np.ndarray
    label: InterferenceClass
    mix: MixSpec


@dataclass
class MixParts:
    """Scaled components of one received window (kept for calibration checks)."""

    signal: np.ndarray
    interference: np.ndarray
    noise: np.ndarray

    @property
    def received(self) -> np.ndarray:
        return self.signal + self.interference + self.noise


def mix_components(srs: IQBuffer, interferer: IQBuffer, spec: MixSpec,
                   ch: ChannelRealization, rng: np.random.Generator) -> MixParts:
    if len(srs) != len(interferer):
        raise InvalidParameter("SRS and interferer windows must have equal length")
    sig = apply_channel(srs, ch).samples
    p_sig = np.mean(np.abs(sig) ** 2)
    intf = np.zeros_like(sig)
    if spec.cls != InterferenceClass.Noise:
        x = np.asarray(interferer.samples, dtype=np.complex128)
        p_int = np.mean(np.abs(x) ** 2)
        if p_int > 0:
            intf = x * np.sqrt(p_sig * 10.0 ** (-spec.sir_db / 10.0) / p_int)
    noise = np.zeros_like(sig)
    if np.isfinite(spec.snr_db):
        sigma2 = p_sig * 10.0 ** (-spec.snr_db / 10.0)
        noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(sig.size) + 1j * rng.standard_normal(sig.size))
    return MixParts(sig, intf, noise)


def mix_and_receive(srs: IQBuffer, interferer: IQBuffer, spec: MixSpec,
                    ch: ChannelRealization, rng: np.random.Generator) -> IQBuffer:
    """
    ``ch(srs) + a*interferer + b*awgn``.

    ``a`` sets the interferer's window power to ``P_srs / 10**(SIR/10)`` and
    ``b`` the noise variance to ``P_srs / 10**(SNR/10)``, with ``P_srs`` the
    post-channel SRS power over the full window. Noise-class specs add no
    interference term.
    """
    return IQBuffer(mix_components(srs, interferer, spec, ch, rng).received)


def freq_from_time(time: np.ndarray) -> np.ndarray:
    """FFT-shifted spectrum of a complex64 time window, returned as complex64.

    Computed in double precision from the stored samples so that any holder of
    the time window reproduces the stored spectrum bit for bit.
    """
    time = np.asarray(time, dtype=np.complex64)
    return np.fft.fftshift(np.fft.fft(time.astype(np.complex128))).astype(np.complex64)


def csi_from_freq(freq: np.ndarray, srs_grid: np.ndarray | None = None) -> np.ndarray:
    """Least-squares channel estimate on the SRS comb: ``Y[k] / X[k]``."""
    grid = _srs_cached()[0] if srs_grid is None else np.asarray(srs_grid)
    bins = srs_active_bins()
    ref = grid[bins]
    if np.any(ref == 0):
        raise RuntimeError("SRS grid has an empty active bin")
    return (np.asarray(freq)[..., bins] / ref).astype(np.complex64)


def extract_domains(received, srs_grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    CP removal, FFT and comb-bin equalization of one received window.

    Returns complex64 ``(time[4096], freq[4096], csi[1638])``.
    """
    x = np.asarray(received)
    if x.shape != (WINDOW_LEN,):
        raise InvalidParameter(f"received window must have {WINDOW_LEN} samples, got {x.shape}")
    time = x[CP_LEN:].astype(np.complex64)
    freq = freq_from_time(time)
    return time, freq, csi_from_freq(freq, srs_grid)


def synthesize(spec: MixSpec) -> DomainSample:
    """Generate one labelled sample; identical output for identical ``spec``."""
    ch_rng, int_rng, noise_rng = (np.random.default_rng(s)
                                  for s in np.random.SeedSequence(spec.seed).spawn(3))
    ch = random_channel(ch_rng)
    intf = gen_interferer(spec.cls, int_rng, WINDOW_LEN)
    rx = mix_and_receive(srs_time(), intf, spec, ch, noise_rng)
    time, freq, csi = extract_domains(rx)
    return DomainSample(time, freq, csi, spec.cls, spec)
