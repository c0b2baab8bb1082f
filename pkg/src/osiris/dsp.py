"""
Baseband DSP primitives: Zadoff-Chu sequences, FFT wrappers and CP-OFDM.

Conventions used everywhere in the package:

* forward FFT is unnormalized, the inverse applies ``1/N``;
* frequency grids are stored FFT-shifted, DC at index ``N // 2``;
* the composite sample rate is 122.88 Msps (4096 bins at 30 kHz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter

SAMPLE_RATE_HZ = 122.88e6
FFT_SIZE = 4096
SCS_HZ = 30e3
CP_LEN = 288


@dataclass
class IQBuffer:
    """Complex baseband samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidParameter("IQBuffer needs a non-empty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise InvalidParameter("sample rate must be positive")

    def __len__(self) -> int:
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)

    def power(self) -> float:
        """Mean instantaneous power over the whole buffer."""
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = FFT_SIZE
    cp_len: int = CP_LEN
    scs_hz: float = SCS_HZ

    def __post_init__(self):
        if not _is_pow2(self.fft_size):
            raise InvalidParameter(f"fft_size must be a power of two, got {self.fft_size}")
        if self.cp_len < 0:
            raise InvalidParameter("cp_len must be non-negative")
        if not self.scs_hz > 0:
            raise InvalidParameter("scs_hz must be positive")

    @property
    def sample_rate_hz(self) -> float:
        return self.fft_size * self.scs_hz

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len


def _is_pow2(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


def zadoff_chu(root: int, n_zc: int, out_len: int | None = None) -> np.ndarray:
    """
    Zadoff-Chu sequence of prime length ``n_zc``, cyclically extended to ``out_len``.

    Parameters
    ----------
    root : int
        Root index ``u``, must be coprime with ``n_zc``.
    n_zc : int
        Prime base length.
    out_len : int, optional
        Output length (``>= n_zc``); defaults to ``n_zc``.

    Returns
    -------
    numpy.ndarray
        complex128 samples ``exp(-1j*pi*u*n*(n+1)/n_zc)``.
    """
    out_len = n_zc if out_len is None else out_len
    if root <= 0 or n_zc <= 0 or out_len <= 0:
        raise InvalidParameter("root, n_zc and out_len must be positive")
    if not is_prime(n_zc):
        raise InvalidParameter(f"n_zc={n_zc} is not prime")
    if math.gcd(root, n_zc) != 1:
        raise InvalidParameter(f"gcd(root={root}, n_zc={n_zc}) != 1")
    if out_len < n_zc:
        raise InvalidParameter("out_len must be >= n_zc")
    n = np.arange(n_zc, dtype=np.int64)
    # reduce the phase index modulo 2*n_zc in exact integer arithmetic
    phase_idx = (root * n * (n + 1)) % (2 * n_zc)
    base = np.exp(-1j * np.pi * phase_idx / n_zc)
    return base[np.arange(out_len) % n_zc]


def _check_pow2_len(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 1 or not _is_pow2(x.shape[-1]):
        raise InvalidParameter(f"FFT length must be a power of two, got {x.shape[-1:]}")
    return x


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT over the last axis."""
    return np.fft.fft(_check_pow2_len(x), axis=-1)


def ifft(X) -> np.ndarray:
    """Inverse DFT with 1/N scaling over the last axis."""
    return np.fft.ifft(_check_pow2_len(X), axis=-1)


def ofdm_modulate(grid, cfg: OfdmConfig = OfdmConfig()) -> IQBuffer:
    """
    One CP-OFDM symbol from an FFT-shifted grid.

    The body is ``ifft(ifftshift(grid))`` so a unit tone at DC yields the
    constant ``1/fft_size``; body power is ``sum|grid|^2 / fft_size**2`` per
    sample. The last ``cp_len`` body samples are prepended.
    """
    grid = np.asarray(grid)
    if grid.shape != (cfg.fft_size,):
        raise InvalidParameter(f"grid length {grid.shape} != fft_size {cfg.fft_size}")
    body = ifft(np.fft.ifftshift(grid))
    out = np.concatenate([body[cfg.fft_size - cfg.cp_len:], body]) if cfg.cp_len else body
    return IQBuffer(out, cfg.sample_rate_hz)


def ofdm_demodulate(x, cfg: OfdmConfig = OfdmConfig()) -> np.ndarray:
    """Drop the CP, FFT the next ``fft_size`` samples, return the shifted grid."""
    x = np.asarray(x)
    if x.ndim != 1 or x.size < cfg.symbol_len:
        raise InvalidParameter(f"need at least {cfg.symbol_len} samples, got {x.size}")
    return np.fft.fftshift(fft(x[cfg.cp_len:cfg.cp_len + cfg.fft_size]))
