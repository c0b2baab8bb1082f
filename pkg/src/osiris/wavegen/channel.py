"""Six-tap fading channel loosely following the leading CDL-A clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dsp import CP_LEN, SAMPLE_RATE_HZ, IQBuffer
from ..errors import ConfigError, InvalidParameter

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_HZ = 3.5e9
MAX_SPEED_MPS = 30.0
DELAY_SPREAD_S = 100e-9

# (normalized delay, power dB) of the first six CDL-A clusters
CDL_A_CLUSTERS = (
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
)


def doppler_from_speed(speed_mps: float, carrier_hz: float = CARRIER_HZ) -> float:
    return speed_mps * carrier_hz / SPEED_OF_LIGHT


def nominal_profile(delay_spread_s: float = DELAY_SPREAD_S,
                    sample_rate_hz: float = SAMPLE_RATE_HZ) -> tuple[np.ndarray, np.ndarray]:
    """Integer tap delays (samples) and linear powers normalized to sum 1."""
    norm_delay = np.array([c[0] for c in CDL_A_CLUSTERS])
    power = 10.0 ** (np.array([c[1] for c in CDL_A_CLUSTERS]) / 10.0)
    delays = np.rint(norm_delay * delay_spread_s * sample_rate_hz).astype(np.int64)
    return delays, power / power.sum()


@dataclass
class ChannelRealization:
    """
    One draw of the tapped-delay-line channel.

    ``tap_doppler_hz`` holds per-tap phase-drift rates; when omitted every
    tap rotates at ``doppler_hz``.
    """

    tap_delays: np.ndarray
    tap_gains: np.ndarray
    doppler_hz: float = 0.0
    tap_doppler_hz: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.tap_delays = np.asarray(self.tap_delays, dtype=np.int64)
        self.tap_gains = np.asarray(self.tap_gains, dtype=np.complex128)
        if self.tap_delays.shape != self.tap_gains.shape or self.tap_delays.ndim != 1:
            raise InvalidParameter("tap_delays and tap_gains must be matching 1-D arrays")
        if np.any(self.tap_delays < 0):
            raise InvalidParameter("tap delays must be non-negative")
        if self.doppler_hz < 0:
            raise InvalidParameter("doppler_hz must be >= 0")
        if self.tap_doppler_hz is None:
            self.tap_doppler_hz = np.full(self.tap_delays.shape, float(self.doppler_hz))
        else:
            self.tap_doppler_hz = np.asarray(self.tap_doppler_hz, dtype=np.float64)

    @classmethod
    def identity(cls) -> "ChannelRealization":
        return cls(np.array([0]), np.array([1.0 + 0j]))


def random_channel(rng: np.random.Generator, max_speed_mps: float = MAX_SPEED_MPS) -> ChannelRealization:
    """Rayleigh taps around the nominal powers, uniform phases, random-angle Doppler."""
    delays, power = nominal_profile()
    n = delays.size
    gains = np.sqrt(power / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    speed = rng.uniform(0.0, max_speed_mps)
    f_d = doppler_from_speed(speed)
    angles = rng.uniform(0.0, 2 * np.pi, n)
    return ChannelRealization(delays, gains, f_d, f_d * np.cos(angles))


def apply_channel(x: IQBuffer, ch: ChannelRealization, cp_len: int = CP_LEN) -> IQBuffer:
    """
    ``y[n] = sum_p g_p * exp(2j*pi*f_p*n/fs) * x[n - d_p]`` with zeros before ``n = 0``.

    Apply to CP-prepended symbols; delays must stay inside the CP so that the
    post-CP body sees a circular convolution.
    """
    samples = np.asarray(x.samples, dtype=np.complex128)
    if ch.tap_delays.max() >= max(cp_len, 1):
        raise ConfigError(f"tap delay {ch.tap_delays.max()} >= CP length {cp_len}")
    if ch.tap_delays.max() > samples.size:
        raise InvalidParameter("buffer shorter than the largest tap delay")
    n = np.arange(samples.size)
    y = np.zeros_like(samples)
    for d, g, f in zip(ch.tap_delays, ch.tap_gains, ch.tap_doppler_hz):
        delayed = np.zeros_like(samples)
        delayed[d:] = samples[:samples.size - d]
        if f != 0.0:
            delayed *= np.exp(2j * np.pi * f * n / x.sample_rate_hz)
        y += g * delayed
    return IQBuffer(y, x.sample_rate_hz)
