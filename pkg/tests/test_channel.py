import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osiris.dsp import CP_LEN, SAMPLE_RATE_HZ, IQBuffer
from osiris.errors import ConfigError, InvalidParameter
from osiris.wavegen.channel import (
    ChannelRealization,
    apply_channel,
    doppler_from_speed,
    nominal_profile,
    random_channel,
)


def direct_tdl(x, delays, gains, dopplers, fs):
    """Per-sample loop over taps; independent of the vectorized path."""
    y = np.zeros(x.size, complex)
    for n in range(x.size):
        for d, g, f in zip(delays, gains, dopplers):
            if n - d >= 0:
                y[n] += g * np.exp(2j * np.pi * f * n / fs) * x[n - d]
    return y


def test_nominal_profile():
    delays, power = nominal_profile()
    # first six CDL-A clusters, 100 ns delay spread, 122.88 Msps
    np.testing.assert_array_equal(delays, [0, 5, 5, 7, 6, 7])
    assert power.sum() == pytest.approx(1.0)
    ref_db = np.array([-13.4, 0.0, -2.2, -4.0, -6.0, -8.2])
    np.testing.assert_allclose(10 * np.log10(power / power[1]), ref_db, atol=1e-9)


def test_doppler_at_max_speed():
    assert doppler_from_speed(30.0) == pytest.approx(30.0 * 3.5e9 / 299_792_458.0)
    assert doppler_from_speed(0.0) == 0.0


def test_identity_channel(rng):
    x = IQBuffer(rng.standard_normal(500) + 1j * rng.standard_normal(500))
    np.testing.assert_array_equal(apply_channel(x, ChannelRealization.identity()).samples, x.samples)


def test_matches_direct_loop(rng):
    x = rng.standard_normal(300) + 1j * rng.standard_normal(300)
    ch = random_channel(rng)
    y = apply_channel(IQBuffer(x), ch).samples
    ref = direct_tdl(x, ch.tap_delays, ch.tap_gains, ch.tap_doppler_hz, SAMPLE_RATE_HZ)
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_static_channel_is_linear_convolution(rng):
    x = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    delays, power = nominal_profile()
    gains = np.sqrt(power) * np.exp(1j * rng.uniform(0, 2 * np.pi, delays.size))
    h = np.zeros(delays.max() + 1, complex)
    np.add.at(h, delays, gains)
    y = apply_channel(IQBuffer(x), ChannelRealization(delays, gains)).samples
    np.testing.assert_allclose(y, np.convolve(x, h)[:x.size], atol=1e-12)


def test_single_tap_doppler_rotation(rng):
    x = rng.standard_normal(1000) + 0j
    f = 350.0
    y = apply_channel(IQBuffer(x), ChannelRealization([0], [1.0], f)).samples
    n = np.arange(x.size)
    np.testing.assert_allclose(y, x * np.exp(2j * np.pi * f * n / SAMPLE_RATE_HZ), atol=1e-12)


def test_delay_beyond_cp_rejected():
    x = IQBuffer(np.ones(4384, complex))
    with pytest.raises(ConfigError):
        apply_channel(x, ChannelRealization([0, CP_LEN], [1.0, 0.5]))


def test_invalid_realizations():
    with pytest.raises(InvalidParameter):
        ChannelRealization([0, 1], [1.0])
    with pytest.raises(InvalidParameter):
        ChannelRealization([-1], [1.0])
    with pytest.raises(InvalidParameter):
        ChannelRealization([0], [1.0], doppler_hz=-5.0)


def test_mean_power_is_unity():
    r = np.random.default_rng(7)
    p = [np.sum(np.abs(random_channel(r).tap_gains) ** 2) for _ in range(4000)]
    # sum of six scaled exponentials: relative std of the mean is about 1/sqrt(4000 * 2)
    assert np.mean(p) == pytest.approx(1.0, abs=0.04)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_random_channel_bounds(seed):
    ch = random_channel(np.random.default_rng(seed))
    f_max = doppler_from_speed(30.0)
    assert 0.0 <= ch.doppler_hz <= f_max
    assert np.all(np.abs(ch.tap_doppler_hz) <= ch.doppler_hz + 1e-9)
    assert ch.tap_delays.max() < CP_LEN
