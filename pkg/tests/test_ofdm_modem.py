import numpy as np
import pytest
from numpy.testing import assert_allclose

from channel import ChannelKind, ChannelRealization, apply_tdlb
from errors import ConfigurationError, FramingError
from ofdm_modem import OfdmNumerology, channel_estimate_from_taps, ofdm_demodulate, ofdm_modulate


def qpsk(rng, count):
    return ((2 * rng.integers(0, 2, count) - 1) + 1j * (2 * rng.integers(0, 2, count) - 1)) / np.sqrt(2)


@pytest.fixture(scope="module")
def numerology():
    return OfdmNumerology.from_preset("nr30k10M")


def test_default_numerology(numerology):
    assert numerology.subcarriers == 288
    assert numerology.sample_rate == pytest.approx(15.36e6)
    assert numerology.cp_samples == 35
    assert numerology.symbol_samples == 547
    assert numerology.duration_for(288) == pytest.approx(547 / 15.36e6)
    assert numerology.duration_for(289) == pytest.approx(2 * 547 / 15.36e6)


@pytest.mark.parametrize("name", ["nr30k10M", "nr60k10M", "nr60k100M"])
def test_presets_fit_their_fft(name):
    numerology = OfdmNumerology.from_preset(name)
    assert numerology.subcarriers < numerology.fft_size
    assert len(set(numerology.active_bins.tolist())) == numerology.subcarriers


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        OfdmNumerology.from_preset("nr15k5M")


def test_output_length(numerology, rng):
    assert ofdm_modulate(qpsk(rng, 300), numerology).size == 2 * 547


def test_ideal_roundtrip(numerology, rng):
    symbols = qpsk(rng, 600)
    received = ofdm_demodulate(ofdm_modulate(symbols, numerology), numerology, count=600)
    assert_allclose(received, symbols, atol=1e-12)


def test_modulation_preserves_energy(numerology, rng):
    symbols = qpsk(rng, 288)
    waveform = ofdm_modulate(symbols, numerology)
    useful = waveform[numerology.cp_samples:]
    assert np.sum(np.abs(useful) ** 2) == pytest.approx(np.sum(np.abs(symbols) ** 2))


def test_cyclic_prefix_turns_multipath_into_per_bin_gains(numerology, rng):
    symbols = qpsk(rng, 3 * 288)
    taps = np.array([0.9, 0.3 - 0.2j, 0.0, 0.1j, 0.05])
    received = np.convolve(ofdm_modulate(symbols, numerology), taps)[:3 * 547]
    gains = channel_estimate_from_taps(taps, numerology)
    raw = ofdm_demodulate(received, numerology, equalizer="none")
    assert_allclose(raw, np.tile(gains, 3) * symbols, atol=1e-9)
    equalized = ofdm_demodulate(received, numerology, gains, equalizer="zf")
    assert_allclose(equalized, symbols, atol=1e-9)


def test_mmse_beats_zero_forcing_at_0db(numerology, rng):
    zf_error, mmse_error = 0.0, 0.0
    for frame in range(100):
        symbols = qpsk(rng, 288)
        realization = ChannelRealization(ChannelKind.TDLB, 0.0, noise_seed=frame, fading_seed=1000 + frame)
        out = apply_tdlb(ofdm_modulate(symbols, numerology), realization)
        gains = channel_estimate_from_taps(out.taps, numerology)
        zf = ofdm_demodulate(out.signal, numerology, gains, "zf", out.noise_var)
        mmse = ofdm_demodulate(out.signal, numerology, gains, "mmse", out.noise_var, symbol_power=1.0)
        zf_error += np.sum(np.abs(zf - symbols) ** 2)
        mmse_error += np.sum(np.abs(mmse - symbols) ** 2)
    assert mmse_error <= zf_error


def test_demodulate_validation(numerology, rng):
    waveform = ofdm_modulate(qpsk(rng, 10), numerology)
    with pytest.raises(FramingError):
        ofdm_demodulate(waveform[:-1], numerology)
    with pytest.raises(ConfigurationError):
        ofdm_demodulate(waveform, numerology, np.ones(288), equalizer="ml")
    with pytest.raises(FramingError):
        ofdm_demodulate(waveform, numerology, np.ones(100), equalizer="zf")


def test_empty_input_gives_empty_waveform(numerology):
    waveform = ofdm_modulate(np.zeros(0, dtype=np.complex128), numerology)
    assert waveform.shape == (0,)
    assert waveform.dtype == np.complex128
