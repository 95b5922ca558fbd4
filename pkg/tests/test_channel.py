import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from channel import (ChannelKind, ChannelRealization, PowerDelayProfile, apply_awgn, apply_tdlb, default_profile,
                     frequency_response, mmse_equalize_time, noise_variance, transmit)
from errors import ConfigurationError, FramingError, SingularChannelError, SnrError


def circular(signal, taps):
    return np.fft.ifft(np.fft.fft(signal) * np.fft.fft(taps, n=signal.size))


class TestProfiles:
    def test_powers_normalized(self):
        profile = PowerDelayProfile.from_pairs([(0, 2.0), (3, 1.0), (5, 1.0)])
        assert sum(profile.powers) == pytest.approx(1.0)
        assert profile.powers[0] == pytest.approx(0.5)
        assert profile.max_delay == 5

    @pytest.mark.parametrize("pairs", [[(0, 1.0), (0, 1.0)], [(-1, 1.0)], [(0, 0.0)], []])
    def test_invalid(self, pairs):
        with pytest.raises(ConfigurationError):
            PowerDelayProfile.from_pairs(pairs)

    def test_defaults(self):
        assert default_profile(ChannelKind.AWGN) is None
        assert default_profile(ChannelKind.RAYLEIGH).delays == (0,)
        assert default_profile(ChannelKind.TDLB).max_delay == 8

    def test_parse(self):
        assert ChannelKind.parse(" tdlb ") is ChannelKind.TDLB
        with pytest.raises(ConfigurationError):
            ChannelKind.parse("rician")


class TestAwgn:
    def test_seeded(self, rng):
        x = rng.standard_normal(1000)
        assert_array_equal(apply_awgn(x, 5.0, seed=3), apply_awgn(x, 5.0, seed=3))
        assert not np.array_equal(apply_awgn(x, 5.0, seed=3), apply_awgn(x, 5.0, seed=4))

    def test_noise_power_matches_snr(self, rng):
        x = rng.standard_normal(200_000)
        noise = apply_awgn(x, 10.0, seed=1) - x
        assert np.mean(noise ** 2) == pytest.approx(np.mean(x ** 2) / 10.0, rel=0.02)

    def test_real_stays_real_complex_stays_complex(self, rng):
        assert not np.iscomplexobj(apply_awgn(rng.standard_normal(64), 0.0, seed=1))
        z = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        assert np.iscomplexobj(apply_awgn(z, 0.0, seed=1))

    def test_infinite_snr_is_noiseless(self, rng):
        x = rng.standard_normal(64)
        assert_array_equal(apply_awgn(x, math.inf, seed=1), x)
        assert noise_variance(x, math.inf) == 0.0

    def test_zero_power(self):
        with pytest.raises(SnrError):
            apply_awgn(np.zeros(16), 10.0, seed=1)


class TestFading:
    def test_taps_are_seeded(self):
        first = ChannelRealization(ChannelKind.TDLB, 10.0, fading_seed=5)
        second = ChannelRealization(ChannelKind.TDLB, 10.0, fading_seed=5)
        assert_array_equal(first.taps, second.taps)
        assert first.taps.size == 9
        assert first.taps[3] == 0

    def test_rayleigh_is_single_tap(self):
        assert ChannelRealization(ChannelKind.RAYLEIGH, 10.0, fading_seed=2).taps.size == 1

    def test_tap_powers_follow_profile(self):
        gains = np.array([ChannelRealization(ChannelKind.TDLB, 0.0, fading_seed=s).taps for s in range(4000)])
        profile = default_profile(ChannelKind.TDLB)
        measured = np.mean(np.abs(gains[:, list(profile.delays)]) ** 2, axis=0)
        assert_allclose(measured, profile.powers, rtol=0.12)

    def test_noiseless_tdlb_is_linear_convolution(self, rng):
        x = rng.standard_normal(128)
        realization = ChannelRealization(ChannelKind.TDLB, math.inf, fading_seed=1)
        out = apply_tdlb(x, realization)
        assert_allclose(out.signal, np.convolve(x, realization.taps)[:128], atol=1e-12)
        assert out.noise_var == 0.0

    def test_mean_output_power_is_preserved(self, rng):
        x = rng.standard_normal(1024) + 1j * rng.standard_normal(1024)
        gains = []
        for seed in range(5000):
            out = apply_tdlb(x, ChannelRealization(ChannelKind.TDLB, math.inf, fading_seed=seed))
            gains.append(np.mean(np.abs(out.signal) ** 2) / out.signal_power)
        assert np.mean(gains) == pytest.approx(1.0, rel=0.03)

    def test_single_tap_envelope_is_rayleigh(self):
        envelope = np.abs([ChannelRealization(ChannelKind.RAYLEIGH, 0.0, fading_seed=s).taps[0] for s in range(2000)])
        assert stats.kstest(envelope, "rayleigh", args=(0.0, math.sqrt(0.5))).pvalue > 1e-3

    def test_noise_is_independent_of_fading(self, rng):
        x = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)

        def residual(noise_seed, fading_seed):
            realization = ChannelRealization(ChannelKind.TDLB, 0.0, noise_seed=noise_seed, fading_seed=fading_seed)
            faded = np.convolve(x, realization.taps)[:x.size]
            return apply_tdlb(x, realization).signal - faded, faded

        first, faded = residual(1, 1)
        same_noise, _ = residual(1, 2)
        other_noise, _ = residual(2, 1)
        assert_allclose(first, same_noise, atol=1e-12)

        def correlation(a, b):
            return abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))

        assert correlation(first, other_noise) < 0.05
        assert correlation(first, faded) < 0.05

    def test_delay_spread_must_fit_frame(self, rng):
        realization = ChannelRealization(ChannelKind.TDLB, 10.0, fading_seed=1)
        with pytest.raises(ConfigurationError):
            apply_tdlb(rng.standard_normal(64), realization, frame_len=8)

    def test_transmit_awgn_keeps_type_and_reports_unit_tap(self, rng):
        out = transmit(rng.standard_normal(64), ChannelRealization(ChannelKind.AWGN, 10.0, noise_seed=2))
        assert not np.iscomplexobj(out.signal)
        assert_array_equal(out.taps, [1.0])


class TestMmse:
    def test_noiseless_circular_channel_is_inverted(self, rng):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        taps = np.array([1.0, 0.5, 0.2j])
        assert_allclose(mmse_equalize_time(circular(x, taps), taps, 0.0), x, atol=1e-9)

    def test_per_frame(self, rng):
        frames = [rng.standard_normal(32) for _ in range(3)]
        taps = np.array([1.0, -0.3])
        received = np.concatenate([circular(f, taps) for f in frames])
        assert_allclose(mmse_equalize_time(received, taps, 0.0, frame_len=32).real, np.concatenate(frames), atol=1e-9)

    def test_regularization_shrinks(self, rng):
        x = rng.standard_normal(64)
        taps = np.array([1.0])
        assert_allclose(mmse_equalize_time(x, taps, 1.0, signal_power=1.0), x / 2.0, atol=1e-12)

    def test_beats_zero_forcing_at_0db(self, rng):
        mmse_error = zf_error = 0.0
        for seed in range(100):
            x = (rng.standard_normal(64) + 1j * rng.standard_normal(64)) / math.sqrt(2.0)
            taps = ChannelRealization(ChannelKind.TDLB, 0.0, fading_seed=seed).taps
            received = circular(x, taps) + (rng.standard_normal(64) + 1j * rng.standard_normal(64)) / math.sqrt(2.0)
            mmse_error += np.sum(np.abs(mmse_equalize_time(received, taps, 1.0, signal_power=1.0) - x) ** 2)
            zf_error += np.sum(np.abs(mmse_equalize_time(received, taps, 0.0) - x) ** 2)
        assert mmse_error <= zf_error

    def test_all_zero_taps(self):
        with pytest.raises(SingularChannelError):
            mmse_equalize_time(np.ones(8), np.zeros(2), 0.1)

    def test_spectral_null_without_noise(self):
        with pytest.raises(SingularChannelError):
            mmse_equalize_time(np.ones(8), np.array([1.0, -1.0]), 0.0)

    def test_framing(self):
        with pytest.raises(FramingError):
            mmse_equalize_time(np.ones(10), np.ones(1), 0.1, frame_len=4)
        with pytest.raises(FramingError):
            frequency_response(np.ones(9), 8)
