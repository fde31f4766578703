"""Filter design, resampling, STFT and mel filterbank verification."""

import numpy as np
import pytest
import scipy.signal

from tunet.dsp import (
    DEFAULT_FILTER,
    cheby1_design,
    chebyshev_magnitude,
    downsample2,
    downsample2_sinc,
    frequency_response,
    hann_window,
    mel_filterbank,
    mel_project,
    random_filter_spec,
    sos_filter,
    stft,
    upsample2,
    FilterSpec,
)


def _gain_db(spec, freq_norm):
    _, h = scipy.signal.sosfreqz(spec.sos, worN=[freq_norm * np.pi])
    return 20.0 * np.log10(np.abs(h[0]))


class TestChebyshevDesign:
    def test_even_order_dc_gain(self):
        for n in (2, 4, 6, 8):
            for r in (0.05, 0.5, 3.0):
                spec = cheby1_design(n, r, 0.5)
                assert _gain_db(spec, 1e-9) == pytest.approx(-r, abs=0.01)

    def test_passband_edge_gain(self):
        for n in (3, 5, 8):
            for r in (0.05, 1.0):
                spec = cheby1_design(n, r, 0.4)
                assert _gain_db(spec, 0.4) == pytest.approx(-r, abs=0.01)

    def test_realized_magnitude_matches_analytic(self):
        spec = cheby1_design(8, 0.05, 0.5)
        freqs, mag = frequency_response(spec, 512)
        analytic = chebyshev_magnitude(8, 0.05, 0.5, freqs)
        assert np.abs(mag - analytic).max() < 1e-3

    def test_matches_scipy_design(self):
        for n, r, fc in [(8, 0.05, 0.5), (5, 1.0, 0.3), (4, 3.0, 0.7)]:
            ours = cheby1_design(n, r, fc)
            theirs = scipy.signal.cheby1(n, r, fc, output="sos")
            w, h1 = scipy.signal.sosfreqz(ours.sos, worN=256)
            _, h2 = scipy.signal.sosfreqz(theirs, worN=256)
            np.testing.assert_allclose(np.abs(h1), np.abs(h2), atol=1e-10)

    def test_parameter_validation(self):
        with pytest.raises(ValueError, match="order"):
            cheby1_design(0, 0.05, 0.5)
        with pytest.raises(ValueError, match="ripple"):
            cheby1_design(8, -1.0, 0.5)
        with pytest.raises(ValueError, match="cutoff"):
            cheby1_design(8, 0.05, 1.5)

    def test_randomized_specs_stable_and_in_range(self):
        rng = np.random.default_rng(123)
        orders = set()
        for _ in range(1000):
            spec = random_filter_spec(rng)
            assert spec.stable
            assert spec.pole_radii().max() < 1.0
            assert 4 <= spec.order <= 10
            assert 0.05 <= spec.ripple_db <= 5.0
            assert spec.cutoff == 0.5
            orders.add(spec.order)
        assert orders == set(range(4, 11))

    def test_random_spec_deterministic(self):
        a = random_filter_spec(np.random.default_rng(7))
        b = random_filter_spec(np.random.default_rng(7))
        assert a.order == b.order and a.ripple_db == b.ripple_db
        np.testing.assert_array_equal(a.sos, b.sos)


class TestSosFilter:
    def test_unit_section_is_identity(self):
        spec = FilterSpec(order=1, ripple_db=0.1, cutoff=0.5,
                          sos=np.array([[1.0, 0, 0, 1.0, 0, 0]]))
        x = np.random.default_rng(0).normal(size=64)
        np.testing.assert_allclose(sos_filter(x, spec), x, atol=1e-15)

    def test_biquad_impulse_matches_hand_iteration(self):
        spec = cheby1_design(2, 0.5, 0.4)
        b0, b1, b2, a0, a1, a2 = spec.sos[0]
        x = np.zeros(20)
        x[0] = 1.0
        got = sos_filter(x, spec)
        # Difference equation y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2]
        #                          - a1 y[n-1] - a2 y[n-2], iterated by hand.
        want = np.zeros(20)
        for n in range(20):
            want[n] = b0 * x[n]
            if n >= 1:
                want[n] += b1 * x[n - 1] - a1 * want[n - 1]
            if n >= 2:
                want[n] += b2 * x[n - 2] - a2 * want[n - 2]
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_stopband_attenuation_on_noise(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=2**16)
        y = sos_filter(x, cheby1_design(8, 0.5, 0.5))
        freqs, psd = scipy.signal.periodogram(y, fs=2.0)
        passband = psd[(freqs > 0.05) & (freqs < 0.45)].mean()
        stopband = psd[freqs > 0.55].mean()
        assert 10.0 * np.log10(passband / stopband) >= 40.0

    def test_unstable_cascade_rejected(self):
        bad = FilterSpec(order=1, ripple_db=0.1, cutoff=0.5,
                         sos=np.array([[1.0, 0, 0, 1.0, -2.5, 1.2]]))
        with pytest.raises(ValueError, match="unstable"):
            sos_filter(np.zeros(8), bad)


def _sine_amplitude(x, freq, sr):
    """Least-squares amplitude of a known-frequency sine (fit oracle)."""
    t = np.arange(x.size) / sr
    basis = np.stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(*coef))


class TestResampling:
    def test_dc_preserved(self):
        x = np.full(4096, 0.25)
        y = upsample2(downsample2(x))
        # Ignore filter warmup at the edges.
        core = y[1024:-1024]
        assert np.abs(core - 0.25).max() < 0.25 * 0.02

    def test_1khz_survives_round_trip(self):
        sr = 16000
        t = np.arange(4 * sr) / sr
        x = np.sin(2 * np.pi * 1000 * t)
        y = upsample2(downsample2(x))
        amp = _sine_amplitude(y[sr:-sr], 1000, sr)
        assert abs(20 * np.log10(amp)) < 0.5

    def test_7khz_rejected_by_round_trip(self):
        sr = 16000
        t = np.arange(4 * sr) / sr
        x = np.sin(2 * np.pi * 7000 * t)
        y = upsample2(downsample2(x))
        amp = _sine_amplitude(y[sr:-sr], 7000, sr)
        assert 20 * np.log10(max(amp, 1e-12)) < -40.0

    def test_sinc_downsample_also_antialiases(self):
        sr = 16000
        t = np.arange(2 * sr) / sr
        x = np.sin(2 * np.pi * 7000 * t)
        y8 = downsample2_sinc(x)
        assert np.sqrt(np.mean(y8[2000:-2000] ** 2)) < 0.01

    def test_lengths(self):
        assert downsample2(np.zeros(1000)).size == 500
        assert downsample2(np.zeros(1001)).size == 501  # odd input zero-padded
        assert upsample2(np.zeros(500)).size == 1000


class TestSTFT:
    def test_pure_sine_hits_single_bin(self):
        sr = 16000
        nfft = 2048
        bin_idx = 160
        freq = bin_idx * sr / nfft
        t = np.arange(sr) / sr
        spec = stft(np.sin(2 * np.pi * freq * t), nfft=nfft, hop=512, sample_rate=sr)
        mag = spec.magnitude()
        # Middle frame: the target bin dominates everything outside the
        # window mainlobe (+/- 2 bins for Hann).
        frame = mag[:, mag.shape[1] // 2]
        mask = np.ones(frame.size, dtype=bool)
        mask[bin_idx - 2 : bin_idx + 3] = False
        assert frame[bin_idx] > 100 * frame[mask].max()

    def test_windowed_sine_closed_form_peak(self):
        # Exact-bin sine, rectangular-equivalent closed form for Hann:
        # peak magnitude = N/4 (0.5 window gain * N/2 from the sine).
        sr = 16000
        nfft = 1024
        bin_idx = 64
        freq = bin_idx * sr / nfft
        n = np.arange(nfft)
        frame = np.sin(2 * np.pi * freq * n / sr) * hann_window(nfft)
        peak = np.abs(np.fft.rfft(frame))[bin_idx]
        assert peak == pytest.approx(nfft / 4.0, rel=1e-6)
        spec = stft(np.sin(2 * np.pi * freq * np.arange(sr) / sr), nfft=nfft, hop=256, center=False)
        assert spec.magnitude()[bin_idx, 4] == pytest.approx(nfft / 4.0, rel=1e-3)

    def test_zero_input(self):
        spec = stft(np.zeros(8192), nfft=2048, hop=512)
        assert np.all(spec.magnitude() == 0.0)
        empty = stft(np.zeros(0), nfft=2048, hop=512)
        assert empty.frames.shape == (1025, 0)

    def test_frame_count_centered(self):
        spec = stft(np.zeros(8192), nfft=2048, hop=512)
        assert spec.frames.shape == (1025, 17)

    def test_energy_consistency_hann_cola(self):
        # Hop = win/4 satisfies COLA for Hann; summed |STFT|^2 of a long
        # stationary signal tracks time-domain energy.
        rng = np.random.default_rng(3)
        x = rng.normal(size=2**18)  # long: edge frames under-covered by <0.5%
        nfft = 1024
        hop = nfft // 4
        spec = stft(x, nfft=nfft, hop=hop, center=False)
        p = spec.power()
        # rfft keeps half the spectrum: double interior bins.
        total = p[0].sum() + p[-1].sum() + 2.0 * p[1:-1].sum()
        # Parseval per frame: sum_k |X_k|^2 = nfft * sum_n (x w)^2. Summing
        # over frames, each sample is hit by sum_t w^2(n - t*hop) = S_w/hop.
        window = hann_window(nfft)
        expected = nfft * (window**2).sum() / hop * (x**2).sum()
        assert abs(total / expected - 1.0) < 0.01


class TestMel:
    def test_rows_nonnegative_and_bin_weight_bounded(self):
        fb = mel_filterbank(16000, 2048, 128)
        assert np.all(fb >= 0.0)
        assert fb.sum(axis=0).max() <= 1.0 + 1e-6

    def test_projection_shape(self):
        spec = stft(np.random.default_rng(0).normal(size=8192))
        mel = mel_project(spec, 128)
        assert mel.shape == (128, spec.frames.shape[1])

    def test_htk_scale_corners_monotone(self):
        fb = mel_filterbank(16000, 2048, 64)
        peaks = fb.argmax(axis=1)
        assert np.all(np.diff(peaks) > 0)
