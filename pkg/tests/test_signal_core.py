import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pulsemux.errors import AsymmetricSpectrum, CutoffOutOfRange, SamplePeriodMismatch
from pulsemux.signal_core import (Spectrum, Waveform, butterworth_lowpass, convolve,
                                  cross_correlate, fft, ifft, parse_waveform_csv,
                                  read_spectrum_csv, read_waveform_csv, write_spectrum_csv,
                                  write_waveform_csv)

T = 2e-9
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def direct_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * kk * k / n)) for kk in k])


def direct_conv(x, h):
    n = len(x)
    return np.array([sum(x[m] * h[i - m] for m in range(i + 1)) for i in range(n)])


def tone(f, n, T=T, amp=1.0):
    return Waveform(amp * np.sin(2 * np.pi * f * np.arange(n) * T), T)


class TestWaveform:
    def test_rejects_bad_period(self):
        with pytest.raises(ValueError):
            Waveform([1.0], 0.0)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            Waveform([], T)
        with pytest.raises(ValueError):
            Waveform([1.0, np.nan], T)

    def test_samples_are_read_only(self):
        w = Waveform([1.0, 2.0], T)
        with pytest.raises(ValueError):
            w.samples[0] = 3.0


class TestFFT:
    def test_impulse_is_flat(self):
        s = fft(Waveform([1.0] + [0.0] * 7, T))
        np.testing.assert_allclose(s.bins, np.ones(8))

    def test_constant_is_dc(self):
        s = fft(Waveform(np.ones(8), T))
        np.testing.assert_allclose(s.bins, [8] + [0] * 7, atol=1e-12)

    def test_cosine_bins(self):
        n = 16
        x = np.cos(2 * np.pi * 3 * np.arange(n) / n)
        s = fft(Waveform(x, T))
        np.testing.assert_allclose(s.bins, direct_dft(x), atol=1e-12)
        assert abs(s.bins[3] - 8) < 1e-12 and abs(s.bins[13] - 8) < 1e-12

    def test_bin_spacing(self):
        s = fft(Waveform(np.zeros(2000), T))
        assert s.bin_spacing == pytest.approx(1 / (2000 * T))
        assert s.bin_of(7e6) == 28

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, st.integers(1, 64), elements=finite))
    def test_matches_direct_sum(self, x):
        np.testing.assert_allclose(fft(Waveform(x, T)).bins, direct_dft(x),
                                   atol=1e-9 * max(1.0, np.abs(x).sum()))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, st.integers(1, 256), elements=finite))
    def test_parseval(self, x):
        s = fft(Waveform(x, T))
        e = np.sum(x ** 2)
        assert np.sum(np.abs(s.bins) ** 2) / x.size == pytest.approx(e, rel=1e-10, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 128).flatmap(lambda n: st.tuples(
        arrays(float, n, elements=finite), arrays(float, n, elements=finite))), finite, finite)
    def test_linearity(self, xy, a, b):
        x, y = xy
        lhs = fft(Waveform(a * x + b * y, T)).bins
        rhs = a * fft(Waveform(x, T)).bins + b * fft(Waveform(y, T)).bins
        np.testing.assert_allclose(lhs, rhs, atol=1e-7 * (1 + np.abs(rhs).max()))

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, st.integers(2, 200), elements=finite))
    def test_conjugate_symmetry(self, x):
        b = fft(Waveform(x, T)).bins
        n = b.size
        np.testing.assert_allclose(b[1:], np.conj(b[1:][::-1]), atol=1e-9 * (1 + np.abs(b).max()))
        assert n == x.size


class TestIFFT:
    def test_round_trip_2000(self):
        x = np.random.default_rng(0).normal(size=2000)
        back = ifft(fft(Waveform(x, T))).samples
        assert np.max(np.abs(back - x)) < 1e-12 * np.max(np.abs(x))

    def test_all_ones(self):
        w = ifft(Spectrum(np.ones(4), 1 / (4 * T), 4))
        np.testing.assert_allclose(w.samples, [1, 0, 0, 0], atol=1e-15)

    def test_damped_sinusoid_round_trip(self):
        t = np.arange(2000) * T
        h = np.exp(-t / 240e-9) * np.sin(2 * np.pi * 7e6 * t)
        np.testing.assert_allclose(ifft(fft(Waveform(h, T))).samples, h, atol=1e-14)

    def test_asymmetric_spectrum_rejected(self):
        bins = np.zeros(8, complex)
        bins[1] = 1.0
        with pytest.raises(AsymmetricSpectrum):
            ifft(Spectrum(bins, 1 / (8 * T), 8))

    def test_sample_period_recovered(self):
        w = ifft(fft(Waveform(np.arange(10.0), 3e-9)))
        assert w.sample_period == pytest.approx(3e-9)


class TestConvolve:
    def test_delta_identity(self):
        h = np.random.default_rng(1).normal(size=50)
        d = np.zeros(50)
        d[0] = 1
        np.testing.assert_allclose(convolve(Waveform(d, T), Waveform(h, T)).samples, h, atol=1e-13)

    def test_shifted_delta_truncates(self):
        h = np.arange(1.0, 11.0)
        d = np.zeros(10)
        d[4] = 1
        out = convolve(Waveform(d, T), Waveform(h, T)).samples
        np.testing.assert_allclose(out, [0, 0, 0, 0, 1, 2, 3, 4, 5, 6], atol=1e-12)

    def test_ramps_against_direct_sum(self):
        x = np.arange(8.0)
        h = np.arange(8.0)[::-1] * 0.5
        np.testing.assert_allclose(convolve(Waveform(x, T), Waveform(h, T)).samples,
                                   direct_conv(x, h), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 64).flatmap(lambda n: st.tuples(
        arrays(float, n, elements=finite), arrays(float, n, elements=finite))))
    def test_matches_direct_sum(self, xh):
        x, h = xh
        ref = direct_conv(x, h)
        np.testing.assert_allclose(convolve(Waveform(x, T), Waveform(h, T)).samples, ref,
                                   atol=1e-9 * (1 + np.abs(x).sum() * np.abs(h).max()))

    def test_period_mismatch(self):
        with pytest.raises(SamplePeriodMismatch):
            convolve(Waveform([1.0], T), Waveform([1.0], 2 * T))


class TestCrossCorrelate:
    def test_autocorrelation_peak_at_zero(self):
        x = np.random.default_rng(2).normal(size=256)
        r = cross_correlate(Waveform(x, T), Waveform(x, T)).samples
        assert r[0] == pytest.approx(np.mean(x ** 2))
        assert np.argmax(r) == 0

    def test_shift_detection(self):
        x = np.random.default_rng(3).normal(size=256)
        r = cross_correlate(Waveform(np.roll(x, 5), T), Waveform(x, T)).samples
        assert np.argmax(r) == 5

    def test_matches_direct_definition(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=32), rng.normal(size=32)
        n = 32
        ref = [sum(y[i] * x[(i - m) % n] for i in range(n)) / n for m in range(n)]
        np.testing.assert_allclose(cross_correlate(Waveform(y, T), Waveform(x, T)).samples, ref,
                                   atol=1e-12)

    def test_white_noise_identifies_filter(self):
        rng = np.random.default_rng(5)
        n = 512
        h = np.exp(-np.arange(n) / 20.0) * np.sin(2 * np.pi * 0.05 * np.arange(n))
        s_yx = np.zeros(n, complex)
        s_xx = np.zeros(n)
        for _ in range(120):
            x = rng.normal(size=n)
            # circular system so the cross-spectral identity holds exactly per record
            y = np.fft.ifft(np.fft.fft(x) * np.fft.fft(h)).real
            s_yx += fft(cross_correlate(Waveform(y, T), Waveform(x, T))).bins
            s_xx += fft(cross_correlate(Waveform(x, T), Waveform(x, T))).bins.real
        np.testing.assert_allclose(s_yx / s_xx, np.fft.fft(h), atol=1e-9)


class TestButterworth:
    def test_dc_unchanged(self):
        w = Waveform(np.full(2000, 3.0), T)
        np.testing.assert_allclose(butterworth_lowpass(w, 160e6, 4).samples, 3.0)

    @pytest.mark.parametrize("ratio, expected", [(1.0, 2 ** -0.5), (2.0, 1 / np.sqrt(1 + 2 ** 8))])
    def test_tone_gain(self, ratio, expected):
        # 80 MHz is an exact bin for N = 2000 at 2 ns, so no leakage
        f = 80e6
        out = butterworth_lowpass(tone(f, 2000), f / ratio, 4).samples
        got = np.max(np.abs(out[200:-200]))
        assert got == pytest.approx(expected, rel=1e-2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 999), st.integers(1, 8))
    def test_closed_form_magnitude(self, k, order):
        n = 2000
        f = k / (n * T)
        out = butterworth_lowpass(Waveform(np.cos(2 * np.pi * k * np.arange(n) / n), T),
                                  120e6, order).samples
        ref = 1 / np.sqrt(1 + (f / 120e6) ** (2 * order))
        assert np.max(np.abs(out)) == pytest.approx(ref, rel=1e-2, abs=1e-12)

    def test_zero_phase(self):
        x = np.zeros(2000)
        x[1000] = 1
        out = butterworth_lowpass(Waveform(x, T), 160e6).samples
        assert np.argmax(out) == 1000
        np.testing.assert_allclose(out[1000 - 50:1000], out[1001:1051][::-1], atol=1e-15)

    @pytest.mark.parametrize("fc", [0.0, -1.0, 250e6, 300e6])
    def test_cutoff_range(self, fc):
        with pytest.raises(CutoffOutOfRange):
            butterworth_lowpass(tone(1e6, 100), fc)


class TestCsv:
    def test_waveform_round_trip(self, tmp_path):
        w = Waveform(np.random.default_rng(6).normal(size=100), T, "adc")
        write_waveform_csv(tmp_path / "w.csv", w, {"seed": 4})
        back, extra = read_waveform_csv(tmp_path / "w.csv")
        assert back == w
        assert extra == {"seed": "4"}
        assert (tmp_path / "w.csv").read_text().startswith("# sample_period_s=2e-09, units=adc\n")

    def test_waveform_requires_header(self):
        with pytest.raises(ValueError):
            parse_waveform_csv("1.0\n2.0\n")

    def test_spectrum_round_trip(self, tmp_path):
        s = fft(Waveform(np.random.default_rng(7).normal(size=64), T))
        write_spectrum_csv(tmp_path / "s.csv", s)
        text = (tmp_path / "s.csv").read_text()
        assert text.splitlines()[0] == "k, re, im"
        back = read_spectrum_csv(tmp_path / "s.csv", T)
        np.testing.assert_array_equal(back.bins, s.bins)
        assert back.bin_spacing == pytest.approx(s.bin_spacing)
