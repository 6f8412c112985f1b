import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import N, T, pair_record, single_record
from pulsemux.deconv import (LPF_CUTOFF, ChannelHit, RecoveredPulse, deconvolve_single,
                             detect_second_arrival, detectability_slope,
                             detectability_threshold, identify_channels, recover,
                             recover_overlapping, ringing_amplitudes, sequential_recover)
from pulsemux.deconv import _delta_mixture, _reciprocal
from pulsemux.errors import (MaskedPassband, NoChannelDetected, OrderingViolation,
                             TooManyOccupancies)
from pulsemux.frontend import DigitizerSpec, NoiseModel, simulate_record
from pulsemux.resonator import ResonatorBank, ResonatorSpec, impulse_response
from pulsemux.signal_core import Spectrum, Waveform, butterworth_gain

HITS = [ChannelHit(1, 28, 0.0, 0.0), ChannelHit(2, 36, 0.0, 0.0)]
EXACT = DigitizerSpec(quantize=False)


def rel_rmse(t, r):
    return np.sqrt(np.mean((t - r) ** 2)) / t.max()


def window_error(p, truth):
    s, e = p.valid_window
    return np.max(np.abs(p.waveform.samples[s:e] - truth[s:e])) / truth.max()


def deltas(bank, x, k=100):
    d1, d2 = np.zeros(N), np.zeros(N)
    d1[k], d2[k] = 1.0, x
    return simulate_record([(1, Waveform(d1, T)), (2, Waveform(d2, T))], bank, EXACT,
                           NoiseModel(0.0)).waveform


def attenuated_bank(ratio=0.65):
    return ResonatorBank((ResonatorSpec(1, 7e6), ResonatorSpec(2, 9e6, gain=0.03 * ratio)))


class TestReciprocal:
    def test_plain_division_in_band(self, bank):
        h = bank.responses()[1]
        g = _reciprocal(h)
        strong = np.abs(h.bins) >= 1e-4 * np.abs(h.bins).max()
        np.testing.assert_allclose(g[strong] * h.bins[strong], 1.0, rtol=1e-12)

    def test_regularised_and_masked_bins(self):
        bins = np.array([1.0, 1e-9, 0.0, 1e-9], dtype=complex)
        mask = np.array([False, False, False, True])
        g = _reciprocal(Spectrum(bins, 1.0, 4, mask))
        lam = 1e-8
        assert g[1] == pytest.approx(1e-9 / (1e-18 + lam))
        assert g[2] == 0 and g[3] == 0
        assert np.isfinite(g).all()


class TestDeconvolveSingle:
    def test_impulse_response_gives_delta(self, bank):
        d = np.zeros(N)
        d[0] = 1.0
        y = simulate_record([(1, Waveform(d, T))], bank, EXACT, NoiseModel(0.0)).waveform
        x = deconvolve_single(y, bank.responses()[1], None).waveform.samples
        e = np.sort(x ** 2)[::-1]
        assert e[:3].sum() > 0.99 * e.sum()
        assert x[0] == pytest.approx(1 / EXACT.lsb, rel=1e-9)

    def test_round_trip_with_and_without_lowpass(self, bank):
        rec, x = single_record(bank)
        raw = deconvolve_single(rec.waveform, bank.responses()[1], None, 1)
        lpf = deconvolve_single(rec.waveform, bank.responses()[1], LPF_CUTOFF, 1)
        s, e = raw.valid_window
        assert (s, e) == (0, N - 1)
        assert rel_rmse(x[s:e], raw.waveform.samples[s:e]) < 1e-6
        assert rel_rmse(x[s:e], lpf.waveform.samples[s:e]) < 1e-3
        assert lpf.quality == "clean" and not lpf.partial
        assert abs(lpf.arrival_sample - 150) < 2

    def test_rmse_grows_with_noise(self, bank):
        out = []
        for sigma in (0.0, 1e-7, 1e-6, 1e-5):
            errs = []
            for i in range(5):
                rec, x = single_record(bank, sigma=sigma, index=i)
                p = deconvolve_single(rec.waveform, bank.responses()[1])
                errs.append(rel_rmse(x[:-1], p.waveform.samples[:-1]))
            out.append(np.mean(errs))
        assert all(a < b for a, b in zip(out, out[1:]))

    def test_masked_passband(self, bank):
        h = bank.responses()[1]
        mask = np.zeros(N, bool)
        mask[28] = True
        rec, _ = single_record(bank)
        with pytest.raises(MaskedPassband):
            deconvolve_single(rec.waveform, Spectrum(h.bins, h.bin_spacing, N, mask))

    def test_mask_above_cutoff_is_allowed(self, bank):
        h = bank.responses()[1]
        f = np.abs(np.fft.fftfreq(N, T))
        rec, x = single_record(bank)
        p = deconvolve_single(rec.waveform, Spectrum(h.bins, h.bin_spacing, N, f > 200e6))
        assert rel_rmse(x[:-1], p.waveform.samples[:-1]) < 1e-3


class TestSequential:
    def test_one_hit_is_single(self, bank):
        rec, _ = single_record(bank)
        (a,) = sequential_recover(rec.waveform, bank, HITS[:1])
        b = deconvolve_single(rec.waveform, bank.responses()[1], channel_id=1)
        assert a == b

    def test_220ns_noiseless(self, bank):
        rec, x1, x2 = pair_record(bank)
        p1, p2 = sequential_recover(rec.waveform, bank, HITS)
        assert (p1.channel_id, p2.channel_id) == (1, 2)
        assert p1.quality == p2.quality == "clean" and not p1.partial
        for p, x in ((p1, x1), (p2, x2)):
            s, e = p.valid_window
            assert rel_rmse(x[s:e], p.waveform.samples[s:e]) < 1e-2
            assert p.waveform.samples.sum() == pytest.approx(x.sum(), rel=5e-3)
            assert not p.waveform.samples[:s].any() and not p.waveform.samples[e:].any()

    @pytest.mark.parametrize("sep", [1000e-9, 1400e-9])
    def test_exact_algebra_when_far_apart(self, bank, sep):
        rec, x1, x2 = pair_record(bank, separation=sep, arrival=100.3 * T)
        p1, p2 = sequential_recover(rec.waveform, bank, HITS, lpf_cutoff=None)
        assert window_error(p1, x1) < 1e-6
        assert window_error(p2, x2) < 1e-6

    def test_first_pulse_exact_at_220ns(self, bank):
        rec, x1, x2 = pair_record(bank)
        p1, p2 = sequential_recover(rec.waveform, bank, HITS, lpf_cutoff=None)
        assert window_error(p1, x1) < 1e-6
        # the part of pulse 1 past the second arrival leaks into pulse 2
        assert window_error(p2, x2) == pytest.approx(1.25e-3, rel=0.05)

    def test_reconstruction_identity(self, bank):
        rec, x1, x2 = pair_record(bank)
        pulses = sequential_recover(rec.waveform, bank, HITS)
        resp = bank.responses()
        model = sum(resp[p.channel_id].bins * np.fft.fft(p.waveform.samples) for p in pulses)
        g = butterworth_gain(np.fft.fftfreq(N, T), LPF_CUTOFF, 4)
        y = np.fft.fft(rec.waveform.samples)
        miss = np.sum(np.abs(g * (model - y)) ** 2) / np.sum(np.abs(g * y) ** 2)
        assert 1 - miss > 0.99

    def test_unordered_hits(self, bank):
        rec, _, _ = pair_record(bank)
        hits = [ChannelHit(1, 28, 0, 0, 210.0), ChannelHit(2, 36, 0, 0, 100.0)]
        with pytest.raises(OrderingViolation):
            sequential_recover(rec.waveform, bank, hits)

    def test_three_hits(self, bank):
        rec, _, _ = pair_record(bank)
        with pytest.raises(TooManyOccupancies):
            sequential_recover(rec.waveform, bank, HITS + [ChannelHit(3, 44, 0, 0)])

    def test_attenuated_second_flag(self, bank):
        rec, _, _ = pair_record(bank, attenuation=0.85)
        _, p2 = sequential_recover(rec.waveform, bank, HITS)
        assert p2.quality == "attenuated_second"

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_commutes_with_scaling(self, bank, a):
        rec, _, _ = pair_record(bank, amplitude=0.01)
        scaled = Waveform(a * rec.waveform.samples, T, "adc")
        h0, base = recover(rec.waveform, bank)
        h1, out = recover(scaled, bank)
        assert [h.channel_id for h in h0] == [h.channel_id for h in h1]
        for p, q in zip(base, out):
            assert p.valid_window == q.valid_window
            np.testing.assert_allclose(q.waveform.samples, a * p.waveform.samples,
                                       atol=1e-9 * a * np.abs(p.waveform.samples).max())


class TestOverlap:
    def test_30ns_first_pulse_exact(self, bank):
        rec, x1, x2 = pair_record(bank, separation=30e-9)
        p1, p2 = recover_overlapping(rec.waveform, bank, HITS, lpf_cutoff=None)
        assert p1.partial and p1.quality == "partial_overlap"
        assert p2.quality == "partial_overlap"
        assert window_error(p1, x1) < 1e-6
        # never claims a sample that pulse 2 has reached
        first_nonzero = int(np.nonzero(x2)[0][0])
        assert p1.valid_window[1] <= first_nonzero
        assert p1.valid_window[1] >= first_nonzero - 3

    def test_sequential_flags_overlap(self, bank):
        rec, _, _ = pair_record(bank, separation=30e-9)
        p1, p2 = sequential_recover(rec.waveform, bank, HITS)
        assert p1.partial and p2.quality == "partial_overlap"

    def test_boundary_matches_sequential(self, bank):
        rec, _, _ = pair_record(bank, separation=220e-9)
        a = sequential_recover(rec.waveform, bank, HITS)
        b = recover_overlapping(rec.waveform, bank, HITS)
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.waveform.samples, q.waveform.samples)
            assert p.valid_window == q.valid_window

    def test_error_energy_falls_with_separation(self, bank):
        energy = []
        for sep in (30e-9, 60e-9, 90e-9, 120e-9, 150e-9, 180e-9, 220e-9):
            rec, _, x2 = pair_record(bank, separation=sep)
            _, p2 = recover_overlapping(rec.waveform, bank, HITS)
            s, e = p2.valid_window
            energy.append(np.sum((p2.waveform.samples[s:e] - x2[s:e]) ** 2) / np.sum(x2 ** 2))
        assert all(a > b for a, b in zip(energy, energy[1:]))
        assert energy[0] > 0.1 and energy[-1] < 1e-3

    def test_needs_two_hits(self, bank):
        rec, _, _ = pair_record(bank)
        with pytest.raises(ValueError):
            recover_overlapping(rec.waveform, bank, HITS[:1])


class TestArrival:
    def test_no_second_pulse(self, bank):
        rec, _ = single_record(bank)
        p = deconvolve_single(rec.waveform, bank.responses()[1])
        pk = int(np.argmax(p.waveform.samples))
        assert detect_second_arrival(p.waveform, (pk - 6, pk), noise_sigma=0.0) == N

    @pytest.mark.parametrize("sep", [220e-9, 30e-9])
    def test_within_three_samples_over_noisy_records(self, sep):
        from pulsemux.config import load, make_record
        cfg = load(preset_name="double-220ns-calibrated",
                   overrides={"scenario": {"delay_line": {"delay_s": sep}}})
        offsets = []
        for i in range(1000):
            rec = make_record(cfg, i)
            truth = rec.truth[1].spec.arrival_time / T
            p1, _ = sequential_recover(rec.waveform, cfg.bank, HITS)
            offsets.append(p1.valid_window[1] - truth)
        assert np.max(np.abs(offsets)) <= 3


class TestDetectability:
    def test_slope_signs(self, bank):
        resp = bank.responses()
        assert detectability_slope(_delta_mixture(resp, 1, 2, 1.0), 9e6) > 0
        assert detectability_slope(_delta_mixture(resp, 1, 2, 0.0), 9e6) <= 0

    def test_slope_monotone(self, bank):
        resp = bank.responses()
        s = [detectability_slope(_delta_mixture(resp, 1, 2, x), 9e6) for x in np.linspace(1, 0, 41)]
        assert all(a >= b for a, b in zip(s, s[1:]))

    def test_three_bin_least_squares(self):
        mag = np.zeros(64)
        mag[8:11] = [1.0, 2.0, 4.0]
        assert detectability_slope(Spectrum(mag, 1e6, 64), 10e6) == pytest.approx(1.5)

    def test_thresholds(self, bank):
        equal = detectability_threshold(bank, (1, 2))
        unequal = detectability_threshold(attenuated_bank(), (1, 2))
        # bisection to 0.005 on the slope sign change
        assert equal == pytest.approx(0.1602, abs=0.005)
        assert unequal == pytest.approx(0.2461, abs=0.005)
        assert 0 < equal < unequal < 1
        assert abs(unequal - 0.25) <= 0.10
        with pytest.raises(ValueError):
            detectability_threshold(bank, (1, 1))

    def test_identification_follows_threshold(self):
        bk = attenuated_bank()
        th = detectability_threshold(bk, (1, 2))
        assert [h.channel_id for h in identify_channels(deltas(bk, 0.2), bk)] == [1]
        assert {h.channel_id for h in identify_channels(deltas(bk, th + 0.02), bk)} == {1, 2}


class TestIdentify:
    def test_zero_record(self, bank):
        with pytest.raises(NoChannelDetected):
            identify_channels(Waveform(np.zeros(N), T, "adc"), bank)

    @pytest.mark.parametrize("channel", [1, 2])
    def test_single_channel(self, bank, channel):
        rec, _ = single_record(bank, channel=channel, quantize=True)
        hits = identify_channels(rec.waveform, bank)
        assert [h.channel_id for h in hits] == [channel]
        assert abs(hits[0].peak_bin * 0.25e6 - bank.channel(channel).f0) <= 1e6

    @pytest.mark.parametrize("sep", [30e-9, 220e-9, 400e-9, 600e-9])
    def test_both_channels_in_arrival_order(self, bank, sep):
        rec, _, _ = pair_record(bank, separation=sep, quantize=True)
        hits = identify_channels(rec.waveform, bank)
        assert [h.channel_id for h in hits] == [1, 2]
        assert hits[0].arrival_sample < hits[1].arrival_sample

    def test_reverse_order(self, bank):
        rec, x1, x2 = pair_record(bank, channels=(2, 1), quantize=True)
        hits, pulses = recover(rec.waveform, bank)
        assert [h.channel_id for h in hits] == [2, 1]
        assert pulses[0].waveform.samples.sum() == pytest.approx(x1.sum(), rel=0.01)

    def test_three_channels(self):
        bk = ResonatorBank.default(3)
        xs = [Waveform(np.eye(1, N, 100 + 10 * i).ravel(), T) for i in range(3)]
        y = simulate_record([(i + 1, x) for i, x in enumerate(xs)], bk, EXACT,
                            NoiseModel(0.0)).waveform
        with pytest.raises(TooManyOccupancies):
            identify_channels(y, bk)

    def test_ringing_amplitudes_of_impulses(self, bank):
        amps = ringing_amplitudes(deltas(bank, 0.5, k=0), bank)
        lsb = EXACT.lsb
        assert amps[1] * lsb == pytest.approx(1.0, rel=1e-6)
        assert amps[2] * lsb == pytest.approx(0.5, rel=1e-6)


class TestRecoveredPulse:
    def test_dict_round_trip(self, bank):
        rec, _, _ = pair_record(bank)
        _, pulses = recover(rec.waveform, bank)
        for p in pulses:
            q = RecoveredPulse.from_dict(p.to_dict(), N, T)
            assert q.valid_window == p.valid_window and q.quality == p.quality
            np.testing.assert_array_equal(q.waveform.samples, p.waveform.samples)
        d = pulses[0].to_dict(with_samples=False)
        assert "samples" not in d and set(d) >= {"channel_id", "valid_window", "partial"}
