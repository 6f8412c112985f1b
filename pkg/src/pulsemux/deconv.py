"""Pulse recovery by frequency-domain deconvolution.

For a record holding pulses on two channels ``a`` (earlier) and ``b``::

    Y = H_a X_a + H_b X_b
    Y_a = Y / H_a = X_a + (H_b / H_a) X_b        # second term starts at t_b
    x_a  = ifft(Y_a) restricted to [start_a, t_b)
    X_b  = (H_a / H_b) (Y_a - X_a)

Because the filters ``H_b / H_a`` are causal, ``ifft(Y_a)`` equals ``x_a``
exactly up to the arrival of the second pulse. When the pulses overlap only
the part of ``x_a`` before ``t_b`` is recoverable and the leftover tail of
``x_a`` shows up in ``X_b`` multiplied by ``H_a / H_b``.

Recovery functions accept the observed waveform only; they never see the
simulation truth.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sp_fft

from .errors import (MaskedPassband, NoChannelDetected, OrderingViolation,
                     TooManyOccupancies)
from .resonator import FANIN_GAIN, ResonatorBank
from .signal_core import Spectrum, Waveform, butterworth_gain, fft

LPF_CUTOFF = 160e6
LPF_ORDER = 4
# regularised division only where |H| is this small relative to its peak
REG_GATE = 1e-4
REG_LEVEL = 1e-4

WINDOW_LEAD = 6
ARRIVAL_K = 5.0
ARRIVAL_M = 4
# floor of the arrival threshold, relative to the first pulse peak
ARRIVAL_FLOOR = 2e-3
ONSET_FRACTION = 0.05
NOISE_SAMPLES = 50
EDGE_FRACTION = 0.1
PULSE_WIDTH = 220e-9
MIN_SEPARATION = 0.95 * PULSE_WIDTH
ID_THRESHOLD = 5.0
ID_BAND_HZ = 1e6
DETECTABILITY_FRACTION = 0.25
FIT_MIN_SAMPLES = 256
FIT_STEP = 16
FIT_TOLERANCE = 1.3
ARRIVAL_BACKTRACK = 6
# walk-back continues while the excess stays above this fraction of the threshold
ARRIVAL_BACKTRACK_LEVEL = 0.5
# the last sample absorbs the truncation of ringing that outlasts the record
END_GUARD = 1

QUALITIES = ("clean", "partial_overlap", "attenuated_second")


@dataclass(frozen=True)
class RecoveredPulse:
    """One recovered detector pulse.

    ``valid_window`` is ``(start, end)`` with ``end`` exclusive; ``waveform``
    is zero outside it.
    """

    channel_id: int
    waveform: Waveform
    valid_window: tuple
    partial: bool = False
    arrival_sample: float = float("nan")
    quality: str = "clean"

    def to_dict(self, with_samples: bool = True) -> dict:
        s, e = self.valid_window
        d = {"channel_id": self.channel_id, "valid_window": [int(s), int(e)],
             "partial": bool(self.partial), "arrival_sample": float(self.arrival_sample),
             "quality": self.quality}
        if with_samples:
            d["samples"] = [float(v) for v in self.waveform.samples[s:e]]
        return d

    @classmethod
    def from_dict(cls, d: dict, n: int, sample_period: float, units: str = "adc"):
        s, e = d["valid_window"]
        x = np.zeros(n)
        if "samples" in d:
            x[s:e] = d["samples"]
        return cls(int(d["channel_id"]), Waveform(x, sample_period, units), (int(s), int(e)),
                   bool(d["partial"]), float(d["arrival_sample"]), d["quality"])


@dataclass(frozen=True)
class ChannelHit:
    channel_id: int
    peak_bin: int
    peak_power: float
    slope_metric: float
    arrival_sample: float | None = None

    def to_dict(self) -> dict:
        return {"channel_id": self.channel_id, "peak_bin": self.peak_bin,
                "peak_power": self.peak_power, "slope_metric": self.slope_metric,
                "arrival_sample": self.arrival_sample}


# -- spectral helpers --------------------------------------------------------

def _reciprocal(h: Spectrum) -> np.ndarray:
    """``1/H`` with Tikhonov damping at near-zero bins and zeros at masked bins."""
    mag = np.abs(h.bins)
    peak = mag.max()
    lam = (REG_LEVEL * peak) ** 2
    out = np.zeros(h.origin_length, dtype=complex)
    plain = mag >= REG_GATE * peak
    out[plain] = 1.0 / h.bins[plain]
    weak = ~plain
    out[weak] = np.conj(h.bins[weak]) / (mag[weak] ** 2 + lam)
    if h.mask is not None:
        out[h.mask] = 0.0
    return out


def _check_passband(h: Spectrum, cutoff: float | None):
    if h.mask is None or not h.mask.any():
        return
    limit = cutoff if cutoff is not None else 0.5 / h.sample_period
    hit = h.mask & (np.abs(h.frequencies) <= limit)
    if hit.any():
        raise MaskedPassband(f"{int(hit.sum())} masked response bins inside the passband")


def _lowpass(z: np.ndarray, sample_period: float, cutoff: float | None) -> np.ndarray:
    """Real part of ``ifft`` of spectrum ``z`` after an optional zero-phase low-pass."""
    if cutoff is not None:
        z = z * butterworth_gain(sp_fft.fftfreq(z.size, sample_period), cutoff, LPF_ORDER)
    return sp_fft.ifft(z).real


def _as_responses(bank_or_responses, n=None) -> dict:
    if isinstance(bank_or_responses, ResonatorBank):
        return bank_or_responses.responses()
    return dict(bank_or_responses)


# -- time-domain helpers -----------------------------------------------------

def _noise_sigma(y: np.ndarray, stop: int) -> float:
    seg = y[: max(stop, 0)]
    if seg.size < 16:
        return 0.0
    return 1.4826 * float(np.median(np.abs(seg - np.median(seg))))


def _record_sigma(y: Waveform) -> float:
    """Noise level of a record from its pre-trigger samples, floored at quantisation."""
    seg = y.samples[:NOISE_SAMPLES]
    sigma = float(seg.std()) if seg.size > 1 else 0.0
    return max(sigma, 1.0 / np.sqrt(12.0)) if "quantized" in y.flags else sigma


def _propagated_sigma(sigma: float, gain: np.ndarray, cutoff: float | None,
                      sample_period: float) -> float:
    """Standard deviation of white noise of ``sigma`` after the spectral filter ``gain``."""
    g = np.abs(gain) ** 2
    if cutoff is not None:
        g = g * butterworth_gain(sp_fft.fftfreq(g.size, sample_period), cutoff, LPF_ORDER) ** 2
    return sigma * float(np.sqrt(np.mean(g)))


def _first_peak(y: np.ndarray, start: int = 0, sigma: float | None = None):
    """Onset-following local maximum of the first significant positive excursion."""
    if sigma is None:
        sigma = _noise_sigma(y, NOISE_SAMPLES)
    top = y[start:].max() if start < y.size else 0.0
    if top <= 0:
        return None
    thr = max(ARRIVAL_K * sigma, ONSET_FRACTION * top)
    above = np.nonzero(y[start:] > thr)[0]
    if above.size == 0:
        return None
    n = start + int(above[0])
    while n + 1 < y.size and y[n + 1] >= y[n]:
        n += 1
    # step over a shallow noise wiggle on the leading edge
    look = y[n: n + 3]
    if look.size and look.max() > y[n]:
        n = n + int(np.argmax(look))
        while n + 1 < y.size and y[n + 1] >= y[n]:
            n += 1
    return n


def _leading_edge(y: np.ndarray, peak: int, fraction: float = EDGE_FRACTION) -> float:
    """Sub-sample time where the rising edge before ``peak`` crosses ``fraction`` of it."""
    level = fraction * y[peak]
    n = peak
    while n > 0 and y[n - 1] > level:
        n -= 1
    if n == 0:
        return 0.0
    lo, hi = y[n - 1], y[n]
    return (n - 1) + (level - lo) / (hi - lo) if hi != lo else float(n)


def detect_second_arrival(y1: Waveform, first_window, k: float = ARRIVAL_K,
                          m: int = ARRIVAL_M, noise_sigma: float | None = None) -> int:
    """Sample index where a second pulse starts in a first-channel deconvolution.

    The tail of the first pulse is modelled as non-increasing: the running
    minimum of ``y1`` since the first peak, floored at the baseline. The
    arrival is the first sample of a run of ``m`` samples that exceed this
    model by more than ``k`` times the pre-pulse noise level (or a small
    fraction of the first peak, whichever is larger).

    Parameters
    ----------
    y1 : Waveform
        Low-passed deconvolution of the record by the first channel.
    first_window : (start, peak)
        Window start and peak sample of the first pulse.
    noise_sigma : float, optional
        Noise level of ``y1``; estimated from the samples before the window
        when omitted.

    Returns
    -------
    int
        Arrival sample, or ``len(y1)`` when no second pulse is found.
    """
    y = y1.samples
    start, peak = int(first_window[0]), int(first_window[1])
    n = y.size
    sigma = _noise_sigma(y, start - 4) if noise_sigma is None else noise_sigma
    thr = max(k * sigma, ARRIVAL_FLOOR * abs(y[peak]))
    seg = y[peak:]
    model = np.maximum(np.minimum.accumulate(seg), 0.0)
    # compare each sample with the model built from the samples before it
    resid = np.empty_like(seg)
    resid[0] = -np.inf
    resid[1:] = seg[1:] - model[:-1]
    hot = resid > thr
    if m > 1:
        run = np.ones(hot.size - m + 1, dtype=bool) if hot.size >= m else np.zeros(0, bool)
        for j in range(m):
            run &= hot[j: hot.size - m + 1 + j]
    else:
        run = hot
    idx = np.nonzero(run)[0]
    if idx.size == 0:
        return n
    j = int(idx[0])
    # walk back to where the excess starts, then keep one sample of margin
    # since the low-pass spreads the onset slightly ahead of the true arrival
    back = 0
    while j > 1 and resid[j - 1] > ARRIVAL_BACKTRACK_LEVEL * thr and back < ARRIVAL_BACKTRACK:
        j -= 1
        back += 1
    return peak + max(j - 1, 1)


# -- channel identification --------------------------------------------------

def detectability_slope(y: Spectrum, f2: float) -> float:
    """Least-squares slope of ``|Y|`` over the three bins ending at the bin nearest ``f2``."""
    k2 = y.bin_of(f2)
    if k2 < 2 or k2 > y.origin_length // 2:
        raise ValueError("f2 outside the spectrum")
    mag = np.abs(y.bins[k2 - 2: k2 + 1])
    return float(np.polyfit([0.0, 1.0, 2.0], mag, 1)[0])


def _peak_slope(y: Spectrum, f0: float) -> float:
    """Rising slope into ``f0``, or 0 when ``|Y|`` keeps rising past it."""
    k = y.bin_of(f0)
    mag = np.abs(y.bins[k: k + 3])
    if mag.size == 3 and np.polyfit([0.0, 1.0, 2.0], mag, 1)[0] >= 0:
        return 0.0
    return max(detectability_slope(y, f0), 0.0)


def ringing_amplitudes(y: Waveform, bank: ResonatorBank) -> dict | None:
    """Least-squares amplitude of each channel's free oscillation after the last pulse.

    Every channel's free response is fitted jointly over the longest record
    tail that the ringing model alone explains to within the noise level of
    the last samples. Amplitudes are divided by the channel gain and referred
    to the record start, so a unit impulse at sample 0 on channel ``c`` gives
    1 for ``c`` regardless of phase. Returns ``None`` for records too short
    to fit.
    """
    x = y.samples
    n = x.size
    if n < FIT_MIN_SAMPLES + FIT_STEP:
        return None
    t = np.arange(n) * bank.sample_period
    cols = []
    for c in bank.channels:
        env = np.exp(-t / c.envelope_tau)
        w = 2 * np.pi * c.damped_frequency * t
        cols += [env * np.cos(w), env * np.sin(w)]
    basis = np.stack(cols, axis=1)

    def fit(s):
        # normal equations on columns rescaled to unit norm; the residual is
        # formed explicitly so a tiny misfit is not lost to cancellation
        b = basis[s:]
        norm = np.sqrt(np.einsum("ij,ij->j", b, b))
        norm[norm == 0] = 1.0
        bs = b / norm
        coef = np.linalg.solve(bs.T @ bs, bs.T @ x[s:]) / norm
        r = x[s:] - b @ coef
        return coef, float(np.sqrt(np.mean(r ** 2)))

    # move the fit start earlier while pure ringing still explains the data
    s = n - FIT_MIN_SAMPLES
    coef, ref = fit(s)
    # quantised records need a floor: their tail can round to exact zeros
    quant = 1.0 / np.sqrt(12.0) if "quantized" in y.flags else 0.0
    tol = FIT_TOLERANCE * max(ref, quant) + 1e-12 * np.abs(x).max()
    while s - FIT_STEP >= 0:
        c2, rms = fit(s - FIT_STEP)
        if rms > tol:
            break
        s -= FIT_STEP
        coef = c2
    # back off from the first rejected start so pulse tails do not bias the fit
    if s > 0:
        s = min(s + FIT_STEP, n - FIT_MIN_SAMPLES)
        coef, _ = fit(s)
    return {c.channel_id: float(np.hypot(coef[2 * i], coef[2 * i + 1])) / (FANIN_GAIN * c.gain)
            for i, c in enumerate(bank.channels)}


def _hits_unordered(y: Waveform, bank: ResonatorBank, theta: float) -> list[ChannelHit]:
    spec = fft(y)
    power = np.abs(spec.bins) ** 2
    half = np.arange(1, spec.origin_length // 2 + 1)
    f = half * spec.bin_spacing
    in_band = np.zeros(half.size, dtype=bool)
    for c in bank.channels:
        in_band |= np.abs(f - c.f0) <= ID_BAND_HZ
    off = power[half[~in_band]]
    floor = float(np.median(off)) if off.size else 0.0
    # slope test on the coincident-impulse equivalent of the record, which is
    # free of the interference pattern set by the pulses' relative arrival
    amps = ringing_amplitudes(y, bank) if len(bank.channels) > 1 else None
    if amps is not None:
        resp = bank.responses()
        ref = next(iter(resp.values()))
        equiv = Spectrum(sum(amps[cid] * resp[cid].bins for cid in resp),
                         ref.bin_spacing, ref.origin_length)
    else:
        equiv = spec
    hits = []
    for c in bank.channels:
        band = half[np.abs(f - c.f0) <= ID_BAND_HZ]
        kpk = int(band[np.argmax(power[band])])
        ppk = float(power[kpk])
        # a neighbour's flank also rises into f0, so require a peak. The ringing
        # fit weights later pulses by exp(t / tau); the raw record does not.
        slope = max(_peak_slope(equiv, c.f0), _peak_slope(spec, c.f0))
        if ppk > theta * floor and ppk > 0 and slope > 0:
            hits.append(ChannelHit(c.channel_id, kpk, ppk, slope))
    return hits


def identify_channels(y: Waveform, bank: ResonatorBank, responses=None,
                      theta: float = ID_THRESHOLD) -> list[ChannelHit]:
    """Find which channels fired, ordered by arrival.

    A channel is reported when the power at its spectral peak (within
    +-1 MHz of ``f0``) exceeds ``theta`` times the median off-band power and
    ``|Y|`` still rises into ``f0`` (positive detectability slope) and
    falls after it.

    Raises
    ------
    NoChannelDetected
    """
    hits = _hits_unordered(y, bank, theta)
    if not hits:
        raise NoChannelDetected("no channel exceeds the identification threshold")
    if len(hits) == 1:
        return hits
    if len(hits) > 2:
        raise TooManyOccupancies(f"{len(hits)} channels fired; at most two are supported")
    ordered, _ = _best_ordering(y, _as_responses(responses or bank), hits)
    return ordered


# -- recovery ----------------------------------------------------------------

def _finish(x: np.ndarray, window, sample_period: float, units: str) -> Waveform:
    s, e = window
    out = np.zeros_like(x)
    out[s:e] = x[s:e]
    return Waveform(out, sample_period, units)


def deconvolve_single(y: Waveform, h: Spectrum, lpf_cutoff: float | None = LPF_CUTOFF,
                      channel_id: int = 0) -> RecoveredPulse:
    """Recover a single-occupancy pulse, ``x = ifft(Y / H)`` then low-pass.

    The whole record except its final sample is the valid window.
    """
    _check_passband(h, lpf_cutoff)
    g = _reciprocal(h)
    z = sp_fft.fft(y.samples) * g
    x = _lowpass(z, y.sample_period, lpf_cutoff)
    det = x if lpf_cutoff == LPF_CUTOFF else _lowpass(z, y.sample_period, LPF_CUTOFF)
    sigma = _propagated_sigma(_record_sigma(y), g, LPF_CUTOFF, y.sample_period)
    peak = _first_peak(det, sigma=sigma)
    arrival = _leading_edge(det, peak) if peak is not None else float("nan")
    window = (0, y.n - END_GUARD)
    return RecoveredPulse(channel_id, _finish(x, window, y.sample_period, y.units), window,
                          False, arrival, "clean")


def _recover_pair(y: Waveform, resp: dict, first: int, second: int,
                  lpf_cutoff: float | None, min_separation: float, force_overlap: bool):
    """Core of the sequential method for an assumed arrival order."""
    ha, hb = resp[first], resp[second]
    _check_passband(ha, lpf_cutoff)
    _check_passband(hb, lpf_cutoff)
    n, dt = y.n, y.sample_period
    big_y = sp_fft.fft(y.samples)
    y1_spec = big_y * _reciprocal(ha)
    y1_raw = sp_fft.ifft(y1_spec).real
    y1_det = _lowpass(y1_spec, dt, LPF_CUTOFF)

    g1 = _reciprocal(ha)
    sigma1 = _propagated_sigma(_record_sigma(y), g1, LPF_CUTOFF, dt)
    peak1 = _first_peak(y1_det, sigma=sigma1)
    if peak1 is None:
        raise NoChannelDetected(f"no pulse found after deconvolving channel {first}")
    start1 = max(peak1 - WINDOW_LEAD, 0)
    arrival2 = detect_second_arrival(Waveform(y1_det, dt), (start1, peak1), noise_sigma=sigma1)
    end1 = arrival2
    if end1 >= n:
        # second pulse not visible in y1; close on the first pulse's nominal width
        end1 = min(n, int(np.ceil(_leading_edge(y1_det, peak1) + PULSE_WIDTH / dt)))

    x1_raw = np.zeros(n)
    x1_raw[start1:end1] = y1_raw[start1:end1]
    ratio = ha.bins * _reciprocal(hb)
    if ha.mask is not None:
        ratio[ha.mask] = 0.0
    x2_spec = ratio * (y1_spec - sp_fft.fft(x1_raw))

    y1_out = y1_det if lpf_cutoff == LPF_CUTOFF else _lowpass(y1_spec, dt, lpf_cutoff)
    x2_out = _lowpass(x2_spec, dt, lpf_cutoff)
    x2_det = x2_out if lpf_cutoff == LPF_CUTOFF else _lowpass(x2_spec, dt, LPF_CUTOFF)

    lo = max(min(end1, n - 1) - 4, 0)
    seg = x2_det[lo: min(lo + 40, n)]
    peak2 = lo + int(np.argmax(seg)) if seg.size else lo
    start2 = max(peak2 - WINDOW_LEAD, 0)

    t1 = _leading_edge(y1_det, peak1)
    t2 = _leading_edge(x2_det, peak2) if x2_det[peak2] > 0 else float(peak2)
    overlap = force_overlap or (t2 - t1) * dt < min_separation
    q1 = "partial_overlap" if overlap else "clean"
    if overlap:
        q2 = "partial_overlap"
    elif x2_det[peak2] < DETECTABILITY_FRACTION * y1_det[peak1]:
        q2 = "attenuated_second"
    else:
        q2 = "clean"
    p1 = RecoveredPulse(first, _finish(y1_out, (start1, end1), dt, y.units), (start1, end1),
                        overlap, t1, q1)
    w2 = (start2, n - END_GUARD)
    p2 = RecoveredPulse(second, _finish(x2_out, w2, dt, y.units), w2,
                        False, t2, q2)
    return [p1, p2]


def _ordering_score(pulses) -> float:
    """Fraction of recovered energy that is negative (residual oscillation)."""
    neg = tot = 0.0
    for p in pulses:
        s, e = p.valid_window
        seg = p.waveform.samples[s:e]
        neg += float(np.sum(np.minimum(seg, 0.0) ** 2))
        tot += float(np.sum(seg ** 2))
    return neg / tot if tot > 0 else np.inf


def _best_ordering(y: Waveform, resp: dict, hits, lpf_cutoff=LPF_CUTOFF,
                   min_separation=MIN_SEPARATION):
    best = None
    for a, b in ((0, 1), (1, 0)):
        ha, hb = hits[a], hits[b]
        try:
            pulses = _recover_pair(y, resp, ha.channel_id, hb.channel_id, LPF_CUTOFF,
                                   min_separation, False)
        except NoChannelDetected:
            continue
        score = _ordering_score(pulses)
        if best is None or score < best[0]:
            best = (score, [replace(ha, arrival_sample=pulses[0].arrival_sample),
                            replace(hb, arrival_sample=pulses[1].arrival_sample)])
    if best is None:
        raise NoChannelDetected("no consistent arrival order")
    return best[1], best[0]


def _check_order(hits):
    times = [h.arrival_sample for h in hits if h.arrival_sample is not None]
    if any(b < a for a, b in zip(times, times[1:])):
        raise OrderingViolation("hits are not ordered by arrival")


def sequential_recover(y: Waveform, bank_or_responses, hits,
                       lpf_cutoff: float | None = LPF_CUTOFF,
                       min_separation: float = MIN_SEPARATION) -> list[RecoveredPulse]:
    """Recover one or two pulses from a record with ordered channel hits.

    With one hit this is :func:`deconvolve_single`. With two hits the first
    channel is deconvolved, its pulse windowed out up to the detected second
    arrival, and the remainder mapped onto the second channel with
    ``H_first / H_second``. Pulses closer than ``min_separation`` are flagged
    as overlapping (see :func:`recover_overlapping`).

    Raises
    ------
    OrderingViolation
        If the hits carry arrival samples that are out of order.
    MaskedPassband
    """
    hits = list(hits)
    if not hits:
        raise NoChannelDetected("no hits given")
    _check_order(hits)
    resp = _as_responses(bank_or_responses)
    if len(hits) == 1:
        cid = hits[0].channel_id
        return [deconvolve_single(y, resp[cid], lpf_cutoff, cid)]
    if len(hits) > 2:
        raise TooManyOccupancies(f"{len(hits)} hits; at most two are supported")
    return _recover_pair(y, resp, hits[0].channel_id, hits[1].channel_id, lpf_cutoff,
                         min_separation, False)


def recover_overlapping(y: Waveform, bank_or_responses, hits,
                        lpf_cutoff: float | None = LPF_CUTOFF) -> list[RecoveredPulse]:
    """Partial recovery of two pulses that overlap in time.

    The first pulse is kept only up to the second arrival and marked
    partial; the second carries the error term from the unrecovered tail of
    the first. At a separation of one full pulse width the output matches
    :func:`sequential_recover`.
    """
    hits = list(hits)
    if len(hits) != 2:
        raise ValueError("recover_overlapping needs exactly two hits")
    _check_order(hits)
    resp = _as_responses(bank_or_responses)
    return _recover_pair(y, resp, hits[0].channel_id, hits[1].channel_id, lpf_cutoff,
                         MIN_SEPARATION, False)


def recover(y: Waveform, bank: ResonatorBank, responses=None,
            lpf_cutoff: float | None = LPF_CUTOFF, theta: float = ID_THRESHOLD):
    """Identify channels and recover every pulse in one record.

    Returns ``(hits, pulses)``.
    """
    resp = _as_responses(responses if responses is not None else bank)
    hits = _hits_unordered(y, bank, theta)
    if not hits:
        raise NoChannelDetected("no channel exceeds the identification threshold")
    if len(hits) > 2:
        raise TooManyOccupancies(f"{len(hits)} channels fired; at most two are supported")
    if len(hits) == 2:
        hits, _ = _best_ordering(y, resp, hits)
    pulses = sequential_recover(y, resp, hits, lpf_cutoff)
    if len(hits) == 1:
        hits = [replace(hits[0], arrival_sample=pulses[0].arrival_sample)]
    return hits, pulses


# -- detectability -----------------------------------------------------------

def _delta_mixture(resp: dict, first: int, second: int, x: float) -> Spectrum:
    h1, h2 = resp[first], resp[second]
    return Spectrum(h1.bins + x * h2.bins, h1.bin_spacing, h1.origin_length)


def detectability_threshold(bank: ResonatorBank, channel_pair, tol: float = 0.005) -> float:
    """Smallest second-pulse fraction ``x`` whose channel peak is still visible.

    Both pulses are taken as impulses, ``Y = H_1 + x H_2``; bisection on
    ``x`` in ``[0, 1]`` for the sign change of :func:`detectability_slope`
    at the second channel's ``f0``.
    """
    first, second = channel_pair
    if first == second:
        raise ValueError("channel pair must be distinct")
    resp = bank.responses()
    f2 = bank.channel(second).f0

    def visible(x):
        return detectability_slope(_delta_mixture(resp, first, second, x), f2) > 0

    if visible(0.0):
        return 0.0
    if not visible(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if visible(mid):
            hi = mid
        else:
            lo = mid
    return hi
