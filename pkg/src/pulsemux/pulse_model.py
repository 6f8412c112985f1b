"""Synthetic scintillator pulses, the signal copier, the delay line and event timing.

The detector pulse is a double-exponential surrogate with a fast and a slow
decay component::

    p(t) = A (1 - exp(-t/rise)) [(1 - s) exp(-t/fast) + s exp(-t/slow)],  t >= 0

normalised so that its continuous-time peak equals ``A``. Sample ``n`` holds
the mean of ``p`` over ``[(n-1) T, n T]`` (an integrate-and-dump sampler), so
the sampled record carries no energy aliased in from above Nyquist by the
slope discontinuity at the leading edge.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import optimize, signal, stats

from .errors import PulseExceedsRecord
from .signal_core import Waveform

PARTICLE_CLASSES = ("gamma", "neutron")
DEFAULT_SLOW_FRACTION = {"gamma": 0.05, "neutron": 0.20}

# fraction of peak that ends a pulse on its tail
WIDTH_LEVEL = 1e-3


@dataclass(frozen=True)
class PulseSpec:
    """Shape and placement of one anode pulse (amplitude stored as a magnitude)."""

    amplitude: float = 0.1
    rise_tau: float = 5e-9
    fall_tau_fast: float = 20e-9
    fall_tau_slow: float = 48e-9
    slow_fraction: float = 0.05
    arrival_time: float = 0.0
    particle_class: str = "gamma"
    negative_polarity: bool = True

    def __post_init__(self):
        if not (0 < self.rise_tau < self.fall_tau_fast < self.fall_tau_slow):
            raise ValueError("need 0 < rise_tau < fall_tau_fast < fall_tau_slow")
        if not 0.0 <= self.slow_fraction <= 1.0:
            raise ValueError("slow_fraction must lie in [0, 1]")
        if self.amplitude < 0:
            raise ValueError("amplitude is a magnitude; use negative_polarity for sign")
        if self.particle_class not in PARTICLE_CLASSES:
            raise ValueError(f"particle_class must be one of {PARTICLE_CLASSES}")

    @classmethod
    def for_class(cls, particle_class: str, **kw) -> "PulseSpec":
        kw.setdefault("slow_fraction", DEFAULT_SLOW_FRACTION[particle_class])
        return cls(particle_class=particle_class, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["polarity"] = "negative" if d.pop("negative_polarity") else "positive"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSpec":
        d = dict(d)
        pol = d.pop("polarity", "negative")
        return cls(negative_polarity=(pol == "negative"), **d)


@dataclass(frozen=True)
class DelayLineSpec:
    """Passive delay line: pure delay, flat attenuation, one-pole bandwidth loss."""

    delay: float = 220e-9
    attenuation_fraction: float = 0.35
    bandwidth_hz: float = 80e6

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if not 0.0 <= self.attenuation_fraction < 1.0:
            raise ValueError("attenuation_fraction must lie in [0, 1)")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be > 0")


def _terms(spec: PulseSpec):
    """Exponential expansion ``p(t) = sum c_i exp(-t / tau_i)`` of the unscaled shape."""
    s = spec.slow_fraction
    kr = 1.0 / spec.rise_tau
    return [
        (1.0 - s, spec.fall_tau_fast),
        (-(1.0 - s), 1.0 / (1.0 / spec.fall_tau_fast + kr)),
        (s, spec.fall_tau_slow),
        (-s, 1.0 / (1.0 / spec.fall_tau_slow + kr)),
    ]


def _shape(spec: PulseSpec, t):
    t = np.asarray(t, dtype=float)
    return sum(c * np.exp(-t / tau) for c, tau in _terms(spec))


def _shape_slope(spec: PulseSpec, t):
    return sum(-c / tau * math.exp(-t / tau) for c, tau in _terms(spec))


def _peak(spec: PulseSpec) -> tuple[float, float]:
    """Time and value of the continuous-time maximum of the unscaled shape."""
    hi = spec.rise_tau
    while _shape_slope(spec, hi) > 0:
        hi *= 2.0
    t_pk = optimize.brentq(lambda t: _shape_slope(spec, t), 0.0, hi, xtol=1e-18)
    return t_pk, float(_shape(spec, t_pk))


def peak_time(spec: PulseSpec) -> float:
    """Delay from arrival to the pulse maximum, in seconds."""
    return _peak(spec)[0]


def pulse_width(spec: PulseSpec, level: float = WIDTH_LEVEL) -> float:
    """Time from the leading edge until the tail falls to ``level`` of the peak."""
    t_pk, v_pk = _peak(spec)
    target = level * v_pk
    hi = max(t_pk * 2.0, spec.fall_tau_slow)
    while _shape(spec, hi) > target:
        hi *= 2.0
    return optimize.brentq(lambda t: _shape(spec, t) - target, t_pk, hi, xtol=1e-15)


def evaluate(spec: PulseSpec, t) -> np.ndarray:
    """Continuous-time pulse value at absolute times ``t`` (zero before arrival)."""
    rel = np.asarray(t, dtype=float) - spec.arrival_time
    out = np.where(rel >= 0, _shape(spec, np.clip(rel, 0.0, None)), 0.0)
    return spec.amplitude * out / _peak(spec)[1]


def synth_pulse(spec: PulseSpec, sample_period: float, n_samples: int) -> Waveform:
    """Sample a pulse onto a record of ``n_samples`` samples.

    Raises
    ------
    PulseExceedsRecord
        If the pulse does not reach its 0.1 % tail level before the record ends.
    """
    if spec.arrival_time < 0 or spec.arrival_time + pulse_width(spec) > n_samples * sample_period:
        raise PulseExceedsRecord(
            f"pulse at {spec.arrival_time:.4g} s does not fit a {n_samples}-sample record")
    # exact cell average of each exponential over [(n-1)T, nT] relative to arrival
    edges = np.arange(n_samples + 1) * sample_period - sample_period - spec.arrival_time
    a = np.clip(edges[:-1], 0.0, None)
    b = np.clip(edges[1:], 0.0, None)
    acc = np.zeros(n_samples)
    for c, tau in _terms(spec):
        acc += c * tau * (np.exp(-a / tau) - np.exp(-b / tau))
    acc /= sample_period
    acc[b <= 0.0] = 0.0
    return Waveform(spec.amplitude * acc / _peak(spec)[1], sample_period, "volts")


def copy_signal(w: Waveform) -> tuple[Waveform, Waveform]:
    """Signal copier: two identical outputs, each with gain 2."""
    return w.scaled(2.0), w.scaled(2.0)


def apply_delay_line(w: Waveform, dl: DelayLineSpec) -> Waveform:
    """Attenuate, low-pass with a single pole, and delay by a whole number of samples.

    The delay is rounded to the nearest sample; samples shifted past the end
    of the record are dropped.
    """
    x = (1.0 - dl.attenuation_fraction) * w.samples
    alpha = -math.expm1(-2.0 * math.pi * dl.bandwidth_hz * w.sample_period)
    if alpha < 1.0:
        x = signal.lfilter([alpha], [1.0, -(1.0 - alpha)], x)
    shift = int(round(dl.delay / w.sample_period))
    out = np.zeros_like(x)
    if shift < x.size:
        out[shift:] = x[: x.size - shift]
    return w.with_samples(out)


def _exp_gaps(rng, rate, shape):
    return rng.exponential(1.0 / rate, size=shape)


def sample_event_times(rate_cps: float, record_length_s: float, rng_seed: int) -> list[float]:
    """Arrival times of a homogeneous Poisson process on ``[0, record_length_s)``."""
    if rate_cps < 0:
        raise ValueError("rate_cps must be >= 0")
    if rate_cps == 0:
        return []
    rng = np.random.default_rng(rng_seed)
    times = []
    t = 0.0
    while True:
        t += float(_exp_gaps(rng, rate_cps, None))
        if t >= record_length_s:
            return times
        times.append(t)


def sample_event_counts(rate_cps: float, record_length_s: float, n_trials: int,
                        rng_seed: int) -> np.ndarray:
    """Number of Poisson arrivals in each of ``n_trials`` independent windows.

    Uses the same exponential inter-arrival construction as
    :func:`sample_event_times`, vectorised over trials.
    """
    if rate_cps < 0:
        raise ValueError("rate_cps must be >= 0")
    if rate_cps == 0:
        return np.zeros(n_trials, dtype=int)
    rng = np.random.default_rng(rng_seed)
    lam = rate_cps * record_length_s
    kmax = int(stats.poisson.ppf(1 - 1e-12, lam)) + 2
    counts = np.zeros(n_trials, dtype=int)
    clock = np.zeros(n_trials)
    active = np.arange(n_trials)
    while active.size:
        arrivals = clock[active, None] + np.cumsum(_exp_gaps(rng, rate_cps, (active.size, kmax)), axis=1)
        inside = arrivals < record_length_s
        counts[active] += inside.sum(axis=1)
        # windows where every drawn arrival landed inside need more draws
        full = inside[:, -1]
        clock[active] = arrivals[:, -1]
        active = active[full]
    return counts


def with_arrival(spec: PulseSpec, arrival_time: float) -> PulseSpec:
    return replace(spec, arrival_time=arrival_time)
