"""Estimators applied to recovered (or true) pulses.

Charge, amplitude energy, constant-fraction timing, the tail-to-total PSD
ratio with its figure of merit, relative RMSE binned by pulse height, and
the Poisson probability of more than one event per record.

Sample windows are ``(start, stop)`` with ``stop`` exclusive, in absolute
sample indices of the record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .deconv import RecoveredPulse
from .errors import (BelowThreshold, InsufficientStatistics, NoZeroCrossing,
                     PeakOutsideValidRegion, WindowOutsideValidRegion)
from .signal_core import Waveform

BASELINE_SAMPLES = 50
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
MIN_POPULATION = 30


@dataclass(frozen=True)
class CfdConfig:
    fraction: float = 0.2
    delay: float = 6.4e-9

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("CFD fraction must lie in (0, 1)")
        if not self.delay > 0:
            raise ValueError("CFD delay must be > 0")

    def delay_samples(self, sample_period: float) -> int:
        d = int(round(self.delay / sample_period))
        if d < 1:
            raise ValueError(f"CFD delay {self.delay:g} s rounds to zero samples")
        return d


@dataclass(frozen=True)
class PsdConfig:
    """Gates relative to the pulse peak.

    Short gate ``[peak - offset, peak + short_gate_stop)``, long gate
    ``[peak - offset, peak - offset + long_gate)``.
    """

    short_gate_start_offset: int = 6
    short_gate_stop: int = 20
    long_gate: int = 107
    threshold_kevee: float = 20.0

    def __post_init__(self):
        if self.short_gate_start_offset < 0 or self.short_gate_stop < 1:
            raise ValueError("gate offset must be >= 0 and short_gate_stop >= 1")
        if self.short_gate_start_offset + self.short_gate_stop > self.long_gate:
            raise ValueError("short gate must lie inside the long gate")
        if self.threshold_kevee < 0:
            raise ValueError("threshold_kevee must be >= 0")

    @property
    def max_stop(self) -> int:
        return self.long_gate - self.short_gate_start_offset


@dataclass(frozen=True)
class EnergyCalibration:
    kevee_per_adc_sample_area: float = 1.0

    def __post_init__(self):
        if not self.kevee_per_adc_sample_area > 0:
            raise ValueError("calibration constant must be > 0")


def _unpack(p):
    if isinstance(p, RecoveredPulse):
        return p.waveform, p.valid_window, p.partial
    return p, (0, p.n), False


def baseline(samples: np.ndarray, start: int) -> float:
    """Mean of up to the first 50 samples that precede ``start``."""
    stop = min(BASELINE_SAMPLES, max(start, 0))
    return float(samples[:stop].mean()) if stop > 0 else 0.0


def integrate_charge(p, window, cal: EnergyCalibration | float = 1.0) -> float:
    """Baseline-subtracted sum over ``window`` times the calibration constant.

    Raises
    ------
    WindowOutsideValidRegion
        For a partial recovered pulse when ``window`` leaves its valid window.
    """
    w, valid, partial = _unpack(p)
    s, e = int(window[0]), int(window[1])
    if not 0 <= s <= e <= w.n:
        raise ValueError(f"window {window} outside the record")
    if partial and (s < valid[0] or e > valid[1]):
        raise WindowOutsideValidRegion(f"window {window} leaves valid window {valid}")
    k = cal.kevee_per_adc_sample_area if isinstance(cal, EnergyCalibration) else float(cal)
    x = w.samples
    return k * float(np.sum(x[s:e] - baseline(x, s)))


def amplitude_energy(p, cal_amp: float = 1.0) -> float:
    """``cal_amp (peak - baseline)``, the estimator used for partial pulses.

    Raises
    ------
    PeakOutsideValidRegion
        If the pulse is still rising at the end of its valid window.
    """
    w, (s, e), _ = _unpack(p)
    x = w.samples
    if e - s < 2:
        raise PeakOutsideValidRegion("valid window too short to hold a peak")
    k = s + int(np.argmax(x[s:e]))
    if k == e - 1 and e < w.n:
        raise PeakOutsideValidRegion("pulse maximum is cut by the end of the valid window")
    return cal_amp * float(x[k] - baseline(x, s))


def cfd_time(p, cfg: CfdConfig) -> float:
    """Constant-fraction timing mark in seconds from the record start.

    ``b(n) = fraction p(n) - p(n - d)``; the mark is the first sign change of
    ``b`` after its maximum, linearly interpolated between samples.

    Raises
    ------
    NoZeroCrossing
    """
    w, (s, e), _ = _unpack(p)
    d = cfg.delay_samples(w.sample_period)
    x = np.asarray(w.samples[s:e], dtype=float)
    delayed = np.zeros_like(x)
    delayed[d:] = x[:-d] if d < x.size else 0.0
    b = cfg.fraction * x - delayed
    k = int(np.argmax(b))
    if b[k] <= 0:
        raise NoZeroCrossing("bipolar signal never goes positive")
    after = np.nonzero(b[k + 1:] <= 0)[0]
    if after.size == 0:
        raise NoZeroCrossing("no zero crossing after the bipolar maximum")
    j = k + 1 + int(after[0])
    frac = b[j - 1] / (b[j - 1] - b[j])
    return (s + j - 1 + frac) * w.sample_period


def _peak_index(x: np.ndarray, s: int, e: int) -> int:
    return s + int(np.argmax(x[s:e]))


def _gate_sums(p, cfg: PsdConfig, cal):
    """Cumulative baseline-subtracted sums over the long gate, plus its energy."""
    w, (s, e), _ = _unpack(p)
    x = w.samples
    pk = _peak_index(x, s, e)
    g0 = max(pk - cfg.short_gate_start_offset, 0)
    g1 = min(g0 + cfg.long_gate, w.n)
    base = baseline(x, g0)
    cum = np.cumsum(x[g0:g1] - base)
    k = cal.kevee_per_adc_sample_area if isinstance(cal, EnergyCalibration) else float(cal)
    return cum, k * float(cum[-1]), pk - g0


def psd_ratio(p, cfg: PsdConfig, cal: EnergyCalibration | float = 1.0) -> float:
    """Short-gate over long-gate charge ``Q_S / Q_L``.

    Raises
    ------
    BelowThreshold
        If the long-gate energy is below ``cfg.threshold_kevee``.
    """
    cum, energy, rel_peak = _gate_sums(p, cfg, cal)
    if energy < cfg.threshold_kevee or cum[-1] <= 0:
        raise BelowThreshold(f"pulse energy {energy:.4g} keVee below {cfg.threshold_kevee:g}")
    stop = min(rel_peak + cfg.short_gate_stop, cum.size)
    return float(cum[stop - 1] / cum[-1])


def figure_of_merit(gamma_ratios, neutron_ratios) -> float:
    """``|mu_g - mu_n| / (FWHM_g + FWHM_n)`` with ``FWHM = 2 sqrt(2 ln 2) std``.

    Raises
    ------
    InsufficientStatistics
        If either population has fewer than 30 entries.
    """
    g = np.asarray(gamma_ratios, dtype=float)
    n = np.asarray(neutron_ratios, dtype=float)
    if g.size < MIN_POPULATION or n.size < MIN_POPULATION:
        raise InsufficientStatistics(
            f"need >= {MIN_POPULATION} entries per class, got {g.size} and {n.size}")
    width = FWHM_PER_SIGMA * (g.std(ddof=1) + n.std(ddof=1))
    return float(abs(g.mean() - n.mean()) / width) if width > 0 else math.inf


def optimize_short_gate(pulses, labels, template: PsdConfig,
                        cal: EnergyCalibration | float = 1.0):
    """Scan the short-gate stop over every admissible sample and keep the best FOM.

    Parameters
    ----------
    pulses : sequence of Waveform or RecoveredPulse
    labels : sequence of {"gamma", "neutron"}
    template : PsdConfig
        Supplies offset, long gate and threshold; its stop is ignored.

    Returns
    -------
    (PsdConfig, ndarray)
        Best configuration (shortest gate on ties) and the scan curve as rows
        of ``(stop, fom)``.
    """
    labels = list(labels)
    if len(labels) != len(pulses):
        raise ValueError("pulses and labels differ in length")
    stops = np.arange(1, template.max_stop + 1)
    rows = {"gamma": [], "neutron": []}
    for p, lab in zip(pulses, labels):
        if lab not in rows:
            raise ValueError(f"unknown label {lab!r}")
        cum, energy, rel_peak = _gate_sums(p, template, cal)
        if energy < template.threshold_kevee or cum[-1] <= 0 or cum.size < template.long_gate:
            continue
        idx = np.minimum(rel_peak + stops, cum.size) - 1
        rows[lab].append(cum[idx] / cum[-1])
    g, n = np.asarray(rows["gamma"]), np.asarray(rows["neutron"])
    if len(g) < MIN_POPULATION or len(n) < MIN_POPULATION:
        raise InsufficientStatistics(
            f"need >= {MIN_POPULATION} pulses above threshold per class, got {len(g)} and {len(n)}")
    width = FWHM_PER_SIGMA * (g.std(axis=0, ddof=1) + n.std(axis=0, ddof=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        fom = np.where(width > 0, np.abs(g.mean(axis=0) - n.mean(axis=0)) / width, 0.0)
    best = int(np.argmax(fom))
    cfg = replace(template, short_gate_stop=int(stops[best]))
    return cfg, np.column_stack([stops, fom])


def prob_multi_occupancy(rate_cps, window_s):
    """Poisson probability of two or more events in one window, ``1 - e^-l (1 + l)``."""
    lam = np.asarray(rate_cps, dtype=float) * window_s
    if np.any(lam < 0):
        raise ValueError("rate must be >= 0")
    out = -np.expm1(-lam) - lam * np.exp(-lam)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RmseTable:
    """Rows of ``(lo, hi, count, relative_rmse)``; ``dropped`` lists empty bin indices."""

    rows: tuple
    dropped: tuple
    edges: tuple

    def to_dict(self) -> dict:
        return {"columns": ["height_lo", "height_hi", "count", "relative_rmse"],
                "rows": [list(r) for r in self.rows], "dropped_bins": list(self.dropped)}


def relative_rmse(truth, recovered) -> float:
    """``RMS(truth - recovered) / max(truth)``."""
    t = np.asarray(truth, dtype=float)
    r = np.asarray(recovered, dtype=float)
    peak = t.max()
    if peak <= 0:
        raise ValueError("truth has no positive peak")
    return float(np.sqrt(np.mean((t - r) ** 2)) / peak)


def rmse_vs_height(pairs, n_bins: int = 10, edges=None) -> RmseTable:
    """Relative RMSE binned by the true pulse height.

    Each bin reports the root-mean-square of the per-pulse relative RMSE.
    Bins that receive no pulse are dropped and listed in ``dropped``.
    """
    pairs = list(pairs)
    if not pairs:
        raise InsufficientStatistics("no pulse pairs")
    heights = np.array([float(np.max(t)) for t, _ in pairs])
    rel = np.array([relative_rmse(t, r) for t, r in pairs])
    if edges is None:
        lo, hi = heights.min(), heights.max()
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, n_bins + 1)
    edges = np.asarray(edges, dtype=float)
    idx = np.clip(np.searchsorted(edges, heights, side="right") - 1, 0, edges.size - 2)
    rows, dropped = [], []
    for b in range(edges.size - 1):
        sel = idx == b
        if not sel.any():
            dropped.append(b)
            continue
        rows.append((float(edges[b]), float(edges[b + 1]), int(sel.sum()),
                     float(np.sqrt(np.mean(rel[sel] ** 2)))))
    return RmseTable(tuple(rows), tuple(dropped), tuple(float(e) for e in edges))
