"""Impulse-response estimation from noise excitation.

The transfer function of a channel is the ratio of the averaged
input-output cross-spectrum to the averaged input auto-spectrum, both
obtained as DFTs of circular correlation functions over whole records.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateExcitation, EmptyInput
from .signal_core import Spectrum, Waveform, convolve, cross_correlate, fft

MASK_EPS = 1e-6


def estimate_impulse_response(inputs, outputs, eps: float = MASK_EPS,
                              band: tuple[float, float] | None = None) -> Spectrum:
    """Average ``S_yx / S_xx`` over paired records.

    Parameters
    ----------
    inputs, outputs : sequence of Waveform
        Excitation records and the matching channel outputs.
    eps : float
        Bins where the averaged auto-spectrum falls below ``eps`` times its
        maximum are masked and set to zero.
    band : (lo, hi), optional
        Frequency band (Hz) that must contain at least one unmasked bin.

    Raises
    ------
    EmptyInput
        No pairs, or lists of different length.
    DegenerateExcitation
        Every bin (or every bin of ``band``) is masked.
    """
    inputs, outputs = list(inputs), list(outputs)
    if not inputs or len(inputs) != len(outputs):
        raise EmptyInput("need a non-empty, paired list of input/output records")
    n = inputs[0].n
    s_yx = np.zeros(n, dtype=complex)
    s_xx = np.zeros(n)
    for x, y in zip(inputs, outputs):
        if x.n != n or y.n != n:
            raise ValueError("all records must share one length")
        s_yx += fft(cross_correlate(y, x)).bins
        s_xx += fft(cross_correlate(x, x)).bins.real
    s_yx /= len(inputs)
    s_xx /= len(inputs)
    peak = s_xx.max()
    mask = s_xx < eps * peak if peak > 0 else np.ones(n, dtype=bool)
    h = np.zeros(n, dtype=complex)
    good = ~mask
    h[good] = s_yx[good] / s_xx[good]
    spec = Spectrum(h, 1.0 / (n * inputs[0].sample_period), n, mask)
    if mask.all():
        raise DegenerateExcitation("excitation has no usable power")
    if band is not None:
        f = np.abs(spec.frequencies)
        sel = (f >= band[0]) & (f <= band[1])
        if not np.any(sel & good):
            raise DegenerateExcitation(f"excitation has no power in {band} Hz")
    return spec


def band_limited_noise(level_vpp: float, bandwidth_hz: float | None, sample_period: float,
                       n: int, seed: int = 0) -> Waveform:
    """Gaussian noise with ``std = level_vpp / 6`` (peak-to-peak read as 6 sigma).

    With ``bandwidth_hz`` set, content above that frequency is removed with a
    brick-wall mask before rescaling to the target standard deviation;
    ``None`` gives white noise.
    """
    nyquist = 0.5 / sample_period
    if bandwidth_hz is not None and not 0 < bandwidth_hz <= nyquist:
        raise ValueError("bandwidth must lie in (0, Nyquist]")
    if level_vpp == 0:
        return Waveform(np.zeros(n), sample_period)
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    if bandwidth_hz is not None and bandwidth_hz < nyquist:
        spec = np.fft.fft(x)
        spec[np.abs(np.fft.fftfreq(n, sample_period)) > bandwidth_hz] = 0.0
        x = np.fft.ifft(spec).real
    sigma = level_vpp / 6.0
    x = x * (sigma / x.std())
    return Waveform(x, sample_period)


def excite(h: Waveform, n_records: int, level_vpp: float = 1.0,
           bandwidth_hz: float | None = None, periodic: bool = True,
           output_sigma: float = 0.0, gain: float = 1.0, seed: int = 0):
    """Drive a channel with noise and return ``(inputs, outputs)`` record pairs.

    ``periodic=True`` repeats each excitation record once and keeps the
    second repetition of the output, i.e. the steady-state response to a
    record-periodic noise source. ``periodic=False`` records a burst starting
    from rest, which biases the estimate by roughly ``tau / (N T)`` near
    resonance because of the output transient.
    """
    n = h.n
    inputs, outputs = [], []
    rng = np.random.default_rng([seed, 1])
    for i in range(n_records):
        x = band_limited_noise(level_vpp, bandwidth_hz, h.sample_period, n, seed=(seed, i))
        if periodic:
            doubled = Waveform(np.tile(x.samples, 2), h.sample_period)
            y = convolve(doubled, h).samples[n:]
        else:
            y = convolve(x, h).samples
        y = gain * y
        if output_sigma > 0:
            y = y + rng.normal(0.0, output_sigma, n)
        inputs.append(x)
        outputs.append(Waveform(y, h.sample_period))
    return inputs, outputs
