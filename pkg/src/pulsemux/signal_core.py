"""Discrete-time and discrete-frequency primitives.

Everything here works on the full two-sided DFT of a record. Records are
short (a few thousand samples) so there is no attempt to exploit the
half-spectrum symmetry of real signals; conjugate symmetry is checked
instead of assumed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft

from .errors import AsymmetricSpectrum, CutoffOutOfRange, SamplePeriodMismatch

UNITS = ("volts", "adc")

# relative tolerance used by ifft for the imaginary residue check
SYMMETRY_RTOL = 1e-9


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real signal.

    Parameters
    ----------
    samples : array_like
        Real amplitudes. Stored as a read-only float64 array.
    sample_period : float
        Seconds between samples.
    units : {"volts", "adc"}
        Amplitude units tag.
    flags : frozenset of str
        Free-form metadata flags (``"saturated"`` is set by the digitizer).
    """

    samples: np.ndarray
    sample_period: float
    units: str = "volts"
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        s = _frozen(self.samples, np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("waveform needs a 1-d sample array with at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        if self.units not in UNITS:
            raise ValueError(f"units must be one of {UNITS}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_period", float(self.sample_period))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self):
        return self.samples.size

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.sample_period

    def with_samples(self, samples, units=None) -> "Waveform":
        return Waveform(samples, self.sample_period, units or self.units, self.flags)

    def scaled(self, factor: float) -> "Waveform":
        return self.with_samples(self.samples * factor)

    def __add__(self, other: "Waveform") -> "Waveform":
        _check_period(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "Waveform") -> "Waveform":
        _check_period(self, other)
        return self.with_samples(self.samples - other.samples)

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.sample_period == other.sample_period and self.units == other.units
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Full two-sided DFT of a waveform.

    ``mask`` marks bins whose value is unreliable (set by impulse-response
    estimation); ``None`` means every bin is trusted.
    """

    bins: np.ndarray
    bin_spacing: float
    origin_length: int
    mask: np.ndarray | None = None

    def __post_init__(self):
        b = _frozen(self.bins, np.complex128)
        if b.ndim != 1 or b.size != int(self.origin_length):
            raise ValueError("spectrum must hold exactly origin_length bins")
        object.__setattr__(self, "bins", b)
        object.__setattr__(self, "origin_length", int(self.origin_length))
        object.__setattr__(self, "bin_spacing", float(self.bin_spacing))
        if self.mask is not None:
            m = _frozen(self.mask, bool)
            if m.shape != b.shape:
                raise ValueError("mask must match bins")
            object.__setattr__(self, "mask", m)

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.origin_length * self.bin_spacing)

    @property
    def frequencies(self) -> np.ndarray:
        """Signed bin frequencies in hertz (numpy ``fftfreq`` ordering)."""
        return sp_fft.fftfreq(self.origin_length, self.sample_period)

    def bin_of(self, freq_hz: float) -> int:
        """Index of the non-negative-frequency bin nearest ``freq_hz``."""
        return int(round(freq_hz / self.bin_spacing))

    def reliable(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.origin_length, dtype=bool)
        return ~self.mask


def _check_period(a: Waveform, b: Waveform):
    if not np.isclose(a.sample_period, b.sample_period, rtol=1e-12, atol=0):
        raise SamplePeriodMismatch(
            f"sample periods differ: {a.sample_period!r} vs {b.sample_period!r}")


def fft(w: Waveform) -> Spectrum:
    """Forward DFT, ``bins[k] = sum_n w[n] exp(-2j pi k n / N)``."""
    return Spectrum(sp_fft.fft(w.samples), 1.0 / (w.n * w.sample_period), w.n)


def ifft(s: Spectrum, units: str = "volts") -> Waveform:
    """Inverse DFT returning a real waveform.

    Raises
    ------
    AsymmetricSpectrum
        If the imaginary part of the inverse exceeds ``SYMMETRY_RTOL`` of the
        real part's peak, i.e. the spectrum is not conjugate-symmetric.
    """
    z = sp_fft.ifft(s.bins)
    scale = max(np.max(np.abs(z.real)), np.finfo(float).tiny)
    resid = np.max(np.abs(z.imag))
    if resid > SYMMETRY_RTOL * scale and resid > 1e-300:
        raise AsymmetricSpectrum(f"imaginary residue {resid:.3g} vs peak {scale:.3g}")
    return Waveform(z.real, s.sample_period, units)


def convolve(x: Waveform, h: Waveform) -> Waveform:
    """Linear convolution of ``x`` with ``h`` truncated to ``len(x)`` samples."""
    _check_period(x, h)
    n = x.n
    nfft = sp_fft.next_fast_len(x.n + h.n - 1, real=True)
    y = sp_fft.irfft(sp_fft.rfft(x.samples, nfft) * sp_fft.rfft(h.samples, nfft), nfft)
    return x.with_samples(y[:n])


def cross_correlate(y: Waveform, x: Waveform) -> Waveform:
    """Circular cross-correlation ``r_yx(m) = sum_n y(n) x(n-m mod N) / N``.

    The DFT of the result is the cross-spectrum ``Y(k) conj(X(k)) / N``.
    """
    _check_period(y, x)
    if y.n != x.n:
        raise ValueError("cross_correlate needs equal-length inputs")
    r = sp_fft.ifft(sp_fft.fft(y.samples) * np.conj(sp_fft.fft(x.samples))).real / y.n
    return y.with_samples(r)


def butterworth_gain(freq_hz, cutoff_hz: float, order: int) -> np.ndarray:
    """Butterworth magnitude response ``(1 + (f/fc)^(2 order))^(-1/2)``."""
    f = np.abs(np.asarray(freq_hz, dtype=float))
    return 1.0 / np.sqrt(1.0 + (f / cutoff_hz) ** (2 * order))


def butterworth_lowpass(w: Waveform, cutoff_hz: float, order: int = 4) -> Waveform:
    """Zero-phase Butterworth low-pass applied as a magnitude mask on the DFT.

    No phase shift is introduced, so timing marks taken on the output line
    up with those on the input.
    """
    nyquist = 0.5 / w.sample_period
    if not 0 < cutoff_hz < nyquist:
        raise CutoffOutOfRange(f"cutoff {cutoff_hz!r} Hz outside (0, {nyquist!r})")
    if order < 1:
        raise ValueError("order must be >= 1")
    freqs = sp_fft.fftfreq(w.n, w.sample_period)
    out = sp_fft.ifft(sp_fft.fft(w.samples) * butterworth_gain(freqs, cutoff_hz, order)).real
    return w.with_samples(out)


# -- CSV interchange ---------------------------------------------------------

def write_waveform_csv(path, w: Waveform, extra_header: dict | None = None):
    """Write ``# sample_period_s=..., units=...`` followed by one sample per line.

    ``extra_header`` entries go on their own ``# key=value`` lines.
    """
    lines = [f"# sample_period_s={w.sample_period!r}, units={w.units}"]
    for key, value in (extra_header or {}).items():
        lines.append(f"# {key}={value}")
    lines.extend(repr(float(v)) for v in w.samples)
    Path(path).write_text("\n".join(lines) + "\n")


def parse_waveform_csv(text: str) -> tuple[Waveform, dict]:
    """Parse waveform CSV text; returns the waveform and any extra header entries."""
    period = None
    units = "volts"
    extra = {}
    values = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sample_period_s="):
                for part in body.split(","):
                    key, _, val = part.strip().partition("=")
                    if key == "sample_period_s":
                        period = float(val)
                    elif key == "units":
                        units = val.strip()
            else:
                key, _, val = body.partition("=")
                extra[key.strip()] = val.strip()
            continue
        try:
            values.append(float(line.split(",")[0]))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: not a number: {line!r}") from exc
    if period is None:
        raise ValueError("missing '# sample_period_s=' header")
    return Waveform(np.array(values), period, units), extra


def read_waveform_csv(path) -> tuple[Waveform, dict]:
    return parse_waveform_csv(Path(path).read_text())


def write_spectrum_csv(path, s: Spectrum):
    lines = ["k, re, im"]
    lines.extend(f"{k}, {float(v.real)!r}, {float(v.imag)!r}" for k, v in enumerate(s.bins))
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum_csv(path, sample_period: float, mask=None) -> Spectrum:
    rows = []
    for raw in Path(path).read_text().splitlines()[1:]:
        if raw.strip():
            k, re_, im = (float(v) for v in raw.split(","))
            rows.append(complex(re_, im))
    n = len(rows)
    return Spectrum(np.array(rows), 1.0 / (n * sample_period), n, mask)
