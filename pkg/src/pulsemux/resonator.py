"""Behavioural model of the resonator channels.

Each channel is a parallel RLC stage whose impulse response is a damped
sinusoid. The circuit is represented only through its resonant frequency,
quality factor, gain and envelope decay constant.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AliasedResonance, DecayExceedsRecord, QTooLow
from .signal_core import Spectrum, Waveform, fft

MIN_Q = 10.0
MIN_SPACING_HZ = 2e6
MAX_DECAY_S = 1.5e-6
# "decay time" is the envelope falling to 0.2 % of its start: factor 500
DECAY_FACTOR = 500.0
FANIN_GAIN = 2.0

DEFAULT_ENVELOPE_TAU = 240e-9
DEFAULT_Q = 12.0
DEFAULT_GAIN = 0.03


@dataclass(frozen=True)
class ResonatorSpec:
    channel_id: int
    f0: float
    q_factor: float = DEFAULT_Q
    gain: float = DEFAULT_GAIN
    envelope_tau: float = DEFAULT_ENVELOPE_TAU

    @property
    def damped_frequency(self) -> float:
        return self.f0 * math.sqrt(1.0 - 1.0 / (4.0 * self.q_factor ** 2))

    @property
    def decay_time(self) -> float:
        """Time for the envelope to fall to 1/500 of its initial value."""
        return self.envelope_tau * math.log(DECAY_FACTOR)

    @property
    def bandwidth(self) -> float:
        """Full -3 dB width of the resonance peak, ``1 / (pi tau)``."""
        return 1.0 / (math.pi * self.envelope_tau)

    def to_dict(self) -> dict:
        return {"id": self.channel_id, "f0_hz": self.f0, "q": self.q_factor,
                "gain": self.gain, "envelope_tau_s": self.envelope_tau}

    @classmethod
    def from_dict(cls, d: dict) -> "ResonatorSpec":
        return cls(int(d["id"]), float(d["f0_hz"]), float(d.get("q", DEFAULT_Q)),
                   float(d.get("gain", DEFAULT_GAIN)),
                   float(d.get("envelope_tau_s", DEFAULT_ENVELOPE_TAU)))


@dataclass(frozen=True)
class ResonatorBank:
    channels: tuple = field(default_factory=tuple)
    sample_period: float = 2e-9
    record_length: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def default(cls, n_channels: int = 2, **kw) -> "ResonatorBank":
        """Channels at 7, 9, 11, ... MHz with the default resonator parameters."""
        chans = [ResonatorSpec(i + 1, 7e6 + 2e6 * i) for i in range(n_channels)]
        return cls(tuple(chans), **kw)

    def channel(self, channel_id: int) -> ResonatorSpec:
        for c in self.channels:
            if c.channel_id == channel_id:
                return c
        raise KeyError(channel_id)

    @property
    def channel_ids(self) -> list[int]:
        return [c.channel_id for c in self.channels]

    def responses(self, fanin_gain: float = FANIN_GAIN) -> dict[int, Spectrum]:
        """Per-channel transfer functions as seen at the fan-in output."""
        out = {}
        for c in self.channels:
            h = transfer_function(c, self.sample_period, self.record_length)
            out[c.channel_id] = Spectrum(h.bins * fanin_gain, h.bin_spacing, h.origin_length)
        return out

    def to_dict(self) -> dict:
        return {"sample_period_s": self.sample_period, "record_length": self.record_length,
                "channels": [c.to_dict() for c in self.channels]}

    @classmethod
    def from_dict(cls, d: dict) -> "ResonatorBank":
        return cls(tuple(ResonatorSpec.from_dict(c) for c in d["channels"]),
                   float(d["sample_period_s"]), int(d["record_length"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def design_resonator(channel_id: int, f0: float, decay_time_target: float, gain: float,
                     record_duration: float = 4e-6) -> ResonatorSpec:
    """Derive envelope constant and Q from a decay-time target.

    ``envelope_tau = decay / ln(500)`` and ``Q = pi f0 envelope_tau``.

    Raises
    ------
    DecayExceedsRecord
        If the requested decay is longer than the record.
    QTooLow
        If the implied Q does not exceed 10.
    """
    if decay_time_target > record_duration:
        raise DecayExceedsRecord(
            f"decay {decay_time_target:.3g} s exceeds record {record_duration:.3g} s")
    tau = decay_time_target / math.log(DECAY_FACTOR)
    q = math.pi * f0 * tau
    if f0 < 7e6 or q <= MIN_Q:
        raise QTooLow(f"Q = {q:.3g} for f0 = {f0:.3g} Hz, decay {decay_time_target:.3g} s")
    return ResonatorSpec(channel_id, f0, q, gain, tau)


def impulse_response(spec: ResonatorSpec, sample_period: float, n: int) -> Waveform:
    """``h[k] = gain exp(-k T / tau) sin(2 pi f_d k T)``, with ``h[0] = 0``."""
    if spec.f0 >= 0.5 / sample_period:
        raise AliasedResonance(f"f0 = {spec.f0:.4g} Hz is at or above Nyquist")
    t = np.arange(n) * sample_period
    env = np.exp(-t / spec.envelope_tau) if math.isfinite(spec.envelope_tau) else np.ones(n)
    return Waveform(spec.gain * env * np.sin(2 * math.pi * spec.damped_frequency * t),
                    sample_period)


@lru_cache(maxsize=256)
def transfer_function(spec: ResonatorSpec, sample_period: float, n: int) -> Spectrum:
    """DFT of :func:`impulse_response`; cached per (spec, grid)."""
    return fft(impulse_response(spec, sample_period, n))


def validate_bank(bank: ResonatorBank) -> list[str]:
    """Return design-rule violations; an empty list means the bank is compliant."""
    problems = []
    ids = bank.channel_ids
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    for i in dupes:
        problems.append(f"channel {i}: duplicate channel id")
    for c in bank.channels:
        if c.q_factor <= MIN_Q:
            problems.append(f"channel {c.channel_id}: Q rule violated (q = {c.q_factor:g} <= {MIN_Q:g})")
        if c.decay_time > MAX_DECAY_S * (1 + 1e-12):
            problems.append(
                f"channel {c.channel_id}: decay rule violated "
                f"(envelope reaches 0.2 % after {c.decay_time * 1e6:.3g} us > 1.5 us)")
        if c.f0 >= 0.5 / bank.sample_period:
            problems.append(f"channel {c.channel_id}: f0 at or above Nyquist")
    chans = bank.channels
    for a in range(len(chans)):
        for b in range(a + 1, len(chans)):
            if abs(chans[a].f0 - chans[b].f0) < MIN_SPACING_HZ * (1 - 1e-12):
                problems.append(
                    f"channels {chans[a].channel_id} and {chans[b].channel_id}: spacing rule "
                    f"violated (|df| = {abs(chans[a].f0 - chans[b].f0) / 1e6:.3g} MHz < 2 MHz)")
    return problems
