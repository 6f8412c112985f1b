"""Fan-in summation, additive noise and the digitizer.

A :class:`Record` carries the digitized fan-in output together with the
exact pre-resonator inputs that produced it. Recovery code only ever sees
``Record.waveform``; the truth entries exist for oracle checks and for the
analysis stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, UnknownChannel
from .pulse_model import PulseSpec
from .resonator import FANIN_GAIN, ResonatorBank, impulse_response
from .signal_core import Waveform, convolve


@dataclass(frozen=True)
class DigitizerSpec:
    sample_rate: float = 5e8
    record_length: int = 2000
    full_scale: float = 0.5
    bits: int = 14
    trigger_offset: int = 100
    quantize: bool = True

    def __post_init__(self):
        if self.record_length <= 0:
            raise ValueError("record_length must be > 0")
        if not 8 <= self.bits <= 16:
            raise ValueError("bits must lie in [8, 16]")
        if not self.full_scale > 0:
            raise ValueError("full_scale must be > 0")

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def lsb(self) -> float:
        """Volts per ADC code."""
        return self.full_scale / 2 ** self.bits

    def to_dict(self) -> dict:
        return {"sample_rate": self.sample_rate, "record_length": self.record_length,
                "full_scale": self.full_scale, "bits": self.bits,
                "trigger_offset": self.trigger_offset, "quantize": self.quantize}

    @classmethod
    def from_dict(cls, d: dict) -> "DigitizerSpec":
        return cls(**d)


@dataclass(frozen=True)
class NoiseModel:
    additive_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.additive_sigma < 0:
            raise ValueError("additive_sigma must be >= 0")

    def rng(self, record_index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, record_index])


@dataclass(frozen=True)
class TruthEntry:
    channel_id: int
    waveform: Waveform
    spec: PulseSpec | None = None


@dataclass(frozen=True)
class Record:
    waveform: Waveform
    truth: tuple = field(default_factory=tuple)
    digitizer: DigitizerSpec = field(default_factory=DigitizerSpec)
    record_index: int = 0
    seed: int = 0
    bank_digest: str = ""

    @property
    def saturated(self) -> bool:
        return "saturated" in self.waveform.flags


def digitize(w: Waveform, spec: DigitizerSpec) -> Waveform:
    """Convert volts to signed ADC codes.

    Inputs are clamped to ``+-full_scale/2`` and rounded to the nearest code;
    an input of zero maps to code zero. With ``spec.quantize`` false the
    output is the exact (unrounded, unclamped) code value. Either way the
    ``"saturated"`` flag is set when any sample reaches the rails; quantised
    outputs also carry ``"quantized"``.
    """
    half = spec.full_scale / 2
    v = w.samples
    flags = set(w.flags)
    top = 2 ** (spec.bits - 1)
    if np.any(v >= half) or np.any(v < -half):
        flags.add("saturated")
    if spec.quantize:
        flags.add("quantized")
        # adding 0.0 turns rounded -0.0 into 0.0
        codes = np.clip(np.rint(np.clip(v, -half, half) / spec.lsb), -top, top - 1) + 0.0
    else:
        codes = v / spec.lsb
    return Waveform(codes, w.sample_period, "adc", frozenset(flags))


def fanin_output(assignments, bank: ResonatorBank) -> Waveform:
    """Noise-free analog fan-in output ``2 sum_c x_c * h_c`` in volts."""
    n = bank.record_length
    total = np.zeros(n)
    seen = set()
    for entry in assignments:
        cid, x = entry[0], entry[1]
        if cid not in bank.channel_ids:
            raise UnknownChannel(f"channel {cid} is not in the bank")
        if cid in seen:
            raise ValueError(f"channel {cid} assigned twice")
        seen.add(cid)
        if x.n != n or not np.isclose(x.sample_period, bank.sample_period, rtol=1e-12, atol=0):
            raise GridMismatch(f"input for channel {cid} is not on the bank grid")
        h = impulse_response(bank.channel(cid), bank.sample_period, n)
        total += convolve(x, h).samples
    return Waveform(FANIN_GAIN * total, bank.sample_period, "volts")


def simulate_record(assignments, bank: ResonatorBank, digitizer: DigitizerSpec,
                    noise: NoiseModel, record_index: int = 0) -> Record:
    """Simulate one digitized record.

    Parameters
    ----------
    assignments : iterable
        ``(channel_id, waveform)`` or ``(channel_id, waveform, pulse_spec)``
        tuples; each channel may appear once.
    record_index : int
        Selects this record's independent noise stream.
    """
    assignments = list(assignments)
    if digitizer.record_length != bank.record_length or not np.isclose(
            digitizer.sample_period, bank.sample_period, rtol=1e-12, atol=0):
        raise GridMismatch("digitizer and bank grids differ")
    analog = fanin_output(assignments, bank)
    if noise.additive_sigma > 0:
        rng = noise.rng(record_index)
        analog = analog.with_samples(
            analog.samples + rng.normal(0.0, noise.additive_sigma, analog.n))
    truth = tuple(TruthEntry(a[0], a[1], a[2] if len(a) > 2 else None) for a in assignments)
    return Record(digitize(analog, digitizer), truth, digitizer, record_index, noise.seed,
                  bank.digest())
