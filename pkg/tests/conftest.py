import numpy as np
import pytest

from pulsemux.frontend import DigitizerSpec, NoiseModel, simulate_record
from pulsemux.pulse_model import DelayLineSpec, PulseSpec, apply_delay_line, copy_signal, synth_pulse
from pulsemux.resonator import ResonatorBank

T = 2e-9
N = 2000


@pytest.fixture(scope="session")
def bank():
    return ResonatorBank.default(2)


def exact_digitizer():
    return DigitizerSpec(quantize=False)


def pair_record(bank, separation=220e-9, amplitude=0.03, attenuation=0.35, bandwidth=80e6,
                arrival=200.3 * T, cls="gamma", sigma=0.0, quantize=False, index=0, seed=1,
                channels=(1, 2)):
    """Copier + delay-line record with both truth inputs returned in ADC units."""
    dig = DigitizerSpec(quantize=quantize)
    x = synth_pulse(PulseSpec.for_class(cls, amplitude=amplitude, arrival_time=arrival), T, N)
    c1, c2 = copy_signal(x)
    x2 = apply_delay_line(c2, DelayLineSpec(separation, attenuation, bandwidth))
    rec = simulate_record([(channels[0], c1), (channels[1], x2)], bank, dig,
                          NoiseModel(sigma, seed), index)
    return rec, c1.samples / dig.lsb, x2.samples / dig.lsb


def single_record(bank, amplitude=0.03, arrival=150.0 * T, channel=1, sigma=0.0,
                  quantize=False, cls="gamma", index=0):
    dig = DigitizerSpec(quantize=quantize)
    x = synth_pulse(PulseSpec.for_class(cls, amplitude=amplitude, arrival_time=arrival), T, N)
    c1, _ = copy_signal(x)
    rec = simulate_record([(channel, c1)], bank, dig, NoiseModel(sigma, 3), index)
    return rec, c1.samples / dig.lsb


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
