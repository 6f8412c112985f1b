"""Run configuration, validation, presets and scenario generation.

A run is described by one JSON document. Validation collects every problem
with its field path before failing, so a bad config is reported in one go.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import CfdConfig, EnergyCalibration, PsdConfig
from .errors import ConfigError
from .frontend import DigitizerSpec, NoiseModel, Record, simulate_record
from .pulse_model import (DEFAULT_SLOW_FRACTION, DelayLineSpec, PulseSpec, copy_signal,
                          apply_delay_line, synth_pulse)
from .resonator import ResonatorBank, validate_bank

SCENARIO_KINDS = ("double", "single", "pileup")

_BASE = {
    "seed": 1,
    "records": 200,
    "bank": ResonatorBank.default(2).to_dict(),
    "digitizer": DigitizerSpec().to_dict(),
    "noise": {"additive_sigma_v": 3.6e-7},
    "scenario": {
        "kind": "double",
        "first_channel": 1,
        "second_channel": 2,
        "arrival_sample": 100,
        "amplitude_v": {"low": 0.015, "high": 0.09},
        "neutron_fraction": 0.5,
        "pulse": {"rise_tau_s": 5e-9, "fall_tau_fast_s": 20e-9, "fall_tau_slow_s": 48e-9,
                  "slow_fraction": dict(DEFAULT_SLOW_FRACTION),
                  "slow_fraction_sd": {"gamma": 0.01, "neutron": 0.02}},
        "delay_line": {"delay_s": 220e-9, "attenuation_fraction": 0.35, "bandwidth_hz": 80e6},
    },
    "analysis": {
        "calibration": {"kevee_per_adc_sample_area": 1.0, "kevee_per_adc_amplitude": 1.0},
        "cfd": [{"fraction": 0.2, "delay_s": 6.4e-9}, {"fraction": 0.3, "delay_s": 6.8e-9}],
        "psd": [{"short_gate_start_offset": 6, "short_gate_stop": 20, "long_gate": 107,
                 "threshold_kevee": 20.0},
                {"short_gate_start_offset": 8, "short_gate_stop": 20, "long_gate": 177,
                 "threshold_kevee": 20.0}],
        "rmse_bins": 10,
    },
    "sysid": {"records": 200, "level_vpp": 1.0, "bandwidth_hz": None, "output_sigma_v": 1e-3},
    "sweep": {"kind": "detectability", "values": [round(0.05 * i, 2) for i in range(21)]},
}


def _preset(**changes):
    cfg = copy.deepcopy(_BASE)
    for path, value in changes.items():
        node = cfg
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return cfg


PRESETS = {
    "double-220ns": _preset(),
    "double-30ns": _preset(scenario__delay_line={"delay_s": 30e-9, "attenuation_fraction": 0.35,
                                                 "bandwidth_hz": 80e6},
                           sweep={"kind": "separation",
                                  "values": [30e-9, 60e-9, 90e-9, 120e-9, 150e-9, 180e-9,
                                             220e-9]}),
    # low-noise unquantised regime where recovered timing and charge spreads
    # are limited by additive noise rather than ADC rounding
    "double-220ns-calibrated": _preset(scenario__amplitude_v={"low": 0.0015, "high": 0.009},
                                       noise__additive_sigma_v=3.6e-7,
                                       digitizer__quantize=False),
    "single": _preset(scenario__kind="single"),
    "pileup-curve": _preset(scenario__kind="pileup",
                            scenario__pileup={"rates_cps": [1e3, 2e3, 5e3, 1e4, 1.2e4, 2e4,
                                                            5e4, 1e5, 2e5, 5e5],
                                              "window_s": 4e-6, "trials": 100000}),
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}", [("preset", f"choose from {sorted(PRESETS)}")])
    return copy.deepcopy(PRESETS[name])


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins, lists are replaced whole."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Scenario:
    kind: str = "double"
    first_channel: int = 1
    second_channel: int = 2
    arrival_sample: float = 100.0
    amplitude_low: float = 0.015
    amplitude_high: float = 0.09
    neutron_fraction: float = 0.5
    pulse: dict = field(default_factory=dict)
    delay_line: DelayLineSpec = field(default_factory=DelayLineSpec)
    pileup: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    bank: ResonatorBank
    digitizer: DigitizerSpec
    noise: NoiseModel
    scenario: Scenario
    cfd: tuple
    psd: tuple
    calibration: EnergyCalibration
    amplitude_calibration: float
    rmse_bins: int
    sysid: dict
    sweep: dict
    seed: int
    records: int
    raw: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def _num(errors, path, value, lo=None, hi=None, integer=False, lo_open=False):
    ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok_type:
        errors.append((path, "must be an integer" if integer else "must be a number"))
        return False
    if lo is not None and (value <= lo if lo_open else value < lo):
        errors.append((path, f"must be {'>' if lo_open else '>='} {lo}"))
        return False
    if hi is not None and value > hi:
        errors.append((path, f"must be <= {hi}"))
        return False
    return True


def _require(errors, node, path, keys):
    if not isinstance(node, dict):
        errors.append((path, "must be an object"))
        return False
    missing = [k for k in keys if k not in node]
    for k in missing:
        errors.append((f"{path}.{k}", "missing"))
    return not missing


def validate(raw: dict) -> RunConfig:
    """Check a raw config dict and build a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With a ``(field_path, message)`` list covering every problem found.
    """
    errs: list = []
    if not _require(errs, raw, "$", ["seed", "records", "bank", "digitizer", "noise",
                                      "scenario", "analysis"]):
        raise ConfigError("invalid config", errs)
    _num(errs, "seed", raw["seed"], 0, integer=True)
    _num(errs, "records", raw["records"], 1, integer=True)

    bank = digitizer = None
    b = raw["bank"]
    if _require(errs, b, "bank", ["sample_period_s", "record_length", "channels"]):
        if not isinstance(b["channels"], list) or not b["channels"]:
            errs.append(("bank.channels", "must be a non-empty list"))
        else:
            for i, c in enumerate(b["channels"]):
                p = f"bank.channels[{i}]"
                if _require(errs, c, p, ["id", "f0_hz"]):
                    _num(errs, f"{p}.id", c["id"], integer=True)
                    _num(errs, f"{p}.f0_hz", c["f0_hz"], 0, lo_open=True)
                    for k in ("q", "gain", "envelope_tau_s"):
                        if k in c:
                            _num(errs, f"{p}.{k}", c[k], 0, lo_open=True)
            if not errs:
                bank = ResonatorBank.from_dict(b)
                for v in validate_bank(bank):
                    errs.append(("bank", v))
    d = raw["digitizer"]
    if _require(errs, d, "digitizer", []):
        try:
            digitizer = DigitizerSpec.from_dict(d)
        except (TypeError, ValueError) as exc:
            errs.append(("digitizer", str(exc)))
    if bank is not None and digitizer is not None:
        if digitizer.record_length != bank.record_length:
            errs.append(("digitizer.record_length", "differs from bank.record_length"))
        if not np.isclose(digitizer.sample_period, bank.sample_period, rtol=1e-12, atol=0):
            errs.append(("digitizer.sample_rate", "inconsistent with bank.sample_period_s"))
        for c in bank.channels:
            if c.f0 >= 0.5 * digitizer.sample_rate:
                errs.append((f"bank.channels[id={c.channel_id}].f0_hz", "at or above Nyquist"))

    n = raw["noise"]
    if _require(errs, n, "noise", ["additive_sigma_v"]):
        _num(errs, "noise.additive_sigma_v", n["additive_sigma_v"], 0)

    scen = None
    s = raw["scenario"]
    if _require(errs, s, "scenario", ["kind"]):
        if s["kind"] not in SCENARIO_KINDS:
            errs.append(("scenario.kind", f"must be one of {list(SCENARIO_KINDS)}"))
        ids = set(bank.channel_ids) if bank is not None else None
        for key in ("first_channel", "second_channel"):
            if key in s and ids is not None and s[key] not in ids:
                errs.append((f"scenario.{key}", f"channel {s[key]} is not in the bank"))
        if s.get("kind") == "double" and s.get("first_channel", 1) == s.get("second_channel", 2):
            errs.append(("scenario.second_channel", "must differ from first_channel"))
        amp = s.get("amplitude_v", {"low": 0.015, "high": 0.09})
        if _require(errs, amp, "scenario.amplitude_v", ["low", "high"]):
            if _num(errs, "scenario.amplitude_v.low", amp["low"], 0) and \
                    _num(errs, "scenario.amplitude_v.high", amp["high"], 0) and amp["high"] < amp["low"]:
                errs.append(("scenario.amplitude_v", "high must be >= low"))
        _num(errs, "scenario.neutron_fraction", s.get("neutron_fraction", 0.5), 0, 1)
        _num(errs, "scenario.arrival_sample", s.get("arrival_sample", 100), 0)
        dl = s.get("delay_line", {})
        dl_spec = None
        if _require(errs, dl, "scenario.delay_line", []):
            try:
                dl_spec = DelayLineSpec(dl.get("delay_s", 220e-9), dl.get("attenuation_fraction", 0.35),
                                        dl.get("bandwidth_hz", 80e6))
            except (TypeError, ValueError) as exc:
                errs.append(("scenario.delay_line", str(exc)))
        pulse = s.get("pulse", _BASE["scenario"]["pulse"])
        try:
            for cls in ("gamma", "neutron"):
                _pulse_spec(pulse, cls, 0.01, 0.0)
        except (TypeError, ValueError, KeyError) as exc:
            errs.append(("scenario.pulse", str(exc)))
        pile = s.get("pileup", {})
        if s.get("kind") == "pileup":
            if _require(errs, pile, "scenario.pileup", ["rates_cps", "window_s", "trials"]):
                if not isinstance(pile["rates_cps"], list) or not pile["rates_cps"]:
                    errs.append(("scenario.pileup.rates_cps", "must be a non-empty list"))
                else:
                    for i, r in enumerate(pile["rates_cps"]):
                        _num(errs, f"scenario.pileup.rates_cps[{i}]", r, 0)
                _num(errs, "scenario.pileup.window_s", pile["window_s"], 0, lo_open=True)
                _num(errs, "scenario.pileup.trials", pile["trials"], 1, integer=True)
        if not errs:
            scen = Scenario(s["kind"], s.get("first_channel", 1), s.get("second_channel", 2),
                            float(s.get("arrival_sample", 100)), float(amp["low"]), float(amp["high"]),
                            float(s.get("neutron_fraction", 0.5)), pulse, dl_spec, pile)

    a = raw["analysis"]
    cfd, psd, cal, cal_amp = (), (), None, 1.0
    if _require(errs, a, "analysis", ["cfd", "psd", "calibration"]):
        try:
            cfd = tuple(CfdConfig(c["fraction"], c["delay_s"]) for c in a["cfd"])
            if digitizer is not None:
                for c in cfd:
                    c.delay_samples(digitizer.sample_period)
        except (TypeError, ValueError, KeyError) as exc:
            errs.append(("analysis.cfd", str(exc)))
        try:
            psd = tuple(PsdConfig(**p) for p in a["psd"])
        except (TypeError, ValueError) as exc:
            errs.append(("analysis.psd", str(exc)))
        try:
            cal = EnergyCalibration(a["calibration"]["kevee_per_adc_sample_area"])
            cal_amp = float(a["calibration"].get("kevee_per_adc_amplitude", 1.0))
        except (TypeError, ValueError, KeyError) as exc:
            errs.append(("analysis.calibration", str(exc)))
        if len(cfd) < 2 or len(psd) < 2:
            if not any(p[0] in ("analysis.cfd", "analysis.psd") for p in errs):
                errs.append(("analysis", "cfd and psd need one entry per pulse position (2)"))
        _num(errs, "analysis.rmse_bins", a.get("rmse_bins", 10), 1, integer=True)
    sysid = raw.get("sysid", _BASE["sysid"])
    if _require(errs, sysid, "sysid", ["records", "level_vpp"]):
        _num(errs, "sysid.records", sysid["records"], 1, integer=True)
        _num(errs, "sysid.level_vpp", sysid["level_vpp"], 0)
    sweep = raw.get("sweep", _BASE["sweep"])
    if _require(errs, sweep, "sweep", ["kind", "values"]):
        if sweep["kind"] not in ("detectability", "separation"):
            errs.append(("sweep.kind", "must be 'detectability' or 'separation'"))
        if not isinstance(sweep["values"], list):
            errs.append(("sweep.values", "must be a list"))
    if errs:
        raise ConfigError("invalid config", errs)
    return RunConfig(bank, digitizer, NoiseModel(float(n["additive_sigma_v"]), int(raw["seed"])),
                     scen, cfd, psd, cal, cal_amp, int(a.get("rmse_bins", 10)), sysid, sweep,
                     int(raw["seed"]), int(raw["records"]), raw)


def load(path: str | Path | None = None, preset_name: str | None = None,
         overrides: dict | None = None) -> RunConfig:
    """Build a config from an optional preset, an optional JSON file and overrides."""
    raw = preset(preset_name) if preset_name else copy.deepcopy(_BASE)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}", [("$", str(exc))]) from exc
        if not isinstance(user, dict):
            raise ConfigError("invalid config", [("$", "must be a JSON object")])
        raw = merge(raw, user)
    if overrides:
        raw = merge(raw, overrides)
    return validate(raw)


# -- scenario generation -----------------------------------------------------

def _pulse_spec(pulse: dict, cls: str, amplitude: float, arrival: float,
                slow_fraction: float | None = None) -> PulseSpec:
    sf = pulse["slow_fraction"][cls] if slow_fraction is None else slow_fraction
    return PulseSpec(amplitude=amplitude, rise_tau=pulse["rise_tau_s"],
                     fall_tau_fast=pulse["fall_tau_fast_s"], fall_tau_slow=pulse["fall_tau_slow_s"],
                     slow_fraction=sf, arrival_time=arrival, particle_class=cls)


def record_rng(seed: int, record_index: int) -> np.random.Generator:
    """Scenario stream of one record; independent of the noise stream."""
    return np.random.default_rng([seed, record_index, 1])


def draw_pulse(cfg: RunConfig, record_index: int) -> PulseSpec:
    """Random class, amplitude, tail fraction and sub-sample arrival for one record."""
    sc = cfg.scenario
    rng = record_rng(cfg.seed, record_index)
    cls = "neutron" if rng.random() < sc.neutron_fraction else "gamma"
    amp = rng.uniform(sc.amplitude_low, sc.amplitude_high)
    sd = sc.pulse.get("slow_fraction_sd", {}).get(cls, 0.0)
    sf = float(np.clip(sc.pulse["slow_fraction"][cls] + sd * rng.standard_normal(), 0.0, 1.0))
    t0 = (sc.arrival_sample + rng.random()) * cfg.digitizer.sample_period
    return _pulse_spec(sc.pulse, cls, amp, t0, sf)


def make_record(cfg: RunConfig, record_index: int, spec: PulseSpec | None = None) -> Record:
    """Simulate one record of the configured scenario.

    The detector pulse goes through the signal copier; one copy drives the
    first channel and, for the double scenario, the other passes the delay
    line into the second channel.
    """
    sc = cfg.scenario
    if spec is None:
        spec = draw_pulse(cfg, record_index)
    dig = cfg.digitizer
    x = synth_pulse(spec, dig.sample_period, dig.record_length)
    c1, c2 = copy_signal(x)
    s1 = replace(spec, amplitude=2.0 * spec.amplitude)
    assignments = [(sc.first_channel, c1, s1)]
    if sc.kind == "double":
        x2 = apply_delay_line(c2, sc.delay_line)
        shift = round(sc.delay_line.delay / dig.sample_period) * dig.sample_period
        s2 = replace(s1, amplitude=s1.amplitude * (1 - sc.delay_line.attenuation_fraction),
                     arrival_time=spec.arrival_time + shift)
        assignments.append((sc.second_channel, x2, s2))
    return simulate_record(assignments, cfg.bank, dig, cfg.noise, record_index)
