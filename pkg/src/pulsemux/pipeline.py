"""Batch commands behind the command-line interface.

Each ``cmd_*`` function reads and writes plain files under an output
directory and returns a small summary dict. Recovery never opens the truth
side-channel; only :func:`cmd_analyze` takes a truth directory.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as an
from . import serialize as io
from .config import RunConfig, draw_pulse, make_record
from .deconv import (RecoveredPulse, detectability_slope, detectability_threshold,
                     recover, recover_overlapping, ChannelHit, _delta_mixture)
from .errors import ConfigError, PulsemuxError
from .frontend import DigitizerSpec, NoiseModel, simulate_record
from .pulse_model import PulseSpec, apply_delay_line, copy_signal, sample_event_counts, synth_pulse
from .resonator import FANIN_GAIN, impulse_response
from .signal_core import Waveform, read_spectrum_csv, read_waveform_csv, write_spectrum_csv
from .sysid import estimate_impulse_response, excite

log = logging.getLogger(__name__)


def n_threads() -> int:
    env = os.environ.get("PULSEMUX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer PULSEMUX_THREADS=%r", env)
    return max(1, min(4, os.cpu_count() or 1))


def _map(fn, items):
    """Ordered parallel map capped by ``PULSEMUX_THREADS``."""
    items = list(items)
    workers = n_threads()
    if workers == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config_hash": cfg.hash, "seed": cfg.seed, "config": cfg.raw,
            **extra}


# -- simulate ----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out_dir) -> dict:
    """Write records plus truth, or the event-count table for the pileup scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "bank.json", cfg.bank.to_dict())
    if cfg.scenario.kind == "pileup":
        p = cfg.scenario.pileup
        rows = []
        for i, rate in enumerate(p["rates_cps"]):
            counts = sample_event_counts(rate, p["window_s"], int(p["trials"]), cfg.seed * 1000 + i)
            rows.append((float(rate), float(np.mean(counts >= 2)), int(p["trials"])))
        io.write_table_csv(out / "pileup_mc.csv", ["rate_cps", "fraction_multi", "trials"], rows)
        summary = {"records": 0, "pileup_rates": len(rows)}
    else:
        def one(i):
            rec = make_record(cfg, i)
            io.write_record(out, rec, cfg.hash)
            return rec.saturated
        saturated = _map(one, range(cfg.records))
        summary = {"records": cfg.records, "saturated_records": int(sum(saturated))}
    io.write_json(out / "manifest.json", _manifest(cfg, "simulate", **summary))
    return summary


# -- sysid -------------------------------------------------------------------

def _spectrum_meta(spec, n_avg: int, excitation: dict) -> dict:
    peak = int(np.argmax(np.abs(spec.bins[1: spec.origin_length // 2 + 1]))) + 1
    return {"averages": n_avg, "excitation": excitation,
            "masked_bins": [int(k) for k in np.nonzero(spec.mask)[0]] if spec.mask is not None else [],
            "bin_spacing_hz": spec.bin_spacing, "origin_length": spec.origin_length,
            "peak_frequency_hz": peak * spec.bin_spacing}


def cmd_sysid(cfg: RunConfig, out_dir, inputs_dir=None, outputs_dir=None) -> dict:
    """Estimate transfer functions.

    With ``inputs_dir`` and ``outputs_dir`` the paired waveform CSVs (matched by
    sorted file name) are used for one estimate. Otherwise each bank channel is
    driven with simulated noise as seen at the fan-in output.
    """
    out = Path(out_dir) / "responses"
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.sysid
    written = []
    if inputs_dir is not None or outputs_dir is not None:
        if inputs_dir is None or outputs_dir is None:
            raise ConfigError("sysid needs both --inputs and --outputs",
                              [("inputs/outputs", "give both directories or neither")])
        ins = sorted(Path(inputs_dir).glob("*.csv"))
        outs = sorted(Path(outputs_dir).glob("*.csv"))
        if not ins or len(ins) != len(outs):
            raise ConfigError("unpaired sysid records",
                              [("inputs/outputs", f"{len(ins)} inputs vs {len(outs)} outputs")])
        xs = [read_waveform_csv(p)[0] for p in ins]
        ys = [read_waveform_csv(p)[0] for p in outs]
        spec = estimate_impulse_response(xs, ys)
        write_spectrum_csv(out / "estimated.csv", spec)
        io.write_json(out / "estimated.json", _spectrum_meta(spec, len(xs), {"source": "files"}))
        written.append("estimated")
    else:
        bank = cfg.bank
        for idx, c in enumerate(bank.channels):
            h = impulse_response(c, bank.sample_period, bank.record_length)
            xs, ys = excite(h, int(s["records"]), float(s["level_vpp"]), s.get("bandwidth_hz"),
                            periodic=True, output_sigma=float(s.get("output_sigma_v", 0.0)),
                            gain=FANIN_GAIN, seed=cfg.seed * 7919 + idx)
            spec = estimate_impulse_response(xs, ys)
            write_spectrum_csv(out / f"channel_{c.channel_id}.csv", spec)
            io.write_json(out / f"channel_{c.channel_id}.json",
                          _spectrum_meta(spec, len(xs), {"kind": "noise", "level_vpp": s["level_vpp"],
                                                         "bandwidth_hz": s.get("bandwidth_hz"),
                                                         "periodic": True}))
            written.append(f"channel_{c.channel_id}")
    summary = {"responses": written}
    io.write_json(Path(out_dir) / "sysid_manifest.json", _manifest(cfg, "sysid", **summary))
    return summary


def load_responses(directory, cfg: RunConfig) -> dict:
    """Read ``channel_<id>.csv`` (and mask metadata) for every bank channel."""
    d = Path(directory)
    if (d / "responses").is_dir():
        d = d / "responses"
    resp = {}
    for c in cfg.bank.channels:
        path = d / f"channel_{c.channel_id}.csv"
        if not path.exists():
            raise ConfigError("missing response file", [(str(path), "not found")])
        mask = None
        meta_path = path.with_suffix(".json")
        if meta_path.exists():
            meta = io.read_json(meta_path)
            mask = np.zeros(cfg.bank.record_length, dtype=bool)
            mask[meta.get("masked_bins", [])] = True
        resp[c.channel_id] = read_spectrum_csv(path, cfg.bank.sample_period, mask)
    return resp


# -- recover -----------------------------------------------------------------

def _recover_one(path: Path, cfg: RunConfig, resp: dict) -> dict:
    name = path.stem
    try:
        w, meta = io.read_record(path)
        if w.n != cfg.bank.record_length:
            raise ValueError(f"record has {w.n} samples, expected {cfg.bank.record_length}")
        hits, pulses = recover(w, cfg.bank, resp)
    except (PulsemuxError, ValueError, OSError) as exc:
        return {"record": name, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    return {"record": name, "ok": True, "record_index": meta.get("record_index"),
            "saturated": meta.get("saturated") == "true",
            "hits": [h.to_dict() for h in hits], "pulses": [p.to_dict() for p in pulses]}


def cmd_recover(cfg: RunConfig, records_dir, out_dir, responses_dir=None) -> dict:
    """Recover every record under ``records_dir``; failures become error entries."""
    paths = io.list_records(records_dir)
    if not paths:
        raise PulsemuxError(f"no record files under {records_dir}")
    resp = load_responses(responses_dir, cfg) if responses_dir else cfg.bank.responses()
    reports = _map(lambda p: _recover_one(p, cfg, resp), paths)
    out = Path(out_dir) / "recovery"
    out.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        io.write_json(out / f"{rep['record']}.json", rep)
    failed = [r["record"] for r in reports if not r["ok"]]
    summary = {"records": len(reports), "failed": failed,
               "partial_pulses": sum(p["partial"] for r in reports if r["ok"] for p in r["pulses"])}
    io.write_json(Path(out_dir) / "recovery_manifest.json", _manifest(cfg, "recover", **summary))
    return summary


# -- analyze -----------------------------------------------------------------

def _gate(x: np.ndarray, offset: int, length: int, limit: int):
    pk = int(np.argmax(x))
    g0 = max(pk - offset, 0)
    return g0, min(g0 + length, limit)


def _pulse_estimates(k: int, rec_p: RecoveredPulse, truth_w: Waveform, cfg: RunConfig) -> dict:
    cfd, psd, cal = cfg.cfd[k], cfg.psd[k], cfg.calibration
    est = {"channel_id": rec_p.channel_id, "partial": rec_p.partial, "quality": rec_p.quality}
    lim = rec_p.valid_window[1]
    if rec_p.partial:
        est["charge_truth"] = an.amplitude_energy(truth_w, cfg.amplitude_calibration)
        est["charge_recovered"] = an.amplitude_energy(rec_p, cfg.amplitude_calibration)
        est["charge_estimator"] = "amplitude"
    else:
        tg = _gate(truth_w.samples, psd.short_gate_start_offset, psd.long_gate, truth_w.n)
        s, e = rec_p.valid_window
        rg = _gate(rec_p.waveform.samples[:e], psd.short_gate_start_offset, psd.long_gate, lim)
        est["charge_truth"] = an.integrate_charge(truth_w, tg, cal)
        est["charge_recovered"] = an.integrate_charge(rec_p, rg, cal)
        est["charge_estimator"] = "integral"
    for key, p in (("time_truth", truth_w), ("time_recovered", rec_p)):
        try:
            est[key] = an.cfd_time(p, cfd)
        except PulsemuxError:
            est[key] = None
    for key, p in (("psd_truth", truth_w), ("psd_recovered", rec_p)):
        try:
            est[key] = an.psd_ratio(p, psd, cal)
        except PulsemuxError:
            est[key] = None
    tg = _gate(truth_w.samples, psd.short_gate_start_offset, psd.long_gate, lim)
    if rec_p.partial:
        tg = (max(tg[0], rec_p.valid_window[0]), min(tg[1], rec_p.valid_window[1]))
    est["rmse_window"] = list(tg)
    est["relative_rmse"] = an.relative_rmse(truth_w.samples[tg[0]:tg[1]],
                                            rec_p.waveform.samples[tg[0]:tg[1]])
    return est


def _stats(values) -> dict:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size < 2:
        return {"n": int(v.size), "mean": None, "std": None}
    return {"n": int(v.size), "mean": float(v.mean()), "std": float(v.std(ddof=1))}


def _hist(values, bins=40):
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return []
    counts, edges = np.histogram(v, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def _fom_pair(ests, pulses_truth, pulses_rec, labels, psd, cal):
    try:
        cfg_o, scan_o = an.optimize_short_gate(pulses_truth, labels, psd, cal)
        cfg_r, scan_r = an.optimize_short_gate(pulses_rec, labels, psd, cal)
    except PulsemuxError as exc:
        return {"fom_original": None, "fom_recovered": None, "note": str(exc)}, []
    best_o = float(scan_o[:, 1].max())
    best_r = float(scan_r[:, 1].max())
    scan = [(int(a), float(b), float(c)) for a, b, c in zip(scan_o[:, 0], scan_o[:, 1], scan_r[:, 1])]
    return {"fom_original": best_o, "fom_recovered": best_r,
            "short_gate_stop_original": cfg_o.short_gate_stop,
            "short_gate_stop_recovered": cfg_r.short_gate_stop}, scan


def pileup_table(cfg: RunConfig, sim_dir=None) -> list:
    p = cfg.scenario.pileup or {"rates_cps": [1e3, 2e3, 5e3, 1e4, 1.2e4, 2e4, 5e4, 1e5],
                                "window_s": 4e-6}
    mc = {}
    if sim_dir is not None and (Path(sim_dir) / "pileup_mc.csv").exists():
        for line in (Path(sim_dir) / "pileup_mc.csv").read_text().splitlines()[1:]:
            r, f, _ = line.split(",")
            mc[float(r)] = float(f)
    return [(float(r), an.prob_multi_occupancy(r, p["window_s"]), mc.get(float(r)))
            for r in p["rates_cps"]]


def cmd_analyze(cfg: RunConfig, recovery_dir, truth_dir, out_dir) -> dict:
    """Join recovery reports with truth and write the analysis report and figure tables."""
    out = Path(out_dir)
    rec_dir = Path(recovery_dir)
    if (rec_dir / "recovery").is_dir():
        rec_dir = rec_dir / "recovery"
    t_dir = Path(truth_dir)
    if (t_dir / io.TRUTH_DIR).is_dir():
        t_dir = t_dir / io.TRUTH_DIR
    reports = sorted(rec_dir.glob("record_*.json"))
    pileup = pileup_table(cfg, truth_dir)
    if not reports and cfg.scenario.kind != "pileup":
        raise PulsemuxError(f"no recovery reports in {rec_dir}")
    lsb = cfg.digitizer.lsb
    n, dt = cfg.bank.record_length, cfg.bank.sample_period
    per_record, errors = [], []
    positions = {0: [], 1: []}
    for path in reports:
        rep = io.read_json(path)
        if not rep["ok"]:
            errors.append({"record": rep["record"], "error": rep["error"]})
            continue
        truth = {t.channel_id: t for t in io.read_truth(t_dir / f"{rep['record']}.json")}
        entry = {"record": rep["record"], "pulses": []}
        for k, pd in enumerate(rep["pulses"][:2]):
            rp = RecoveredPulse.from_dict(pd, n, dt)
            if rp.channel_id not in truth:
                entry["pulses"].append({"channel_id": rp.channel_id, "error": "no truth pulse on channel"})
                continue
            t = truth[rp.channel_id]
            tw = Waveform(t.waveform.samples / lsb, dt, "adc")
            try:
                est = _pulse_estimates(k, rp, tw, cfg)
            except PulsemuxError as exc:
                entry["pulses"].append({"channel_id": rp.channel_id, "error": str(exc)})
                continue
            est["particle_class"] = t.spec.particle_class if t.spec is not None else None
            entry["pulses"].append(est)
            positions[k].append((rep["record"], est, tw, rp))
        per_record.append(entry)

    population = {}
    for k, rows in positions.items():
        if not rows:
            continue
        label = "first" if k == 0 else "second"
        dq = [e["charge_recovered"] - e["charge_truth"] for _, e, _, _ in rows]
        dtm = [None if e["time_truth"] is None or e["time_recovered"] is None
               else e["time_recovered"] - e["time_truth"] for _, e, _, _ in rows]
        labels = [e["particle_class"] for _, e, _, _ in rows]
        fom, scan = {"fom_original": None, "fom_recovered": None}, []
        if all(l in ("gamma", "neutron") for l in labels) and len(set(labels)) == 2:
            fom, scan = _fom_pair(rows, [tw for _, _, tw, _ in rows], [rp for _, _, _, rp in rows],
                                  labels, cfg.psd[k], cfg.calibration)
        try:
            table = an.rmse_vs_height(
                [(tw.samples[e["rmse_window"][0]:e["rmse_window"][1]],
                  rp.waveform.samples[e["rmse_window"][0]:e["rmse_window"][1]])
                 for _, e, tw, rp in rows], cfg.rmse_bins)
            rmse = table.to_dict()
        except PulsemuxError:
            rmse = None
        population[label] = {"pulses": len(rows), "charge_error": _stats(dq),
                             "time_error_s": _stats(dtm),
                             "partial": int(sum(e["partial"] for _, e, _, _ in rows)),
                             "rmse_vs_height": rmse, **fom}
        io.write_table_csv(out / "figures" / f"charge_{label}.csv",
                           ["record", "truth", "recovered", "error"],
                           [(r, e["charge_truth"], e["charge_recovered"], d)
                            for (r, e, _, _), d in zip(rows, dq)])
        io.write_table_csv(out / "figures" / f"charge_error_hist_{label}.csv",
                           ["lo", "hi", "count"], _hist(dq))
        io.write_table_csv(out / "figures" / f"timing_{label}.csv",
                           ["record", "truth_s", "recovered_s", "error_s"],
                           [(r, e["time_truth"], e["time_recovered"], d)
                            for (r, e, _, _), d in zip(rows, dtm)])
        io.write_table_csv(out / "figures" / f"timing_error_hist_{label}.csv",
                           ["lo", "hi", "count"], _hist(dtm))
        io.write_table_csv(out / "figures" / f"psd_{label}.csv",
                           ["record", "class", "energy_truth", "ratio_truth", "energy_recovered",
                            "ratio_recovered"],
                           [(r, e["particle_class"], e["charge_truth"], e["psd_truth"],
                             e["charge_recovered"], e["psd_recovered"]) for r, e, _, _ in rows])
        if scan:
            io.write_table_csv(out / "figures" / f"fom_scan_{label}.csv",
                               ["short_gate_stop", "fom_original", "fom_recovered"], scan)
        if rmse:
            io.write_table_csv(out / "figures" / f"rmse_vs_height_{label}.csv",
                               rmse["columns"], rmse["rows"])
    io.write_table_csv(out / "figures" / "pileup_probability.csv",
                       ["rate_cps", "p_formula", "p_monte_carlo"],
                       [(r, p, "" if m is None else m) for r, p, m in pileup])
    report = {"config_hash": cfg.hash, "seed": cfg.seed, "records": len(reports),
              "errors": errors, "population": population, "per_record": per_record,
              "pileup": [{"rate_cps": r, "p_formula": p, "p_monte_carlo": m} for r, p, m in pileup]}
    io.write_json(out / "analysis.json", report)
    return {"records": len(reports), "errors": len(errors),
            "population": {k: {kk: v[kk] for kk in ("pulses", "fom_original", "fom_recovered")}
                           for k, v in population.items()}}


# -- sweep -------------------------------------------------------------------

def _separation_row(cfg: RunConfig, sep: float) -> tuple:
    sc = cfg.scenario
    dig = cfg.digitizer
    amp = 0.5 * (sc.amplitude_low + sc.amplitude_high)
    spec = PulseSpec.for_class("gamma", amplitude=amp,
                               arrival_time=sc.arrival_sample * dig.sample_period)
    x = synth_pulse(spec, dig.sample_period, dig.record_length)
    c1, c2 = copy_signal(x)
    dl = type(sc.delay_line)(sep, sc.delay_line.attenuation_fraction, sc.delay_line.bandwidth_hz)
    x2 = apply_delay_line(c2, dl)
    quiet = DigitizerSpec(**{**dig.to_dict(), "quantize": False})
    rec = simulate_record([(sc.first_channel, c1), (sc.second_channel, x2)], cfg.bank, quiet,
                          NoiseModel(0.0, cfg.seed))
    hits = [ChannelHit(sc.first_channel, 0, 0.0, 0.0), ChannelHit(sc.second_channel, 0, 0.0, 0.0)]
    p1, p2 = recover_overlapping(rec.waveform, cfg.bank, hits)
    t2 = x2.samples / dig.lsb
    s, e = p2.valid_window
    err = p2.waveform.samples[s:e] - t2[s:e]
    return (sep, float(np.sum(err ** 2) / np.sum(t2 ** 2)), int(p1.valid_window[1]), bool(p1.partial))


def cmd_sweep(cfg: RunConfig, out_dir) -> dict:
    """Detectability slope versus second-pulse fraction, or error-term energy versus separation."""
    sw = cfg.sweep
    values = [float(v) for v in sw["values"]]
    if not values:
        raise ConfigError("empty sweep", [("sweep.values", "must contain at least one value")])
    out = Path(out_dir)
    first, second = cfg.scenario.first_channel, cfg.scenario.second_channel
    if sw["kind"] == "detectability":
        resp = cfg.bank.responses()
        f2 = cfg.bank.channel(second).f0
        rows = [(x, detectability_slope(_delta_mixture(resp, first, second, x), f2)) for x in values]
        cols = ["x", "slope"]
        extra = {"threshold": detectability_threshold(cfg.bank, (first, second))}
    else:
        rows = _map(lambda s: _separation_row(cfg, s), values)
        cols = ["separation_s", "relative_error_energy", "first_window_end", "first_partial"]
        extra = {}
    io.write_table_csv(out / "sweep.csv", cols, rows)
    summary = {"kind": sw["kind"], "columns": cols, "rows": [list(r) for r in rows], **extra}
    io.write_json(out / "sweep.json", {**_manifest(cfg, "sweep"), **summary})
    return summary
