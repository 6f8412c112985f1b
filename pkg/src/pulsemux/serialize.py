"""On-disk formats: record CSVs, truth side-channel JSON, reports.

All JSON is written with sorted keys and a trailing newline so repeated runs
with the same seed produce byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .frontend import DigitizerSpec, Record, TruthEntry
from .pulse_model import PulseSpec
from .signal_core import Waveform, read_waveform_csv, write_waveform_csv

RECORD_DIR = "records"
TRUTH_DIR = "truth"


def _clean(obj):
    """Make numpy scalars JSON-friendly and map non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def record_name(index: int) -> str:
    return f"record_{index:06d}"


def write_record(out_dir, rec: Record, config_hash: str = "") -> Path:
    """Write ``records/record_NNNNNN.csv`` and its truth JSON under ``out_dir``."""
    out_dir = Path(out_dir)
    name = record_name(rec.record_index)
    path = out_dir / RECORD_DIR / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "bank_hash": rec.bank_digest,
        "config_hash": config_hash,
        "digitizer": json.dumps(rec.digitizer.to_dict(), sort_keys=True),
        "flags": ",".join(sorted(rec.waveform.flags)),
        "record_index": rec.record_index,
        "saturated": str(rec.saturated).lower(),
        "seed": rec.seed,
    }
    write_waveform_csv(path, rec.waveform, header)
    write_json(out_dir / TRUTH_DIR / f"{name}.json", truth_to_dict(rec))
    return path


def read_record(path) -> tuple[Waveform, dict]:
    """Read a record CSV; returns the waveform (with its flags) and header metadata.

    Raises ``ValueError`` on malformed content.
    """
    w, meta = read_waveform_csv(path)
    flags = frozenset(f for f in meta.get("flags", "").split(",") if f)
    if flags:
        w = Waveform(w.samples, w.sample_period, w.units, flags)
    if "record_index" in meta:
        meta["record_index"] = int(meta["record_index"])
    if "digitizer" in meta:
        meta["digitizer"] = DigitizerSpec.from_dict(json.loads(meta["digitizer"]))
    return w, meta


def truth_to_dict(rec: Record) -> dict:
    """Truth side-channel; pulse samples carry the physical (signed) polarity."""
    entries = []
    for t in rec.truth:
        sign = -1.0 if (t.spec is None or t.spec.negative_polarity) else 1.0
        entries.append({
            "channel_id": t.channel_id,
            "pulse": t.spec.to_dict() if t.spec is not None else None,
            "polarity": "negative" if sign < 0 else "positive",
            "sample_period_s": t.waveform.sample_period,
            "samples_v": [sign * float(v) for v in t.waveform.samples],
        })
    return {"record_index": rec.record_index, "seed": rec.seed, "bank_hash": rec.bank_digest,
            "pulses": entries}


def read_truth(path) -> list[TruthEntry]:
    d = read_json(path)
    out = []
    for e in d["pulses"]:
        sign = -1.0 if e["polarity"] == "negative" else 1.0
        w = Waveform(sign * np.asarray(e["samples_v"], dtype=float), e["sample_period_s"], "volts")
        spec = PulseSpec.from_dict(e["pulse"]) if e["pulse"] is not None else None
        out.append(TruthEntry(int(e["channel_id"]), w, spec))
    return out


def list_records(directory) -> list[Path]:
    d = Path(directory)
    sub = d / RECORD_DIR
    base = sub if sub.is_dir() else d
    return sorted(base.glob("record_*.csv"))


def write_table_csv(path, columns, rows):
    """Plain CSV with a header line; floats written with ``repr`` precision."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    lines = [",".join(columns)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")
