"""Command-line entry point: ``pulsemux <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import PRESETS, load
from .errors import ConfigError, PulsemuxError

# re-exported so the commands can be driven from Python as well
from .pipeline import cmd_analyze, cmd_recover, cmd_simulate, cmd_sweep, cmd_sysid  # noqa: F401

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _common(p: argparse.ArgumentParser, need_out: bool = True):
    p.add_argument("--config", help="JSON config file merged over the preset")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--records", type=int, help="override the number of records")
    p.add_argument("--out", required=need_out, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulsemux",
                                 description="Resonator-multiplexed pulse simulation and recovery")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("simulate", help="simulate digitized records with truth"))

    p = sub.add_parser("sysid", help="estimate channel transfer functions")
    _common(p)
    p.add_argument("--inputs", help="directory of excitation waveform CSVs")
    p.add_argument("--outputs", help="directory of matching response waveform CSVs")

    p = sub.add_parser("recover", help="recover pulses from records (never reads truth)")
    _common(p)
    p.add_argument("--input", required=True, help="directory holding records/")
    p.add_argument("--responses", help="directory of measured responses from sysid")

    p = sub.add_parser("analyze", help="compare recovered pulses with the truth side-channel")
    _common(p)
    p.add_argument("--recovery", required=True, help="directory written by recover")
    p.add_argument("--input", required=True, help="directory written by simulate (truth)")

    _common(sub.add_parser("sweep", help="detectability or separation sweep"))
    return ap


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.records is not None:
        overrides["records"] = args.records
    return load(args.config, args.preset, overrides)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "simulate":
            summary = pipeline.cmd_simulate(cfg, args.out)
        elif args.command == "sysid":
            summary = pipeline.cmd_sysid(cfg, args.out, args.inputs, args.outputs)
        elif args.command == "recover":
            summary = pipeline.cmd_recover(cfg, args.input, args.out, args.responses)
        elif args.command == "analyze":
            summary = pipeline.cmd_analyze(cfg, args.recovery, args.input, args.out)
        else:
            summary = pipeline.cmd_sweep(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for path, msg in exc.violations:
            print(f"  {path}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (PulsemuxError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
