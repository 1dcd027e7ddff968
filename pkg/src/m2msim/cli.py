"""Command-line entry point: run, sweep, validate, presets.

Exit codes: 0 success, 2 configuration/validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .batch import load_manifest, run_batch
from .config import (
    ConfigError,
    SimConfig,
    config_to_dict,
    load_config,
    preset_config,
    preset_names,
)
from .engine import run_simulation
from .output import write_metrics, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2m-sim",
        description="Seeded simulator for sliced machine-type random access",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a single config")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--preset", choices=preset_names(), help="built-in scenario")
    run_p.add_argument("--seed", type=int, help="override the config's seed")
    run_p.add_argument("--out", help="metrics output path (default stdout as CSV)")
    run_p.add_argument("--trace", help="optional per-slot JSONL trace path")
    run_p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    run_p.add_argument(
        "--dump-resolved", help="write the resolved config as JSON to this path"
    )

    sweep_p = sub.add_parser("sweep", help="execute a batch manifest")
    sweep_p.add_argument("--manifest", required=True, help="JSON manifest file")

    val_p = sub.add_parser("validate", help="check a config and echo it resolved")
    vsrc = val_p.add_mutually_exclusive_group(required=True)
    vsrc.add_argument("--config", help="JSON config file")
    vsrc.add_argument("--preset", choices=preset_names())

    pre_p = sub.add_parser("presets", help="list or dump the built-in scenarios")
    pre_p.add_argument("--name", help="dump this preset's resolved config as JSON")
    return parser


def _resolve(args) -> SimConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = preset_config(args.preset)
    if getattr(args, "seed", None) is not None:
        cfg = SimConfig(**{**config_to_dict(cfg), "seed": args.seed})
    return cfg


def _cmd_run(args) -> int:
    cfg = _resolve(args)
    if args.dump_resolved:
        with open(args.dump_resolved, "w") as fh:
            json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")
    result = run_simulation(cfg, collect_trace=args.trace is not None)
    if args.out:
        write_metrics(result.records, args.out, fmt=args.format)
    else:
        import tempfile

        with tempfile.NamedTemporaryFile("r+", suffix=".csv") as tmp:
            write_metrics(result.records, tmp.name, fmt=args.format)
            tmp.seek(0)
            sys.stdout.write(tmp.read())
    if args.trace:
        write_trace(result.trace, args.trace)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    status, written = run_batch(manifest)
    for path in written:
        print(path)
    return status


def _cmd_validate(args) -> int:
    cfg = _resolve(args)
    json.dump(config_to_dict(cfg), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.name:
        cfg = preset_config(args.name)
        json.dump(config_to_dict(cfg), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        for name in preset_names():
            print(name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage already; normalise other codes
        return EXIT_CONFIG if exc.code not in (0,) else 0
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "validate": _cmd_validate,
        "presets": _cmd_presets,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
