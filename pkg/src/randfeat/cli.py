"""Experiment harness command line.

Usage: randfeat --config experiment.json [--seed N] [--workers N] [--out DIR]

The config is a single JSON object with an "experiment" tag plus overrides of
that experiment's defaults.  Results are written as results.json (summary
metrics), one CSV per table, and manifest.json recording the resolved
configuration, library version, and a timestamp.  Re-running with the same
config and seed reproduces results.json and the CSVs byte-identically.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .dynamics import BlowUpError
from .eki import ForwardMapError
from .experiments import ConfigError, run_experiment, resolve_config
from .rfr import FactorizationError

__all__ = ["main", "emit_results", "load_config"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    return config


def emit_results(metrics: dict, out_dir) -> list:
    """Write results.json plus one CSV per table; returns the written paths.

    ``metrics`` holds a JSON-able "summary" and optionally "tables", each
    table being {"columns": [...], "rows": [...]} with a frozen column order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    results_path = out / "results.json"
    with open(results_path, "w") as fh:
        json.dump(metrics.get("summary", {}), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(results_path)
    for name, table in sorted(metrics.get("tables", {}).items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(table["columns"])
            writer.writerows(table["rows"])
        written.append(path)
    return written


def _write_manifest(out_dir, config, status) -> None:
    manifest = {
        "config": config,
        "version": __version__,
        "status": status,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="randfeat", description=__doc__)
    parser.add_argument("--config", required=True, help="experiment JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="concurrent forward-map evaluations "
                             "(default: RF_TUNE_WORKERS or 1)")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.workers is not None:
            config["workers"] = args.workers
        elif "workers" not in config:
            config["workers"] = int(os.environ.get("RF_TUNE_WORKERS", "1"))
        resolved = resolve_config(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out) if args.out else Path(f"results_{resolved['experiment']}")
    try:
        summary, tables = run_experiment(resolved)
    except (FactorizationError, ForwardMapError, BlowUpError, FloatingPointError) as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "error.json", "w") as fh:
            json.dump({"error": type(exc).__name__, "message": str(exc)}, fh, indent=2)
        _write_manifest(out_dir, resolved, "numerical-failure")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    emit_results({"summary": summary, "tables": tables}, out_dir)
    _write_manifest(out_dir, resolved, "ok")
    print(f"wrote results to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
