"""Batch execution of independent seeded runs with per-run and aggregate output."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, SimConfig, config_from_dict, config_hash, preset_config
from .engine import run_simulation
from .output import write_metrics

AGGREGATE_COLUMNS = (
    "run_id",
    "scheme",
    "scenario",
    "sweep_param",
    "sweep_value",
    "seed",
    "status",
    "mean_reward_top",
    "mean_reward_all",
)


@dataclass(frozen=True)
class RunSpec:
    """One run of a batch: its config plus the sweep coordinates it represents."""

    config: SimConfig
    sweep_param: str = ""
    sweep_value: str = ""

    @property
    def seed(self) -> int:
        return self.config.seed


@dataclass
class RunManifest:
    """A set of independent runs and where their outputs go."""

    runs: list[RunSpec] = field(default_factory=list)
    out_dir: str = "."
    fmt: str = "csv"
    aggregate_name: str = "aggregate.csv"
    write_per_run: bool = True

    def __post_init__(self):
        seen = set()
        for spec in self.runs:
            key = (config_hash(spec.config), spec.config.seed)
            if key in seen:
                raise ConfigError(f"duplicate (config, seed) pair in manifest: {key}")
            seen.add(key)


def load_manifest(path) -> RunManifest:
    """Parse a JSON manifest.

    Shape: ``{"out_dir": ..., "format": ..., "runs": [entry, ...]}`` where each
    entry holds either ``"preset"`` (plus optional ``"overrides"``) or
    ``"config"`` (a full field mapping), and optionally ``"seeds"`` (list),
    ``"sweep_param"`` and ``"sweep_value"``.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: manifest must be a JSON object")
    known = {"out_dir", "format", "aggregate_name", "runs"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
    runs = []
    for i, entry in enumerate(data.get("runs", [])):
        if not isinstance(entry, dict):
            raise ConfigError(f"runs[{i}] must be an object")
        extra = set(entry) - {"preset", "overrides", "config", "seeds", "sweep_param", "sweep_value"}
        if extra:
            raise ConfigError(f"runs[{i}]: unknown keys {sorted(extra)}")
        seeds = entry.get("seeds", [None])
        for seed in seeds:
            overrides = dict(entry.get("overrides", {}))
            if seed is not None:
                overrides["seed"] = int(seed)
            if "preset" in entry:
                cfg = preset_config(entry["preset"], **overrides)
            elif "config" in entry:
                merged = dict(entry["config"])
                merged.update(overrides)
                cfg = config_from_dict(merged)
            else:
                raise ConfigError(f"runs[{i}] needs either 'preset' or 'config'")
            runs.append(
                RunSpec(
                    config=cfg,
                    sweep_param=str(entry.get("sweep_param", "")),
                    sweep_value=str(entry.get("sweep_value", "")),
                )
            )
    return RunManifest(
        runs=runs,
        out_dir=data.get("out_dir", "."),
        fmt=data.get("format", "csv"),
        aggregate_name=data.get("aggregate_name", "aggregate.csv"),
    )


def aggregate_row(run_id: int, spec: RunSpec, records, status: str) -> dict:
    if records:
        top = [r.mean_reward for r in records if r.slice_id == 1]
        everyone = [r.mean_reward for r in records]
        mean_top = float(np.mean(top)) if top else float("nan")
        mean_all = float(np.mean(everyone))
    else:
        mean_top = float("nan")
        mean_all = float("nan")
    return {
        "run_id": run_id,
        "scheme": spec.config.scheme,
        "scenario": spec.config.scenario,
        "sweep_param": spec.sweep_param,
        "sweep_value": spec.sweep_value,
        "seed": spec.seed,
        "status": status,
        "mean_reward_top": mean_top,
        "mean_reward_all": mean_all,
    }


def run_batch(manifest: RunManifest) -> tuple[int, list[str]]:
    """Execute every run; per-run failures are recorded and the batch continues.

    Returns (exit status, written file paths).  Status is 0 when every run
    succeeded, 3 when any run raised; metric values never affect it.  An empty
    manifest succeeds without writing anything.
    """
    if not manifest.runs:
        return 0, []
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    agg_rows = []
    any_failed = False
    for run_id, spec in enumerate(manifest.runs):
        try:
            result = run_simulation(spec.config)
        except Exception as exc:  # recorded, batch continues
            any_failed = True
            agg_rows.append(aggregate_row(run_id, spec, (), f"error: {exc}"))
            continue
        if manifest.write_per_run:
            ext = "csv" if manifest.fmt == "csv" else "jsonl"
            path = out_dir / f"run{run_id:04d}_seed{spec.seed}.{ext}"
            write_metrics(result.records, path, fmt=manifest.fmt)
            written.append(str(path))
        agg_rows.append(aggregate_row(run_id, spec, result.records, "ok"))
    agg_path = out_dir / manifest.aggregate_name
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for row in agg_rows:
            writer.writerow(
                [
                    f"{row[c]:.12g}" if isinstance(row[c], float) else row[c]
                    for c in AGGREGATE_COLUMNS
                ]
            )
    written.append(str(agg_path))
    return (3 if any_failed else 0), written
