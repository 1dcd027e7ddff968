"""Metrics and trace emission: stable CSV columns and JSONL."""

from __future__ import annotations

import csv
import json

from .engine import MetricsRecord

METRICS_COLUMNS = (
    "period",
    "slice_id",
    "C_l",
    "Q_l",
    "xi_l",
    "xi_target",
    "e_l",
    "R_l",
    "delta_R_real",
    "delta_R_applied",
    "mean_reward",
)

_INT_COLUMNS = {"period", "slice_id", "R_l", "delta_R_applied"}


def _record_row(rec: MetricsRecord) -> dict:
    return {
        "period": rec.period,
        "slice_id": rec.slice_id,
        "C_l": rec.c_l,
        "Q_l": rec.q_l,
        "xi_l": rec.xi_l,
        "xi_target": rec.xi_target,
        "e_l": rec.e_l,
        "R_l": rec.r_l,
        "delta_R_real": rec.delta_r_real,
        "delta_R_applied": rec.delta_r_applied,
        "mean_reward": rec.mean_reward,
    }


def _format_value(column: str, value) -> str:
    if column in _INT_COLUMNS:
        return str(int(value))
    return f"{float(value):.12g}"


def write_metrics(records, path, fmt: str = "csv"):
    """Write period records with the stable column set.

    ``fmt`` is ``csv`` (header plus one row per record, floats at 12
    significant digits) or ``jsonl`` (one object per record).
    """
    rows = [_record_row(r) for r in records]
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for row in rows:
                writer.writerow([_format_value(c, row[c]) for c in METRICS_COLUMNS])
    elif fmt == "jsonl":
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")


def read_metrics_csv(path) -> list[dict]:
    """Parse a metrics CSV back into typed row dictionaries."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for col, text in row.items():
                parsed[col] = int(text) if col in _INT_COLUMNS else float(text)
            out.append(parsed)
    return out


def write_trace(trace_rows, path):
    """One JSON object per slot/device event."""
    with open(path, "w") as fh:
        for row in trace_rows:
            fh.write(json.dumps(row) + "\n")
