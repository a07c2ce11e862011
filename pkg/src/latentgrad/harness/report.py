"""Result emission: aggregated CSV tables and per-run JSONL learning curves.

The CSV mirrors the usual results-table shape (one row per grid cell:
method, accuracy with spread, recovery metric with spread).  Floats are
serialized with repr, whose shortest-round-trip decimal form preserves every
bit on parse; empty cells stand for missing values in failed cells and are
flagged by n_failed rather than dropped.
"""

from __future__ import annotations

import csv
import json
from typing import Any

from .train import RunRecord

__all__ = [
    "TABLE_COLUMNS",
    "write_table_csv",
    "read_table_csv",
    "write_curves_jsonl",
    "read_curves_jsonl",
]

# fixed column order of the results table
TABLE_COLUMNS = (
    "method",
    "lr",
    "eta",
    "k",
    "n_runs",
    "n_failed",
    "recovery_metric",
    "valid_acc_median",
    "test_acc_median",
    "test_acc_stderr",
    "test_acc_std",
    "recovery_median",
    "recovery_stderr",
    "recovery_std",
    "decoder_calls",
)

_INT_COLUMNS = {"k", "n_runs", "n_failed", "decoder_calls"}
_STR_COLUMNS = {"method", "recovery_metric"}


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table_csv(rows: list[dict], path) -> None:
    """Aggregated sweep rows (see sweep.aggregate) to a fixed-column CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in TABLE_COLUMNS])


def read_table_csv(path) -> list[dict]:
    """Inverse of write_table_csv; numeric cells parse back exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TABLE_COLUMNS:
            raise ValueError(f"unexpected table header {header}")
        rows = []
        for raw in reader:
            row: dict[str, Any] = {}
            for col, cell in zip(TABLE_COLUMNS, raw):
                if cell == "":
                    row[col] = None
                elif col in _STR_COLUMNS:
                    row[col] = cell
                elif col in _INT_COLUMNS:
                    row[col] = int(cell)
                else:
                    row[col] = float(cell)
            rows.append(row)
    return rows


def write_curves_jsonl(records: list[RunRecord], path) -> None:
    """One JSON object per run: resolved config, metric time series, finals."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_curves_jsonl(path) -> list[RunRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            records.append(RunRecord(**data))
    return records
