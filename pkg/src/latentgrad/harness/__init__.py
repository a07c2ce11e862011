"""Experiment harness: optimizer, training loop, sweeps, checks, CLI."""

from .checks import CheckResult, run_all_checks
from .optim import AdamWConfig, AdamWState, adamw_init, adamw_step
from .report import (
    TABLE_COLUMNS,
    read_curves_jsonl,
    read_table_csv,
    write_curves_jsonl,
    write_table_csv,
)
from .sweep import SweepGrid, SweepResult, aggregate, best_per_method, expand_grid, sweep
from .train import TRAIN_METHODS, RunRecord, TrainConfig, records_match, train

__all__ = [
    "AdamWConfig",
    "AdamWState",
    "adamw_init",
    "adamw_step",
    "TRAIN_METHODS",
    "TrainConfig",
    "RunRecord",
    "records_match",
    "train",
    "SweepGrid",
    "SweepResult",
    "aggregate",
    "best_per_method",
    "expand_grid",
    "sweep",
    "TABLE_COLUMNS",
    "read_curves_jsonl",
    "read_table_csv",
    "write_curves_jsonl",
    "write_table_csv",
    "CheckResult",
    "run_all_checks",
]
