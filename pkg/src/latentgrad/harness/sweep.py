"""Hyperparameter sweeps: expand a grid, run every cell, aggregate over seeds.

A grid names methods and the lr/eta/k/seed axes; every (method, lr, eta, k,
seed) combination becomes one training run.  Methods whose backward pass never
reads eta or k (everything except the iterative pullbacks) are collapsed to a
single canonical (eta, k) cell so the sweep does not repeat identical runs.

Aggregation groups records by (method, lr, eta, k) and reports the median over
seeds plus both spread conventions (standard error and sample standard
deviation), labeled explicitly.  The best row per method maximizes median
validation accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..data import MixtureDataset
from .train import RunRecord, TrainConfig, train

__all__ = ["SweepGrid", "SweepResult", "expand_grid", "sweep", "aggregate", "best_per_method"]

# backward passes that read the pullback knobs (eta, k)
PULLBACK_METHODS = ("ste-i", "spigot", "spigot-ce", "spigot-eg")


@dataclass(frozen=True)
class SweepGrid:
    """Axes of one sweep; base carries fixed TrainConfig overrides."""

    methods: tuple
    lrs: tuple = (1e-4, 1e-3, 2e-3)
    etas: tuple = (0.1, 1.0, 2.0)
    ks: tuple = (1,)
    seeds: tuple = (0, 1, 2, 3)
    base: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("methods", "lrs", "etas", "ks", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be non-empty")


def expand_grid(grid: SweepGrid) -> list[TrainConfig]:
    """All runs the grid denotes, in deterministic order."""
    configs = []
    for method in grid.methods:
        etas = grid.etas if method in PULLBACK_METHODS else (1.0,)
        ks = grid.ks if method in PULLBACK_METHODS else (1,)
        for lr in grid.lrs:
            for eta in etas:
                for k in ks:
                    for seed in grid.seeds:
                        configs.append(
                            TrainConfig(
                                method=method,
                                lr=lr,
                                eta=eta,
                                k=k,
                                seed=seed,
                                **grid.base,
                            )
                        )
    return configs


@dataclass
class SweepResult:
    records: list[RunRecord]
    table: list[dict]  # one aggregated row per (method, lr, eta, k)
    best: list[dict]  # one row per method, chosen by median valid accuracy


def _recovery_key(record: RunRecord) -> str:
    return "test_uas" if record.config.get("task") == "structured" else "test_v"


def _spread(values: np.ndarray) -> tuple[float, float]:
    # sample std and the standard error of the mean; both reported because
    # published tables disagree about which one their plus-minus denotes
    if values.size < 2:
        return 0.0, 0.0
    std = float(np.std(values, ddof=1))
    return std, std / float(np.sqrt(values.size))


def aggregate(records: list[RunRecord]) -> list[dict]:
    """Per-cell seed aggregation; failed runs are counted, never dropped."""
    groups: dict[tuple, list[RunRecord]] = {}
    order = []
    for rec in records:
        key = (
            rec.config["method"],
            rec.config["lr"],
            rec.config["eta"],
            rec.config["k"],
        )
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)

    rows = []
    for key in order:
        cell = groups[key]
        ok = [r for r in cell if not r.failed and r.final]
        row: dict[str, Any] = {
            "method": key[0],
            "lr": key[1],
            "eta": key[2],
            "k": key[3],
            "n_runs": len(cell),
            "n_failed": len(cell) - len(ok),
            "recovery_metric": "uas" if _recovery_key(cell[0]) == "test_uas" else "v_measure",
        }
        if ok:
            acc = np.array([r.final["test_acc"] for r in ok])
            rec_v = np.array([r.final[_recovery_key(r)] for r in ok])
            valid = np.array([r.final["best_valid_acc"] for r in ok])
            acc_std, acc_se = _spread(acc)
            rec_std, rec_se = _spread(rec_v)
            row.update(
                valid_acc_median=float(np.median(valid)),
                test_acc_median=float(np.median(acc)),
                test_acc_stderr=acc_se,
                test_acc_std=acc_std,
                recovery_median=float(np.median(rec_v)),
                recovery_stderr=rec_se,
                recovery_std=rec_std,
                decoder_calls=int(ok[0].decoder_calls),
            )
        else:
            row.update(
                valid_acc_median=None,
                test_acc_median=None,
                test_acc_stderr=None,
                test_acc_std=None,
                recovery_median=None,
                recovery_stderr=None,
                recovery_std=None,
                decoder_calls=None,
            )
        rows.append(row)
    return rows


def best_per_method(rows: list[dict]) -> list[dict]:
    """Max median validation accuracy per method; ties keep grid order."""
    best: dict[str, dict] = {}
    order = []
    for row in rows:
        if row["valid_acc_median"] is None:
            continue
        name = row["method"]
        if name not in best:
            best[name] = row
            order.append(name)
        elif row["valid_acc_median"] > best[name]["valid_acc_median"]:
            best[name] = row
    return [best[name] for name in order]


def sweep(grid: SweepGrid, dataset, progress=None) -> SweepResult:
    """Run every cell of the grid; one broken run never aborts the rest."""
    records = []
    configs = expand_grid(grid)
    for i, config in enumerate(configs):
        try:
            rec = train(config, dataset)
        except Exception as exc:  # divergence is handled inside train;
            # anything else still yields a failed record so the sweep survives
            task = "mixture" if isinstance(dataset, MixtureDataset) else "structured"
            rec = RunRecord(
                config={**config.__dict__, "task": task},
                failed=True,
                error=f"{type(exc).__name__}: {exc}",
            )
        records.append(rec)
        if progress is not None:
            progress(i + 1, len(configs), rec)
    rows = aggregate(records)
    return SweepResult(records=records, table=rows, best=best_per_method(rows))
