"""Command-line entry point.

Subcommands: gen-data (synthesize a dataset to CSV + JSON sidecar), train
(one run, record to JSON), sweep (a JSON-described grid to records + tables),
check (the oracle/invariant suite; nonzero exit on failure), report
(aggregate stored run records into table.csv + curves.jsonl).

All configuration is explicit through flags and JSON files; nothing reads
environment variables.  The grid file schema mirrors SweepGrid:

    {"methods": ["ste-i"], "lrs": [1e-3], "etas": [1.0], "ks": [1],
     "seeds": [0, 1, 2, 3], "base": {"epochs": 10000}}
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..data import (
    MixtureSpec,
    StructuredSpec,
    gen_mixture,
    gen_structured_toy,
    load_mixture,
    load_structured,
    save_mixture,
    save_structured,
)
from .checks import run_all_checks
from .report import write_curves_jsonl, write_table_csv
from .sweep import SweepGrid, aggregate, best_per_method, sweep
from .train import RunRecord, TrainConfig, train

__all__ = ["main"]


def _load_dataset(path):
    with open(os.path.join(path, "meta.json")) as fh:
        task = json.load(fh)["task"]
    if task == "mixture":
        return load_mixture(path)
    if task == "structured":
        return load_structured(path)
    raise ValueError(f"unknown task {task!r} in {path}")


def _cmd_gen_data(args) -> int:
    if args.task == "mixture":
        spec = MixtureSpec(
            n_clusters=args.clusters,
            dim=args.dim,
            n_train=args.n_train,
            n_valid=args.n_valid,
            n_test=args.n_test,
            seed=args.seed,
        )
        save_mixture(gen_mixture(spec), args.out)
    else:
        spec = StructuredSpec(
            min_length=args.min_length,
            max_length=args.max_length,
            dim=args.struct_dim,
            n_train=args.n_train_s,
            n_valid=args.n_valid_s,
            n_test=args.n_test_s,
            seed=args.seed,
        )
        save_structured(gen_structured_toy(spec), args.out)
    print(f"wrote {args.task} dataset to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = _load_dataset(args.data) if args.data else gen_mixture(MixtureSpec())
    config = TrainConfig(
        method=args.method,
        lr=args.lr,
        eta=args.eta,
        k=args.k,
        temperature=args.temperature,
        epochs=args.epochs,
        seed=args.seed,
        eval_every=args.eval_every,
        weight_decay=args.weight_decay,
    )
    record = train(config, dataset)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump(record.to_dict(), fh, indent=2)
    status = "FAILED: " + record.error if record.failed else "ok"
    print(
        f"{args.method} lr={args.lr} eta={args.eta} k={args.k} seed={args.seed}: "
        f"{status}; final {record.final}; decoder calls {record.decoder_calls}; "
        f"{record.wall_time:.1f}s"
    )
    return 0


def _cmd_sweep(args) -> int:
    with open(args.grid) as fh:
        raw = json.load(fh)
    grid = SweepGrid(
        methods=tuple(raw["methods"]),
        lrs=tuple(raw.get("lrs", (1e-4, 1e-3, 2e-3))),
        etas=tuple(raw.get("etas", (0.1, 1.0, 2.0))),
        ks=tuple(raw.get("ks", (1,))),
        seeds=tuple(raw.get("seeds", (0, 1, 2, 3))),
        base=dict(raw.get("base", {})),
    )
    dataset = _load_dataset(args.data) if args.data else gen_mixture(MixtureSpec())
    os.makedirs(args.out, exist_ok=True)

    def progress(i, total, rec):
        state = "FAILED" if rec.failed else "ok"
        print(f"[{i}/{total}] {rec.config['method']} lr={rec.config['lr']} "
              f"eta={rec.config['eta']} k={rec.config['k']} seed={rec.config['seed']}: "
              f"{state}", flush=True)

    result = sweep(grid, dataset, progress=progress)
    write_curves_jsonl(result.records, os.path.join(args.out, "curves.jsonl"))
    write_table_csv(result.table, os.path.join(args.out, "table.csv"))
    write_table_csv(result.best, os.path.join(args.out, "best.csv"))
    print(f"wrote {len(result.records)} runs to {args.out}")
    return 0


def _cmd_check(args) -> int:
    results = run_all_checks(fast=args.fast)
    for res in results:
        print(res)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_report(args) -> int:
    path = os.path.join(args.runs, "curves.jsonl")
    records = []
    if os.path.exists(path):
        from .report import read_curves_jsonl

        records.extend(read_curves_jsonl(path))
    for name in sorted(os.listdir(args.runs)):
        if name.endswith(".json") and name != "meta.json":
            with open(os.path.join(args.runs, name)) as fh:
                records.append(RunRecord(**json.load(fh)))
    if not records:
        print(f"no run records found under {args.runs}", file=sys.stderr)
        return 1
    rows = aggregate(records)
    write_table_csv(rows, os.path.join(args.runs, "table.csv"))
    write_table_csv(best_per_method(rows), os.path.join(args.runs, "best.csv"))
    write_curves_jsonl(records, os.path.join(args.runs, "curves.jsonl"))
    print(f"aggregated {len(records)} records into {args.runs}/table.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentgrad",
        description="Surrogate-gradient experiments with discrete latent variables",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="synthesize a dataset (CSV + JSON sidecar)")
    g.add_argument("--task", choices=("mixture", "structured"), default="mixture")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    mix = MixtureSpec()
    g.add_argument("--clusters", type=int, default=mix.n_clusters)
    g.add_argument("--dim", type=int, default=mix.dim)
    g.add_argument("--n-train", type=int, default=mix.n_train)
    g.add_argument("--n-valid", type=int, default=mix.n_valid)
    g.add_argument("--n-test", type=int, default=mix.n_test)
    g.add_argument("--min-length", type=int, default=3)
    g.add_argument("--max-length", type=int, default=6)
    g.add_argument("--struct-dim", type=int, default=4)
    g.add_argument("--n-train-s", type=int, default=400)
    g.add_argument("--n-valid-s", type=int, default=200)
    g.add_argument("--n-test-s", type=int, default=200)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="one training run")
    t.add_argument("--method", required=True)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--eta", type=float, default=1.0)
    t.add_argument("--k", type=int, default=1)
    t.add_argument("--temperature", type=float, default=1.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=10000)
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--data", help="dataset directory (default: built-in mixture)")
    t.add_argument("--out", help="write the run record JSON here")
    t.set_defaults(func=_cmd_train)

    s = sub.add_parser("sweep", help="run a hyperparameter grid")
    s.add_argument("--grid", required=True, help="JSON grid file (see module docstring)")
    s.add_argument("--data", help="dataset directory (default: built-in mixture)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("check", help="run the oracle/invariant suite")
    c.add_argument("--fast", action="store_true", help="reduced sample counts")
    c.set_defaults(func=_cmd_check)

    r = sub.add_parser("report", help="aggregate stored run records")
    r.add_argument("--runs", required=True, help="directory with run records")
    r.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
