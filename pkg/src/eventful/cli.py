"""Command-line entry point: ``eventful run | gen-workload | plot``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .core import GenerationError, UsageError
from .envgen import WorkloadSpec, gen_workload
from .harness import ExperimentConfig, ResultTable, emit_csv, emit_plot, run_experiment


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.runs is not None:
        config = replace(config, runs=args.runs)
    if args.algo:
        keep = {a.name: a for a in config.algorithms}
        config = replace(config, algorithms=[keep.get(n, n) for n in args.algo])
    out = args.out or config.out
    if not out:
        raise UsageError("no output directory: pass --out or set 'out' in the config")
    table = run_experiment(config)
    emit_csv(table, out)
    emit_plot(table, os.path.join(out, "regret.svg"))
    for alg, (mean, std) in table.summary().items():
        print(f"{alg:6s} mean final regret {mean:.1f} (sd {std:.1f})")
    for alg, run, msg in table.errors:
        print(f"run {run} {alg} failed: {msg}", file=sys.stderr)
    return 0


def _cmd_gen_workload(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    ws = WorkloadSpec.from_dict(data.get("workload", data) if isinstance(data, dict) else data)
    specs = gen_workload(ws)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"workload": ws.to_dict(), "queries": [s.to_dict() for s in specs]}, fh)
        fh.write("\n")
    print(f"wrote {len(specs)} query specs to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    table = ResultTable.from_csv(curves_path=args.table)
    emit_plot(table, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventful", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config and write CSV tables and a plot")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--runs", type=int)
    r.add_argument("--algo", nargs="+", metavar="NAME")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen-workload", help="generate a workload and dump it as JSON")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_workload)

    pl = sub.add_parser("plot", help="plot a curves CSV as SVG")
    pl.add_argument("--table", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, GenerationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
