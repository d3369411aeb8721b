"""A small synthetic search workload, end to end.

Builds an experiment config in code, runs all four learners with paired clicks,
writes finals.csv, curves.csv and regret.svg, and prints the summary.

    python3 demos/desk_workload.py [out_dir]
"""
from __future__ import annotations

import sys

from eventful import ExperimentConfig, WorkloadSpec, emit_csv, emit_plot, run_experiment

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"

config = ExperimentConfig(
    workload=WorkloadSpec(num_queries=6, total_impressions=60_000, arms_per_query=4,
                          shifting_fraction=0.5, max_events_per_query=3, feature_dim=5),
    algorithms=["ucb1", "ucbo", "bwc", "exp3"],
    runs=3,
    seed=0,
)

table = run_experiment(config)
emit_csv(table, out)
emit_plot(table, f"{out}/regret.svg")

for alg, (mean, sd) in table.summary().items():
    print(f"{alg:5s} {mean:9.1f} +- {sd:.1f}")
for alg, run, msg in table.errors:
    print(f"run {run} of {alg} failed: {msg}")
print(f"tables and plot in {out}/")
