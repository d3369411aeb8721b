"""Worst-case regret over a two-arm family where the second arm improves once.

Each instance moves the improvement to a later phase; the worst instance sets
the minimax regret. Prints UCB1 and BWC worst cases for growing horizons.

    python3 demos/lower_bound_family.py
"""
from __future__ import annotations

import numpy as np

from eventful import gen_thm4
from eventful.harness import family_regret

for T in (1_000, 4_000, 16_000):
    fam = gen_thm4(T, 0.3)
    pick = np.unique(np.linspace(0, fam.N, 11).round().astype(int))
    inst = [fam.instances[i] for i in pick]
    ucb1 = family_regret(inst, "ucb1", range(5))
    bwc = family_regret(inst, "bwc", range(5), {"alpha": 0.5, "t0": 0})
    print(f"T={T:6d}  phases {fam.N:4d}  worst ucb1 {ucb1.max():7.1f}  worst bwc {bwc.max():7.1f}")
