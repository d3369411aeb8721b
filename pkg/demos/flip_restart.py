"""One query whose best result flips halfway, with a context that announces it.

Runs BWC, UCB1 and an oracle-restarted UCB1 on the same click table and prints
the phase trace BWC produced.

    python3 demos/flip_restart.py [seed]
"""
from __future__ import annotations

import sys

import numpy as np

from eventful import APRConcept, BwcParams, ClickStream, EnvironmentSpec, Segment, bwc_run, simulate, stream_rng
from eventful.bandit import UCB1
from eventful.harness import PolicyAgent, make_agent

T = 10_000
EVENT = T // 2

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

# contexts sit at -1 except the event round, which is at +1
ctx = np.full((T, 1), -1.0)
ctx[EVENT - 1] = 1.0
spec = EnvironmentSpec(
    n_arms=2, horizon=T,
    segments=(Segment(1, (0.9, 0.1)), Segment(EVENT, (0.1, 0.9))),
    contexts=ctx, oracle=APRConcept([-1.0], [-1.0], 0.5),
    eps_shift=0.8, min_subopt=0.8,
)
clicks = ClickStream(spec, stream_rng(seed, 1)).thresholds()

# ---------------------------------------------------------------------------
# three learners, one click table
# ---------------------------------------------------------------------------

bwc = bwc_run(spec, BwcParams(eps=0.8, alpha=0.5, t0=0), clicks, seed)
ucb1 = simulate(PolicyAgent(UCB1(2)), spec, clicks)
ucbo = simulate(make_agent("ucbo", {}, spec), spec, clicks)

print(f"final regret  bwc {bwc.final_regret:7.1f}  ucb1 {ucb1.final_regret:7.1f}  "
      f"ucbo {ucbo.final_regret:7.1f}")

print("\nphases (kind, first round, length, trigger):")
for ph in bwc.info["phases"]:
    print(f"  {ph.kind:9s} {ph.start:6d} {ph.length:6d}  {ph.trigger_round}")
print(f"labels fed: {len(bwc.info['labels'])}, false positives: {bwc.info['false_positives']}")
