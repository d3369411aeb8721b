"""Bandits with an event classifier for piecewise-stationary click streams."""
from __future__ import annotations

from .bandit import EXP3, UCB1, Guess, ImmatureStateError, TestableUCB, default_L
from .bwc import BWC, BwcParams, LabeledSample, Phase, bwc_run, make_bwc
from .classifier import (
    APRConcept,
    ConceptClass,
    ConvergenceError,
    HYPConcept,
    SafeClAPR,
    SafeClHYP,
    diameter_bruteforce,
    l2_distance_to_hull,
    universe_grid,
)
from .core import (
    ClickStream,
    EnvironmentSpec,
    GenerationError,
    ResourceLimitError,
    RunRecord,
    Segment,
    UsageError,
    env_click,
    regret_step,
    stationary_spec,
    stream_rng,
    validate_spec,
)
from .envgen import LowerBoundFamily, WorkloadSpec, gen_thm4, gen_thm5i, gen_thm5ii, gen_workload
from .harness import (
    ExperimentConfig,
    ResultTable,
    bruteforce_expected_regret,
    emit_csv,
    emit_plot,
    run_experiment,
    simulate,
)

__version__ = "0.1.0"
