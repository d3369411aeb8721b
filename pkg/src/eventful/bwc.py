"""Bandit-with-classifier meta-algorithm.

Rounds are grouped into alternating phases, each running a fresh testable
bandit:

* testing phases (odd ordinals) last exactly ``L`` rounds and never consult
  the classifier;
* adapting phases (even ordinals) show every context to the classifier after
  the round is played and end on the first positive prediction.

When a testing phase finishes, its ``L``-th round guess is compared with the
guess of the most recent earlier full phase. If no arm that looked optimal
before now looks clearly suboptimal, the context that triggered the phase is
fed to the classifier as a false-labelled sample. True labels are never fed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bandit import Guess, TestableUCB
from .core import EnvironmentSpec, RunRecord, UsageError, regret_increments

TESTING = "testing"
ADAPTING = "adapting"


@dataclass
class Phase:
    ordinal: int
    kind: str
    start: int
    length: int = 0
    guess_at_L: Optional[Guess] = None
    trigger_round: Optional[int] = None  # round whose context opened this phase
    trigger_context: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def full(self) -> bool:
        return self.guess_at_L is not None


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    label: bool
    round: int
    phase: int


class BWC:
    """One bandit-with-classifier instance serving a single stream of rounds.

    ``classifier`` needs ``predict(x) -> bool`` (True = positive) and
    ``feed(x)``. ``eps`` is the minimum shift the bandit guess tests for;
    ``alpha`` and ``t0`` parametrise the per-phase :class:`TestableUCB`.
    """

    def __init__(self, n_arms: int, horizon: int, L: int, classifier, eps: float,
                 alpha: float = 6.0, t0: Optional[int] = None):
        if L < n_arms:
            raise UsageError(f"L={L} must be at least the number of arms ({n_arms})")
        self.n_arms = n_arms
        self.horizon = horizon
        self.L = L
        self.classifier = classifier
        self.eps = eps
        self.alpha = alpha
        self.t0 = t0
        self.phases: list[Phase] = []
        self.labels: list[LabeledSample] = []
        self.positives: list[int] = []
        self._last_full: Optional[Phase] = None
        self._bandit: TestableUCB
        self._open(TESTING, 1)

    @property
    def phase(self) -> Phase:
        return self.phases[-1]

    @property
    def bandit(self) -> TestableUCB:
        return self._bandit

    def _open(self, kind: str, start: int, trigger_round=None, trigger_context=None) -> None:
        self.phases.append(Phase(len(self.phases) + 1, kind, start,
                                 trigger_round=trigger_round, trigger_context=trigger_context))
        self._bandit = TestableUCB(self.n_arms, self.horizon, self.eps, self.alpha, self.t0)

    def step(self, t: int, x_t, click: Callable[[int], float]) -> int:
        """Play round ``t`` and return the chosen arm; ``click(arm)`` yields the reward."""
        ph = self.phases[-1]
        bandit = self._bandit
        arm = bandit.select()
        bandit.update(arm, click(arm))
        ph.length += 1
        if ph.length == self.L:
            ph.guess_at_L = bandit.guess(self.eps)
            if ph.kind == TESTING:
                self.close_testing_phase()
                self._last_full = ph
                self._open(ADAPTING, t + 1)
            else:
                self._last_full = ph
        elif ph.kind == TESTING:
            return arm
        if ph.kind == ADAPTING and self.classifier.predict(x_t):
            self.positives.append(t)
            self._open(TESTING, t + 1, trigger_round=t, trigger_context=np.array(x_t, copy=True))
        return arm

    def close_testing_phase(self) -> Optional[LabeledSample]:
        """Label the current (just completed) testing phase's trigger context.

        Emits ``(x, False)`` and feeds it to the classifier iff the guess of
        the most recent earlier full phase shares no arm between its ``G+``
        and this phase's ``G-``. Phase 1 has no trigger and no earlier full
        phase, so it never emits.
        """
        ph = self.phases[-1]
        if ph.kind != TESTING or ph.guess_at_L is None:
            raise UsageError("only a completed testing phase can be closed")
        prev = self._last_full
        if prev is None or ph.trigger_context is None:
            return None
        if prev.guess_at_L.g_plus & ph.guess_at_L.g_minus:
            return None
        sample = LabeledSample(ph.trigger_context, False, ph.trigger_round, ph.ordinal)
        self.classifier.feed(sample.x)
        self.labels.append(sample)
        return sample


@dataclass
class BwcParams:
    """Parameters of a BWC run.

    ``L`` defaults to ``ceil(L_const * n / eps^2 * ln T)``. ``classifier`` is
    a factory taking the spec; by default SafeCl over the class of the
    spec's oracle concept, with the oracle's margin.
    """

    eps: float
    L: Optional[int] = None
    L_const: float = 1.0
    alpha: float = 6.0
    t0: Optional[int] = None
    classifier: Optional[Callable[[EnvironmentSpec], object]] = None

    def resolve_L(self, spec: EnvironmentSpec) -> int:
        from .bandit import default_L

        return self.L if self.L is not None else default_L(spec.n_arms, self.eps, spec.horizon,
                                                          self.L_const)


def default_classifier(spec: EnvironmentSpec):
    from .classifier import APRConcept, ConceptClass, HYPConcept

    oracle = spec.oracle
    if isinstance(oracle, APRConcept):
        return ConceptClass("apr", oracle.d, oracle.delta).safecl()
    if isinstance(oracle, HYPConcept):
        return ConceptClass("hyp", oracle.d, oracle.delta).safecl()
    raise UsageError("spec has no oracle concept; pass a classifier factory")


def make_bwc(spec: EnvironmentSpec, params: BwcParams) -> BWC:
    clf = (params.classifier or default_classifier)(spec)
    return BWC(spec.n_arms, spec.horizon, params.resolve_L(spec), clf, params.eps,
               params.alpha, params.t0)


def bwc_run(spec: EnvironmentSpec, params: BwcParams, clicks: np.ndarray, seed: int = 0,
            validate: bool = True) -> RunRecord:
    """Run BWC over the whole horizon.

    ``clicks`` is the ``(horizon, n_arms)`` boolean click table from a
    :class:`~eventful.core.ClickStream`. The record's ``info`` carries the
    phases, fed labels, positive-prediction rounds and label bookkeeping
    against the true event rounds.
    """
    from .core import validate_spec

    L = params.resolve_L(spec)
    if validate:
        rep = validate_spec(spec, L=L)
        if not rep.ok:
            v = rep.first
            raise UsageError(f"invalid spec: {v.invariant} at round {v.round}: {v.message}")
    agent = make_bwc(spec, params)
    ctx = spec.contexts
    if ctx is None:
        raise UsageError("BWC needs a context schedule")
    rows = clicks.tolist()
    step = agent.step
    chosen = [step(t, ctx[t - 1], rows[t - 1].__getitem__) for t in range(1, spec.horizon + 1)]
    chosen = np.array(chosen, dtype=np.int64)
    events = set(spec.event_rounds)
    info = {
        "L": L,
        "phases": agent.phases,
        "labels": agent.labels,
        "positives": agent.positives,
        "false_positives": sum(1 for t in agent.positives if t not in events),
        "mislabeled": sum(1 for s in agent.labels if s.round in events),
    }
    return RunRecord(chosen, regret_increments(spec, chosen), seed, info)
