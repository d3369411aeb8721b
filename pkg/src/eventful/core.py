"""Shared domain types for eventful bandit problems.

An eventful (piecewise-stationary) Bernoulli bandit is described by an
:class:`EnvironmentSpec`: a list of segments with fixed click probabilities,
a per-round context schedule and, optionally, the event-oracle concept that
labels event rounds ``+1`` and every other round ``-1``.

Rounds are 1-based at every public entry point; arrays indexed by round are
stored 0-based and converted once here.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

FLOAT_TOL = 1e-12


class UsageError(ValueError):
    """Caller passed an out-of-range round, arm or malformed argument."""


class ResourceLimitError(RuntimeError):
    """A brute-force routine would exceed its configured size cap."""


class GenerationError(ValueError):
    """An instance generator could not satisfy its constraints."""


# ---------------------------------------------------------------------------
# Environment description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    start: int
    probs: tuple[float, ...]


@dataclass(frozen=True)
class EnvironmentSpec:
    """Piecewise-stationary Bernoulli environment.

    ``contexts`` has shape ``(horizon, d)``; row ``t-1`` is the context shown
    at round ``t``. ``oracle`` is any object with ``evaluate_many(X)``
    returning +1 / -1 / 0 (null) per row, normally a classifier concept.
    """

    n_arms: int
    horizon: int
    segments: tuple[Segment, ...]
    contexts: Optional[np.ndarray] = None
    oracle: Any = None
    eps_shift: float = 0.0
    min_subopt: float = 0.0
    min_spacing: Optional[int] = None  # the L that events must be 2L apart for
    _starts: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        segs = tuple(
            s if isinstance(s, Segment) else Segment(int(s[0]), tuple(float(p) for p in s[1]))
            for s in self.segments
        )
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise UsageError("an environment needs at least one segment")
        probs = np.array([s.probs for s in segs], dtype=float)
        if probs.ndim != 2 or probs.shape[1] != self.n_arms:
            raise UsageError(f"every segment needs {self.n_arms} click probabilities")
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_starts", tuple(s.start for s in segs))
        if self.contexts is not None:
            ctx = np.array(self.contexts, dtype=float)
            if ctx.ndim == 1:
                ctx = ctx[:, None]
            if ctx.shape[0] != self.horizon:
                raise UsageError(
                    f"context schedule has {ctx.shape[0]} rows for horizon {self.horizon}"
                )
            ctx.setflags(write=False)
            object.__setattr__(self, "contexts", ctx)

    @property
    def k(self) -> int:
        """Number of events (segment boundaries)."""
        return len(self.segments) - 1

    @property
    def event_rounds(self) -> tuple[int, ...]:
        return self._starts[1:]

    @property
    def segment_probs(self) -> np.ndarray:
        """Read-only ``(k+1, n_arms)`` matrix of per-segment click probabilities."""
        return self._probs

    @property
    def segment_bounds(self) -> list[tuple[int, int]]:
        """Inclusive (first, last) round of every segment."""
        ends = [s - 1 for s in self._starts[1:]] + [self.horizon]
        return list(zip(self._starts, ends))

    def segment_index(self, t: int) -> int:
        self._check_round(t)
        return bisect.bisect_right(self._starts, t) - 1

    def probs_at(self, t: int) -> np.ndarray:
        return self._probs[self.segment_index(t)]

    def context(self, t: int) -> Optional[np.ndarray]:
        self._check_round(t)
        return None if self.contexts is None else self.contexts[t - 1]

    def _check_round(self, t: int) -> None:
        if not 1 <= t <= self.horizon:
            raise UsageError(f"round {t} outside 1..{self.horizon}")

    def _check_arm(self, arm: int) -> None:
        if not 0 <= arm < self.n_arms:
            raise UsageError(f"arm {arm} outside 0..{self.n_arms - 1}")

    def to_dict(self) -> dict:
        return {
            "n_arms": self.n_arms,
            "horizon": self.horizon,
            "segments": [{"start": s.start, "probs": list(s.probs)} for s in self.segments],
            "contexts": None if self.contexts is None else self.contexts.tolist(),
            "oracle": None if self.oracle is None else self.oracle.to_dict(),
            "eps_shift": self.eps_shift,
            "min_subopt": self.min_subopt,
            "min_spacing": self.min_spacing,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentSpec":
        from .classifier import concept_from_dict

        oracle = data.get("oracle")
        return cls(
            n_arms=int(data["n_arms"]),
            horizon=int(data["horizon"]),
            segments=tuple(Segment(int(s["start"]), tuple(s["probs"])) for s in data["segments"]),
            contexts=None if data.get("contexts") is None else np.asarray(data["contexts"], float),
            oracle=None if oracle is None else concept_from_dict(oracle),
            eps_shift=float(data.get("eps_shift", 0.0)),
            min_subopt=float(data.get("min_subopt", 0.0)),
            min_spacing=data.get("min_spacing"),
        )


def stationary_spec(probs: Sequence[float], horizon: int, **kwargs) -> EnvironmentSpec:
    """Single-segment environment; ``kwargs`` pass through to the dataclass."""
    return EnvironmentSpec(
        n_arms=len(probs), horizon=horizon, segments=(Segment(1, tuple(probs)),), **kwargs
    )


# ---------------------------------------------------------------------------
# Clicks and regret
# ---------------------------------------------------------------------------


def env_click(spec: EnvironmentSpec, t: int, arm: int, rng: np.random.Generator) -> int:
    """Draw one Bernoulli click for ``arm`` at round ``t``."""
    spec._check_arm(arm)
    return int(rng.random() < spec.probs_at(t)[arm])


def regret_step(spec: EnvironmentSpec, t: int, chosen: int) -> float:
    spec._check_arm(chosen)
    p = spec.probs_at(t)
    return float(p.max() - p[chosen])


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for an independent named stream.

    Streams are addressed by ``(seed, *key)`` so they do not depend on the
    order in which runs or queries are executed.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class ClickStream:
    """Pre-drawn uniforms so every policy sees the same click at (round, arm).

    ``click(t, arm)`` is 1 iff ``U[t-1, arm] < p_t(arm)``; two algorithms
    pulling the same arm in the same round therefore observe the same outcome.
    """

    def __init__(self, spec: EnvironmentSpec, rng: np.random.Generator):
        self.spec = spec
        self.uniforms = rng.random((spec.horizon, spec.n_arms))

    def thresholds(self) -> np.ndarray:
        """``(horizon, n_arms)`` boolean click table."""
        out = np.empty(self.uniforms.shape, dtype=bool)
        for (a, b), p in zip(self.spec.segment_bounds, self.spec.segment_probs):
            out[a - 1 : b] = self.uniforms[a - 1 : b] < p
        return out


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    chosen: np.ndarray
    regret_increment: np.ndarray
    seed: int = 0
    info: dict = field(default_factory=dict)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret_increment)

    @property
    def final_regret(self) -> float:
        return float(self.regret_increment.sum())


def regret_increments(spec: EnvironmentSpec, chosen: np.ndarray) -> np.ndarray:
    """Per-round pseudo-regret ``max_i p_t(i) - p_t(chosen_t)``."""
    chosen = np.asarray(chosen, dtype=np.int64)
    out = np.empty(len(chosen), dtype=float)
    for (a, b), p in zip(spec.segment_bounds, spec.segment_probs):
        if a > len(chosen):
            break
        sl = slice(a - 1, min(b, len(chosen)))
        out[sl] = p.max() - p[chosen[sl]]
    return out


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    invariant: str
    round: Optional[int]
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def __bool__(self) -> bool:
        return self.ok


def validate_spec(spec: EnvironmentSpec, L: Optional[int] = None) -> ValidationReport:
    """Check every environment assumption; never raises.

    ``L`` overrides ``spec.min_spacing`` for the 2L event-spacing check.
    Violations are listed in round order within each check, checks in the
    order: structure, probabilities, minimum suboptimality, minimum shift,
    event spacing, oracle labels.
    """
    rep = ValidationReport()
    add = rep.violations.append
    starts = [s.start for s in spec.segments]
    if starts[0] != 1:
        add(Violation("segment start", starts[0], "first segment must start at round 1"))
    for a, b in zip(starts, starts[1:]):
        if b <= a:
            add(Violation("segment order", b, f"segment start {b} does not follow {a}"))
    if starts[-1] > spec.horizon:
        add(Violation("segment start", starts[-1], "segment starts after the horizon"))

    probs = spec.segment_probs
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        seg = int(np.argmax(np.any((probs < 0) | (probs > 1) | ~np.isfinite(probs), axis=1)))
        add(Violation("probability range", starts[seg], "click probability outside [0, 1]"))

    for s, p in zip(starts, probs):
        best = p.max()
        sub = p[p < best - FLOAT_TOL]
        if sub.size and best - sub.max() < spec.min_subopt - FLOAT_TOL:
            add(Violation(
                "minimum suboptimality", s,
                f"gap {best - sub.max():.6g} below min_subopt {spec.min_subopt:.6g}",
            ))

    for s, prev, cur in zip(starts[1:], probs[:-1], probs[1:]):
        if np.array_equal(prev, cur):
            add(Violation("degenerate event", s, "segment boundary without a probability change"))
            continue
        prev_opt = np.flatnonzero(prev >= prev.max() - FLOAT_TOL)
        if not np.any(cur[prev_opt] <= cur.max() - spec.eps_shift + FLOAT_TOL):
            add(Violation(
                "minimum shift", s,
                f"no previously optimal arm drops by eps_shift={spec.eps_shift:.6g}",
            ))

    L = spec.min_spacing if L is None else L
    if L is not None:
        for a, b in zip(starts[1:], starts[2:]):
            if b - a < 2 * L:
                add(Violation("event spacing", b, f"events at {a} and {b} closer than 2L={2 * L}"))

    if spec.oracle is not None and spec.contexts is not None:
        labels = spec.oracle.evaluate_many(spec.contexts)
        expected = -np.ones(spec.horizon, dtype=int)
        ev = np.array(spec.event_rounds, dtype=int)
        expected[ev - 1] = 1
        bad = np.flatnonzero(labels != expected)
        if bad.size:
            t = int(bad[0]) + 1
            add(Violation(
                "oracle labels", t,
                f"oracle gives {int(labels[bad[0]])} at round {t}, expected {int(expected[bad[0]])}",
            ))
    return rep
