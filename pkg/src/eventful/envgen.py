"""Instance generators.

* :func:`gen_workload` -- a synthetic multi-query search workload: most
  queries are stationary, a fraction is intent-shifting with a handful of
  events each, and a single origin-anchored rectangle decides from the
  context whether a round is an event.
* :func:`gen_thm4`, :func:`gen_thm5i`, :func:`gen_thm5ii` -- the
  lower-bound instance families used to show that context-blind bandits pay
  ``sqrt(T)`` and that the number of classifier mistakes cannot be avoided.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bandit import default_L
from .classifier import (
    APRConcept,
    ConceptClass,
    HYPConcept,
    diameter_bruteforce,
    project_onto_hull,
    universe_grid,
)
from .core import EnvironmentSpec, GenerationError, Segment, UsageError, stream_rng

# stream tags under the workload seed
_TAG_LAYOUT, _TAG_QUERY = 0, 1
_EVENT_GAP = 1e-9


@dataclass(frozen=True)
class WorkloadSpec:
    """Synthetic workload parameters.

    Every query gets ``total_impressions / num_queries`` rounds (the first
    queries absorb the remainder). Click probabilities are drawn uniformly
    from ``[prob_low, prob_high]`` and rescaled so every segment keeps a gap
    of ``min_subopt`` below its best arm and every event drops the old best
    arm at least ``eps_shift`` below the new one. Contexts are uniform in
    the oracle box ``[0, box_side]^d`` on ordinary rounds; on event rounds
    one random feature is pushed to ``(box_side + margin, 1]``.
    """

    num_queries: int = 20
    total_impressions: int = 300_000
    arms_per_query: int = 5
    shifting_fraction: float = 0.1
    max_events_per_query: int = 10
    feature_dim: int = 10
    box_side: float = 0.3
    margin: float = 0.35
    eps_shift: float = 0.6
    min_subopt: float = 0.1
    prob_low: float = 0.1
    prob_high: float = 0.9
    L_const: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_queries < 1 or self.total_impressions < self.num_queries:
            raise UsageError("need at least one impression per query")
        if self.arms_per_query < 1 or self.feature_dim < 1:
            raise UsageError("arms_per_query and feature_dim must be positive")
        if not 0.0 <= self.shifting_fraction <= 1.0:
            raise UsageError("shifting_fraction must lie in [0, 1]")
        if self.box_side <= 0 or self.margin <= 0 or self.box_side + self.margin >= 1.0:
            raise UsageError("need box_side > 0, margin > 0 and box_side + margin < 1")
        if not 0.0 <= self.prob_low < self.prob_high <= 1.0:
            raise UsageError("need 0 <= prob_low < prob_high <= 1")
        if self.prob_high - self.prob_low < max(self.eps_shift, self.min_subopt):
            raise UsageError("probability range too narrow for eps_shift / min_subopt")

    @property
    def num_shifting(self) -> int:
        return math.ceil(self.shifting_fraction * self.num_queries - 1e-9)

    @property
    def oracle(self) -> APRConcept:
        d = self.feature_dim
        return APRConcept(np.zeros(d), np.full(d, self.box_side), self.margin)

    def horizons(self) -> list[int]:
        base, extra = divmod(self.total_impressions, self.num_queries)
        return [base + (q < extra) for q in range(self.num_queries)]

    def query_L(self, horizon: int) -> int:
        return default_L(self.arms_per_query, self.eps_shift, horizon, self.L_const)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WorkloadSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown workload keys: {sorted(unknown)}")
        return cls(**data)


def _rescale(values: np.ndarray, low: float, old_top: float, new_top: float) -> np.ndarray:
    """Affinely map ``[low, old_top]`` onto ``[low, new_top]``."""
    if old_top <= low:
        return np.full_like(values, low)
    return low + (values - low) * (new_top - low) / (old_top - low)


def _draw_segment(rng: np.random.Generator, ws: WorkloadSpec,
                  prev: Optional[np.ndarray]) -> np.ndarray:
    n, lo, hi = ws.arms_per_query, ws.prob_low, ws.prob_high
    while True:
        p = rng.uniform(lo, hi, size=n)
        if prev is not None and n > 1:
            old_best = np.flatnonzero(prev == prev.max())
            # the new best arm must be one that was not optimal before
            cand = np.setdiff1d(np.arange(n), old_best)
            if cand.size == 0:
                raise GenerationError("an event needs at least two arms")
            top = int(cand[np.argmax(p[cand])])
            if p[top] < p.max():
                p[[top, int(np.argmax(p))]] = p[[int(np.argmax(p)), top]]
        best = int(np.argmax(p))
        pb = p[best]
        if n > 1 and pb - ws.min_subopt < lo:
            continue
        if prev is not None and pb - ws.eps_shift < lo:
            continue
        others = np.arange(n) != best
        p[others] = _rescale(p[others], lo, pb, pb - ws.min_subopt)
        if prev is not None:
            for a in np.flatnonzero(prev == prev.max()):
                if p[a] > pb - ws.eps_shift:
                    p[a] = _rescale(np.array([p[a]]), lo, pb, pb - ws.eps_shift)[0]
        return p


def _event_rounds(rng: np.random.Generator, horizon: int, k: int, L: int,
                  query: int) -> list[int]:
    """k event rounds, each >= 2L after round 1 and after the previous event."""
    slack = horizon - 1 - 2 * L * k
    if slack < 0:
        raise GenerationError(
            f"query {query}: {k} events need {2 * L * k + 1} rounds, horizon is {horizon}"
        )
    offs = np.sort(rng.integers(0, slack + 1, size=k))
    return [int(1 + 2 * L * (i + 1) + offs[i]) for i in range(k)]


def _contexts(rng: np.random.Generator, ws: WorkloadSpec, horizon: int,
              events: Sequence[int]) -> np.ndarray:
    d, b = ws.feature_dim, ws.box_side
    X = rng.uniform(0.0, b, size=(horizon, d))
    for t in events:
        j = int(rng.integers(d))
        # keep clear of the closed margin band SafeCl treats as negative
        X[t - 1, j] = max(rng.uniform(b + ws.margin, 1.0), b + ws.margin + _EVENT_GAP)
    return X


def gen_workload(ws: WorkloadSpec) -> list[EnvironmentSpec]:
    """One :class:`EnvironmentSpec` per query; a pure function of ``ws``."""
    layout = stream_rng(ws.seed, _TAG_LAYOUT)
    shifting = set(int(q) for q in layout.permutation(ws.num_queries)[: ws.num_shifting])
    oracle = ws.oracle
    specs = []
    for q, T in enumerate(ws.horizons()):
        rng = stream_rng(ws.seed, _TAG_QUERY, q)
        L = ws.query_L(T)
        k = int(rng.integers(1, ws.max_events_per_query + 1)) if q in shifting else 0
        if k and ws.arms_per_query < 2:
            raise GenerationError(f"query {q}: events need at least two arms")
        events = _event_rounds(rng, T, k, L, q) if k else []
        probs = [_draw_segment(rng, ws, None)]
        for _ in events:
            probs.append(_draw_segment(rng, ws, probs[-1]))
        segs = tuple(Segment(s, tuple(float(v) for v in p)) for s, p in zip([1] + events, probs))
        specs.append(EnvironmentSpec(
            n_arms=ws.arms_per_query, horizon=T, segments=segs,
            contexts=_contexts(rng, ws, T, events), oracle=oracle,
            eps_shift=ws.eps_shift, min_subopt=ws.min_subopt, min_spacing=L,
        ))
    return specs


# ---------------------------------------------------------------------------
# Lower-bound families
# ---------------------------------------------------------------------------


@dataclass
class LowerBoundFamily:
    variant: str
    T: int
    N: int
    phase_starts: list[int]
    instances: list[EnvironmentSpec]
    params: dict = field(default_factory=dict)


#: 1-d rectangle oracle used by the two-context families: negative at -1, positive at +1
_LB_CLASS = ConceptClass("apr", 1, 0.5)
_X_NEG = np.array([-1.0])
_X_POS = np.array([1.0])
_LB_ORACLE = APRConcept([-1.0], [-1.0], 0.5)


def _phase_starts(T: int, N: int, length: Optional[int] = None) -> list[int]:
    """Starts of ``N`` phases of ``length`` rounds (default ``T // N``); the last absorbs the rest."""
    length = T // N if length is None else length
    return [1 + j * length for j in range(N)]


def gen_thm4(T: int, eps: float) -> LowerBoundFamily:
    """Two arms; ``y`` pays 1/2, ``z`` jumps from 1/2-eps to 1/2+eps at phase ``i`` in ``I_i``.

    ``N = floor(sqrt(T))`` phases of length ``N`` (the last absorbs any
    remainder). ``I_0`` never jumps. In ``I_1`` the jump would fall on round
    1, so that instance is stationary. Contexts are ``-1`` everywhere except
    ``+1`` on the event round, matching a 1-d rectangle oracle.
    """
    if not 0 < eps < 0.5:
        raise UsageError("eps must lie in (0, 1/2)")
    N = math.isqrt(T)
    starts = _phase_starts(T, N, N)
    lowp, highp = (0.5, 0.5 - eps), (0.5, 0.5 + eps)
    instances = []
    for i in range(N + 1):
        ctx = np.tile(_X_NEG, (T, 1))
        if i == 0:
            segs = (Segment(1, lowp),)
        elif starts[i - 1] == 1:
            segs = (Segment(1, highp),)
        else:
            segs = (Segment(1, lowp), Segment(starts[i - 1], highp))
            ctx[starts[i - 1] - 1] = _X_POS
        instances.append(EnvironmentSpec(
            n_arms=2, horizon=T, segments=segs, contexts=ctx, oracle=_LB_ORACLE,
            eps_shift=eps, min_subopt=eps,
        ))
    return LowerBoundFamily("thm4", T, N, starts, instances, {"eps": eps})


def gen_thm5i(T: int, k: int, n: int, eps: float, seed: int = 0) -> LowerBoundFamily:
    """``k`` phases of length ``T/k``, each with its own best arm paying 1/2+eps.

    Consecutive phases never share a best arm; the remaining arms pay
    1/2-eps. A single random member of the packing is returned, drawn from
    ``seed``; contexts flag each phase start as in :func:`gen_thm4`.
    """
    if n < 2 or k < 1:
        raise UsageError("need n >= 2 arms and k >= 1 phases")
    rng = stream_rng(seed, 0)
    starts = _phase_starts(T, k)
    best = [int(rng.integers(n))]
    for _ in range(k - 1):
        nxt = int(rng.integers(n - 1))
        best.append(nxt + (nxt >= best[-1]))
    segs, ctx = [], np.tile(_X_NEG, (T, 1))
    for s, b in zip(starts, best):
        p = [0.5 - eps] * n
        p[b] = 0.5 + eps
        segs.append(Segment(s, tuple(p)))
        if s > 1:
            ctx[s - 1] = _X_POS
    spec = EnvironmentSpec(n_arms=n, horizon=T, segments=tuple(segs), contexts=ctx,
                           oracle=_LB_ORACLE, eps_shift=2 * eps, min_subopt=2 * eps)
    return LowerBoundFamily("thm5i", T, k, starts, [spec], {"k": k, "n": n, "eps": eps})


THM5_LOW = 1 / (1 + math.exp(1 / 3))
THM5_HIGH = math.exp(1 / 3) / (1 + math.exp(1 / 3))


def _icbrt(T: int) -> int:
    r = round(T ** (1 / 3))
    while r**3 > T:
        r -= 1
    while (r + 1) ** 3 <= T:
        r += 1
    return r


def _all_negative_concept(cls: ConceptClass, pts: np.ndarray):
    """A concept labelling every point in ``pts`` negative, or None."""
    if cls.kind == "apr":
        return APRConcept(pts.min(axis=0), pts.max(axis=0), cls.delta)
    # -z for the hull point z nearest the origin minimises max_j w.p_j when 0 is outside the hull
    near = project_onto_hull(np.zeros(cls.d), pts).point
    cands = [-near, -pts.mean(axis=0)] + list(np.eye(cls.d)) + list(-np.eye(cls.d))
    for w in cands:
        nw = np.linalg.norm(w)
        if nw == 0:
            continue
        w = w / nw
        if np.max(pts @ w) < 1 - cls.delta - 1e-9:
            return HYPConcept(w, -w, cls.delta)
    return None


def gen_thm5ii(T: int, d_F: int, cls: ConceptClass, always_negative=None,
               grid_step: Optional[float] = None) -> LowerBoundFamily:
    """Families pairing a one-event instance with context sequences that fool the classifier.

    A greedy sequence ``y_1, y_2, ...`` is built so every ``y_j`` can be
    labelled positive by a concept that is negative on ``x^-`` and on all
    earlier ``y``. ``x^0`` shows ``y_j`` at the start of every phase and
    ``x^-`` elsewhere; ``x^i`` shows ``y_j`` only for ``j <= i``. ``x^-``
    defaults to the corner ``(-1, ..., -1)`` (rectangles) or ``-e_1``
    (hyperplanes) and is negative under every oracle of the family.
    """
    N = min(d_F, _icbrt(T))
    if N < 1:
        raise UsageError("need T >= 1 and d_F >= 1")
    if always_negative is None:
        always_negative = -np.ones(cls.d) if cls.kind == "apr" else -np.eye(cls.d)[0]
    x_neg = np.asarray(always_negative, dtype=float).reshape(cls.d)
    if not cls.in_universe(x_neg):
        raise GenerationError("no always-negative context inside the class universe")
    step = grid_step if grid_step is not None else cls.delta / 2
    cert = diameter_bruteforce(cls, universe_grid(cls, step), seed_negatives=[x_neg])
    if cert.length < N:
        raise GenerationError(
            f"greedy sequence has {cert.length} points, the family needs {N}"
        )
    ys = cert.sequence[:N]
    f0 = _all_negative_concept(cls, np.vstack([x_neg] + ys))
    if f0 is None:
        raise GenerationError("no concept labels the whole sequence negative")
    starts = _phase_starts(T, N)
    gap = THM5_HIGH - 0.5
    lowp, highp = (0.5, THM5_LOW), (0.5, THM5_HIGH)
    instances = []
    for i in range(N + 1):
        ctx = np.tile(x_neg, (T, 1))
        shown = N if i == 0 else i
        for j in range(shown):
            ctx[starts[j] - 1] = ys[j]
        if i == 0:
            segs, oracle = (Segment(1, lowp),), f0
        elif starts[i - 1] == 1:
            # the jump would land on round 1, so nothing is an event
            segs, oracle = (Segment(1, highp),), f0
        else:
            segs, oracle = (Segment(1, lowp), Segment(starts[i - 1], highp)), cert.witnesses[i - 1]
        instances.append(EnvironmentSpec(
            n_arms=2, horizon=T, segments=segs, contexts=ctx, oracle=oracle,
            eps_shift=gap, min_subopt=gap,
        ))
    return LowerBoundFamily("thm5ii", T, N, starts, instances,
                            {"d_F": d_F, "class": cls, "always_negative": x_neg,
                             "sequence": ys})
