"""Safe online classification over margin concept classes.

Two concept classes are supported:

* ``apr`` -- axis-parallel rectangles with margin ``delta`` on the unit
  L-infinity ball. A concept is ``-1`` inside its rectangle, ``+1`` at
  L-infinity distance ``>= delta`` from it and null in between.
* ``hyp`` -- hyperplanes with margin ``delta`` on the unit L2 ball,
  ``+1`` where ``w.(x+u) >= delta`` and ``-1`` where ``w.(x+u) < -delta``.

:class:`SafeCl` predicts negative only when no concept consistent with the
false-labelled samples seen so far could call the point positive. For
rectangles that region is the ``delta``-neighbourhood of the samples'
bounding box; for hyperplanes it is the ``2*delta``-neighbourhood of their
convex hull.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import ResourceLimitError, UsageError

#: widening applied to every "negative" region to absorb float rounding
ROUNDING_SLACK = 1e-12
_UNIVERSE_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    """The hull projection did not reach its tolerance within the iteration cap."""


# ---------------------------------------------------------------------------
# Concepts
# ---------------------------------------------------------------------------


def _as_point(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1)


@dataclass(frozen=True)
class APRConcept:
    lo: np.ndarray
    hi: np.ndarray
    delta: float

    def __post_init__(self):
        lo, hi = _as_point(self.lo), _as_point(self.hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise UsageError("rectangle needs lo <= hi in every coordinate")
        if self.delta <= 0:
            raise UsageError("margin must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return len(self.lo)

    def evaluate(self, x) -> Optional[int]:
        x = _as_point(x)
        if np.max(np.abs(x)) > 1 + _UNIVERSE_TOL:
            raise UsageError("context outside the unit L-infinity ball")
        dist = linf_distance_to_rect(x, (self.lo, self.hi))
        if dist == 0.0:
            return -1
        return 1 if dist >= self.delta else None

    def evaluate_many(self, X) -> np.ndarray:
        """Vectorised evaluation; null is encoded as 0."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dist = np.maximum(np.maximum(self.lo - X, X - self.hi), 0.0).max(axis=1)
        return np.where(dist == 0.0, -1, np.where(dist >= self.delta, 1, 0))

    def to_dict(self) -> dict:
        return {"kind": "apr", "lo": self.lo.tolist(), "hi": self.hi.tolist(), "delta": self.delta}


@dataclass(frozen=True)
class HYPConcept:
    w: np.ndarray
    u: np.ndarray
    delta: float

    def __post_init__(self):
        w, u = _as_point(self.w), _as_point(self.u)
        if abs(np.linalg.norm(w) - 1) > 1e-9:
            raise UsageError("hyperplane normal must have unit length")
        if np.linalg.norm(u) > 1 + 1e-9:
            raise UsageError("shift vector must have norm at most 1")
        if self.delta <= 0:
            raise UsageError("margin must be positive")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)

    @property
    def d(self) -> int:
        return len(self.w)

    def evaluate(self, x) -> Optional[int]:
        x = _as_point(x)
        if np.linalg.norm(x) > 1 + _UNIVERSE_TOL:
            raise UsageError("context outside the unit L2 ball")
        s = float(self.w @ (x + self.u))
        if s >= self.delta:
            return 1
        return -1 if s < -self.delta else None

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = (X + self.u) @ self.w
        return np.where(s >= self.delta, 1, np.where(s < -self.delta, -1, 0))

    def to_dict(self) -> dict:
        return {"kind": "hyp", "w": self.w.tolist(), "u": self.u.tolist(), "delta": self.delta}


Concept = Union[APRConcept, HYPConcept]


def concept_eval(c: Concept, x) -> Optional[int]:
    return c.evaluate(x)


def concept_from_dict(data: dict) -> Concept:
    if data["kind"] == "apr":
        return APRConcept(data["lo"], data["hi"], float(data["delta"]))
    if data["kind"] == "hyp":
        return HYPConcept(data["w"], data["u"], float(data["delta"]))
    raise UsageError(f"unknown concept kind {data['kind']!r}")


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def linf_distance_to_rect(x, rect) -> float:
    """L-infinity distance from ``x`` to the box ``rect = (lo, hi)``."""
    lo, hi = rect
    x = np.asarray(x, dtype=float)
    return float(np.max(np.maximum(np.maximum(lo - x, x - hi), 0.0)))


@dataclass
class HullProjection:
    point: np.ndarray
    distance: float
    weights: np.ndarray  # convex weights over the input points
    iterations: int


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights ``a`` (summing to 1) minimising ``|Q.T a|`` over the affine hull of rows of Q."""
    k = Q.shape[0]
    if k == 1:
        return np.ones(1)
    M = np.empty((k + 1, k + 1))
    M[:k, :k] = Q @ Q.T
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    M[k, k] = 0.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    a = sol[:k]
    return a / a.sum()


def project_onto_hull(x, points, tol: float = 1e-9, max_iter: int = 10_000) -> HullProjection:
    """Nearest point of ``conv(points)`` to ``x`` by Wolfe's minimum-norm-point method.

    The returned distance is certified: the gap between ``|z|`` and the
    supporting-hyperplane lower bound ``min_j q_j.z / |z|`` is at most ``tol``.
    """
    x = _as_point(x)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise UsageError("hull of an empty point set")
    Q = P - x
    m = Q.shape[0]
    first = int(np.argmin(np.einsum("ij,ij->i", Q, Q)))
    S = [first]
    lam = np.ones(1)
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"hull projection exceeded {max_iter} iterations")
        z = lam @ Q[S]
        zz = float(z @ z)
        nz = math.sqrt(zz)
        if nz <= tol:
            break
        proj = Q @ z
        j = int(np.argmin(proj))
        lower = max(0.0, float(proj[j]) / nz)
        if nz - lower <= tol:
            break
        if j in S:
            # no improving vertex left but the gap is still open
            if nz - lower <= 1e3 * tol:
                break
            raise ConvergenceError("hull projection stalled above tolerance")
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise ConvergenceError(f"hull projection exceeded {max_iter} iterations")
            a = _affine_minimizer(Q[S])
            if np.all(a > 1e-14):
                lam = a
                break
            # step from lam towards a until a weight hits zero
            diff = lam - a
            mask = (a <= 1e-14) & (diff > 0)
            theta = float(np.min(lam[mask] / diff[mask])) if mask.any() else 1.0
            theta = min(max(theta, 0.0), 1.0)
            lam = lam + theta * (a - lam)
            keep = lam > 1e-14
            if keep.all():
                keep[int(np.argmin(lam))] = False
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
            if len(S) == 1:
                lam = np.ones(1)
                break
    weights = np.zeros(m)
    weights[S] = lam
    z = lam @ Q[S]
    return HullProjection(x + z, float(np.linalg.norm(z)), weights, it)


def l2_distance_to_hull(x, points, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    return project_onto_hull(x, points, tol, max_iter).distance


def l2_distance_to_hull_bruteforce(x, points) -> float:
    """Exhaustive-face reference: project onto every affinely independent subset.

    Exponential in the number of points; meant for small test instances.
    """
    x = _as_point(x)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = P.shape
    best = float(np.min(np.linalg.norm(P - x, axis=1)))
    for size in range(2, min(m, d + 1) + 1):
        for idx in itertools.combinations(range(m), size):
            V = P[list(idx)]
            base = V[0]
            E = (V[1:] - base).T  # d x (size-1)
            if np.linalg.matrix_rank(E, tol=1e-10) < size - 1:
                continue
            coef, *_ = np.linalg.lstsq(E, x - base, rcond=None)
            bary = np.concatenate([[1 - coef.sum()], coef])
            if np.all(bary >= -1e-12):
                best = min(best, float(np.linalg.norm(base + E @ coef - x)))
    return best


# ---------------------------------------------------------------------------
# SafeCl
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConceptClass:
    """Concept class selector: ``kind`` is ``"apr"`` or ``"hyp"``."""

    kind: str
    d: int
    delta: float

    def __post_init__(self):
        if self.kind not in ("apr", "hyp"):
            raise UsageError(f"unknown concept class {self.kind!r}")
        if self.delta <= 0 or self.d < 1:
            raise UsageError("concept class needs d >= 1 and delta > 0")

    def in_universe(self, x) -> bool:
        x = _as_point(x)
        norm = np.max(np.abs(x)) if self.kind == "apr" else np.linalg.norm(x)
        return bool(norm <= 1 + _UNIVERSE_TOL)

    def safecl(self) -> "SafeCl":
        return SafeClAPR(self.d, self.delta) if self.kind == "apr" else SafeClHYP(self.d, self.delta)

    def diameter_bound(self) -> float:
        """Upper bound on the class diameter on its unit ball."""
        if self.kind == "apr":
            return self.d * (2 / self.delta + 2) + 1
        return (1 + 1 / self.delta) ** self.d

    def witness(self, x, prefix: Sequence) -> Concept:
        """A concept that is +1 at ``x`` and -1 on every point of ``prefix``.

        Only valid when SafeCl trained on ``prefix`` predicts ``x`` positive.
        """
        x = _as_point(x)
        if self.kind == "apr":
            if len(prefix) == 0:
                far = x.copy()
                far[0] += 2 * self.delta if x[0] <= 0 else -2 * self.delta
                return APRConcept(far, far, self.delta)
            N = np.asarray(prefix, dtype=float)
            return APRConcept(N.min(axis=0), N.max(axis=0), self.delta)
        if len(prefix) == 0:
            nx = np.linalg.norm(x)
            w = x / nx if nx > 0 else np.eye(self.d)[0]
            c = min(1.0, 1.5 * self.delta) - float(w @ x)
            return HYPConcept(w, c * w, self.delta)
        proj = project_onto_hull(x, prefix)
        D = proj.distance
        w = (x - proj.point) / D
        c = -(float(w @ proj.point) + D / 2)
        return HYPConcept(w, c * w, self.delta)


class SafeCl:
    """Base for safe classifiers; ``predict`` returns True for "positive"."""

    def __init__(self, d: int, delta: float):
        self.d = d
        self.delta = delta
        self.negatives: list[np.ndarray] = []

    def predict(self, x) -> bool:
        raise NotImplementedError

    def feed(self, x) -> None:
        raise NotImplementedError

    @property
    def n_feeds(self) -> int:
        return len(self.negatives)


class SafeClAPR(SafeCl):
    """Keeps the bounding box of all false-labelled samples.

    Negative iff the L-infinity distance to the box is at most ``delta``
    (plus the rounding slack); positive on every point while no sample
    has been fed.
    """

    def __init__(self, d: int, delta: float):
        super().__init__(d, delta)
        self.lo: Optional[np.ndarray] = None
        self.hi: Optional[np.ndarray] = None
        self._lo_m = None
        self._hi_m = None

    @property
    def rect(self):
        return None if self.lo is None else (self.lo.copy(), self.hi.copy())

    def distance(self, x) -> float:
        if self.lo is None:
            return math.inf
        return linf_distance_to_rect(x, (self.lo, self.hi))

    def predict(self, x) -> bool:
        if self._lo_m is None:
            return True
        return bool((x < self._lo_m).any() or (x > self._hi_m).any())

    def feed(self, x) -> None:
        x = _as_point(x).copy()
        self.negatives.append(x)
        if self.lo is None:
            self.lo, self.hi = x.copy(), x.copy()
        else:
            np.minimum(self.lo, x, out=self.lo)
            np.maximum(self.hi, x, out=self.hi)
        self._lo_m = self.lo - (self.delta + ROUNDING_SLACK)
        self._hi_m = self.hi + (self.delta + ROUNDING_SLACK)


class SafeClHYP(SafeCl):
    """Keeps every false-labelled sample; negative within ``2*delta`` of their hull."""

    def __init__(self, d: int, delta: float):
        super().__init__(d, delta)
        self._pts: Optional[np.ndarray] = None

    def distance(self, x) -> float:
        if self._pts is None:
            return math.inf
        return l2_distance_to_hull(x, self._pts)

    def predict(self, x) -> bool:
        if self._pts is None:
            return True
        x = np.asarray(x, dtype=float)
        radius = 2 * self.delta + ROUNDING_SLACK
        # every sample lies in the hull, so being near one settles it
        if float(np.min(np.einsum("ij,ij->i", self._pts - x, self._pts - x))) <= radius * radius:
            return False
        return l2_distance_to_hull(x, self._pts) > radius

    def feed(self, x) -> None:
        x = _as_point(x).copy()
        self.negatives.append(x)
        self._pts = np.array(self.negatives)


class OracleClassifier:
    """Reports the true concept's verdict; used for oracle-equivalence checks."""

    def __init__(self, concept: Concept):
        self.concept = concept
        self.negatives: list[np.ndarray] = []

    def predict(self, x) -> bool:
        return bool(self.concept.evaluate_many(x)[0] == 1)

    def feed(self, x) -> None:
        self.negatives.append(_as_point(x).copy())

    @property
    def n_feeds(self) -> int:
        return len(self.negatives)


class ConstantClassifier:
    """Always predicts the same label and ignores feedback."""

    def __init__(self, positive: bool):
        self.positive = positive
        self.negatives: list[np.ndarray] = []

    def predict(self, x) -> bool:
        return self.positive

    def feed(self, x) -> None:
        self.negatives.append(_as_point(x).copy())

    @property
    def n_feeds(self) -> int:
        return len(self.negatives)


# ---------------------------------------------------------------------------
# Diameter certificates
# ---------------------------------------------------------------------------


@dataclass
class DiameterCertificate:
    sequence: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.sequence)

    def verify(self) -> bool:
        """Each witness is +1 on its point and -1 on every earlier point."""
        for t, (x, f) in enumerate(zip(self.sequence, self.witnesses)):
            if f.evaluate_many(x)[0] != 1:
                return False
            if t and np.any(f.evaluate_many(np.array(self.sequence[:t])) != -1):
                return False
        return True


def universe_grid(cls: ConceptClass, step: float, max_points: int = 200_000) -> np.ndarray:
    """Regular grid over ``[-1, 1]^d`` clipped to the class universe."""
    axis = np.round(np.arange(-1.0, 1.0 + step / 2, step), 12)
    axis = axis[np.abs(axis) <= 1.0]
    if len(axis) ** cls.d > max_points:
        raise ResourceLimitError(f"grid with {len(axis) ** cls.d} points exceeds {max_points}")
    pts = np.array(list(itertools.product(axis, repeat=cls.d)), dtype=float).reshape(-1, cls.d)
    if cls.kind == "hyp":
        pts = pts[np.linalg.norm(pts, axis=1) <= 1 + _UNIVERSE_TOL]
    return pts


def diameter_bruteforce(cls: ConceptClass, grid, max_points: int = 200_000,
                        seed_negatives: Sequence = ()) -> DiameterCertificate:
    """Greedy sequence over ``grid`` in which every point is a SafeCl positive given its prefix.

    The result is a lower bound on the class diameter restricted to the
    grid. ``seed_negatives`` are fed first (and kept negative by every
    witness) without joining the sequence.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float)) if len(grid) else np.empty((0, cls.d))
    if grid.shape[0] > max_points:
        raise ResourceLimitError(f"grid has {grid.shape[0]} points, cap is {max_points}")
    for x in list(grid) + list(seed_negatives):
        if not cls.in_universe(x):
            raise UsageError("grid point outside the concept class universe")
    clf = cls.safecl()
    prefix = [np.asarray(s, dtype=float) for s in seed_negatives]
    for s in prefix:
        clf.feed(s)
    cert = DiameterCertificate()
    for x in grid:
        if clf.predict(x):
            cert.witnesses.append(cls.witness(x, prefix))
            cert.sequence.append(x.copy())
            prefix.append(x.copy())
            clf.feed(x)
    return cert
