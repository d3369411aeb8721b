from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventful.classifier import (
    APRConcept,
    ConceptClass,
    ConvergenceError,
    DiameterCertificate,
    HYPConcept,
    SafeClAPR,
    SafeClHYP,
    concept_eval,
    concept_from_dict,
    diameter_bruteforce,
    l2_distance_to_hull,
    l2_distance_to_hull_bruteforce,
    linf_distance_to_rect,
    project_onto_hull,
    universe_grid,
)
from eventful.core import ResourceLimitError, UsageError

UNIT_SQUARE = APRConcept([0, 0], [1, 1], 0.5)


# ---------------------------------------------------------------------------
# concepts
# ---------------------------------------------------------------------------


def test_apr_eval():
    # the unit-square examples scaled by 1/2 so the point stays in the L-infinity ball
    c = APRConcept([0, 0], [0.5, 0.5], 0.25)
    assert concept_eval(c, (1.0, 0.25)) == 1
    assert concept_eval(c, (0.25, 0.25)) == -1
    assert concept_eval(c, (0.6, 0.25)) is None
    with pytest.raises(UsageError):
        concept_eval(UNIT_SQUARE, (2, 0.5))


def test_hyp_eval():
    c = HYPConcept([1, 0], [0, 0], 0.1)
    assert concept_eval(c, (0.05, 0)) is None
    assert concept_eval(c, (0.1, 0)) == 1
    assert concept_eval(c, (-0.5, 0)) == -1
    with pytest.raises(UsageError):
        concept_eval(c, (0.9, 0.9))


def test_concept_validation():
    with pytest.raises(UsageError):
        APRConcept([0.5], [0.0], 0.1)
    with pytest.raises(UsageError):
        HYPConcept([1, 1], [0, 0], 0.1)
    with pytest.raises(UsageError):
        HYPConcept([1, 0], [2, 0], 0.1)


@pytest.mark.parametrize("c", [APRConcept([-0.2, 0], [0.3, 0.1], 0.2),
                               HYPConcept([0.6, 0.8], [0.1, 0], 0.15)])
def test_concept_roundtrip_and_vectorised_eval(c):
    again = concept_from_dict(c.to_dict())
    X = np.random.default_rng(0).uniform(-0.7, 0.7, (200, 2))
    codes = c.evaluate_many(X)
    assert np.array_equal(codes, again.evaluate_many(X))
    assert [{1: 1, -1: -1, 0: None}[int(v)] for v in codes] == [c.evaluate(x) for x in X]


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("x,expected", [((2, 0.5), 1.0), ((0.5, 0.5), 0.0), ((2, 3), 2.0)])
def test_linf_distance(x, expected):
    assert linf_distance_to_rect(x, (np.zeros(2), np.ones(2))) == expected


@pytest.mark.parametrize("points,x,expected", [
    ([(0, 0)], (3, 4), 5.0),
    ([(0, 0), (2, 0)], (1, 1), 1.0),
    ([(0, 0), (1, 0), (0, 1), (1, 1)], (0.5, 0.5), 0.0),
    ([(0, 0), (0, 1), (1, 0)], (0.4, 0.4), 0.0),
])
def test_hull_distance_examples(points, x, expected):
    assert l2_distance_to_hull(x, points) == pytest.approx(expected, abs=1e-9)
    assert l2_distance_to_hull_bruteforce(x, points) == pytest.approx(expected, abs=1e-12)


def test_hull_projection_matches_exhaustive_faces():
    rng = np.random.default_rng(17)
    for _ in range(300):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(1, 8))
        P = rng.normal(size=(m, d))
        x = rng.normal(size=d) * 2
        proj = project_onto_hull(x, P)
        ref = l2_distance_to_hull_bruteforce(x, P)
        assert proj.distance == pytest.approx(ref, abs=1e-7)
        assert np.all(proj.weights >= 0) and proj.weights.sum() == pytest.approx(1.0)
        assert np.allclose(proj.weights @ P, proj.point)


def test_hull_iteration_cap_raises():
    P = np.random.default_rng(1).normal(size=(40, 5))
    with pytest.raises(ConvergenceError):
        project_onto_hull(np.full(5, 3.0), P, max_iter=2)


def test_hull_of_nothing():
    with pytest.raises(UsageError):
        l2_distance_to_hull((0, 0), np.empty((0, 2)))


# ---------------------------------------------------------------------------
# SafeCl
# ---------------------------------------------------------------------------


def test_safecl_examples():
    apr = SafeClAPR(2, 0.5)
    assert apr.predict(np.array([0.3, 0.2]))
    apr.feed((0, 0))
    assert not apr.predict(np.array([0.3, 0.2]))
    assert apr.predict(np.array([0.9, 0.0]))
    hyp = SafeClHYP(2, 0.2)
    hyp.feed((0, 0))
    assert hyp.distance((0.5, 0)) == pytest.approx(0.5)
    assert hyp.predict(np.array([0.5, 0.0]))
    assert not hyp.predict(np.array([0.4, 0.0]))


def test_safecl_feed_examples():
    apr = SafeClAPR(2, 0.1)
    apr.feed((0, 0))
    apr.feed((1, 0))
    lo, hi = apr.rect
    assert lo.tolist() == [0, 0] and hi.tolist() == [1, 0]
    for _ in range(5):
        apr.feed((1, 0))
    assert [v.tolist() for v in apr.rect] == [[0, 0], [1, 0]]
    hyp = SafeClHYP(2, 0.01)
    for p in [(0, 0), (0, 1), (1, 0)]:
        hyp.feed(p)
    assert hyp.distance((0.4, 0.4)) == pytest.approx(0.0, abs=1e-9)
    assert not hyp.predict(np.array([0.4, 0.4]))


def random_concept(rng, kind, d):
    delta = float(rng.uniform(0.1, 0.5))
    if kind == "apr":
        a, b = rng.uniform(-1, 1, (2, d))
        return APRConcept(np.minimum(a, b), np.maximum(a, b), delta)
    w = rng.normal(size=d)
    u = rng.normal(size=d)
    return HYPConcept(w / np.linalg.norm(w), u / np.linalg.norm(u) * rng.uniform(0, 1), delta)


def random_context(rng, kind, d):
    x = rng.uniform(-1, 1, d)
    if kind == "hyp":
        x *= rng.uniform() ** (1 / d) / np.linalg.norm(x)
    return x


@pytest.mark.parametrize("kind", ["apr", "hyp"])
def test_safety_and_fp_bound(kind):
    # 5000 adversarial episodes per class; feeds are exactly the correctly labelled false positives
    rng = np.random.default_rng({"apr": 101, "hyp": 202}[kind])
    violations = 0
    for _ in range(5000):
        d = int(rng.integers(1, 3))
        f = random_concept(rng, kind, d)
        cls = ConceptClass(kind, d, f.delta)
        clf = cls.safecl()
        fps = 0
        for _ in range(25):
            x = random_context(rng, kind, d)
            y = f.evaluate(x)
            if clf.predict(x):
                if y == -1:
                    fps += 1
                    clf.feed(x)
            elif y == 1:
                violations += 1
        assert fps <= cls.diameter_bound()
    assert violations == 0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["apr", "hyp"]), st.integers(0, 2**32 - 1))
def test_monotone_in_feeds(kind, seed):
    rng = np.random.default_rng(seed)
    d = 2
    clf = ConceptClass(kind, d, 0.2).safecl()
    probes = [random_context(rng, kind, d) for _ in range(30)]
    before = [clf.predict(x) for x in probes]
    for _ in range(6):
        clf.feed(random_context(rng, kind, d))
        after = [clf.predict(x) for x in probes]
        assert all(b or not a for b, a in zip(before, after))  # negative stays negative
        before = after


# ---------------------------------------------------------------------------
# diameter
# ---------------------------------------------------------------------------


def test_diameter_apr_one_dim():
    cls = ConceptClass("apr", 1, 0.5)
    cert = diameter_bruteforce(cls, universe_grid(cls, 0.1))
    # greedy over the grid is its own oracle: -1, -0.4, 0.2, 0.8
    assert [round(float(x[0]), 10) for x in cert.sequence] == [-1.0, -0.4, 0.2, 0.8]
    assert 3 <= cert.length <= cls.diameter_bound() == 7
    assert cert.verify()


def test_diameter_hyp_two_dim():
    cls = ConceptClass("hyp", 2, 0.25)
    cert = diameter_bruteforce(cls, universe_grid(cls, 0.1))
    assert cls.diameter_bound() == 25
    assert 1 <= cert.length <= 25
    assert cert.verify()


def test_diameter_empty_grid():
    cls = ConceptClass("apr", 2, 0.3)
    assert diameter_bruteforce(cls, np.empty((0, 2))).length == 0


def test_certificate_verify_rejects_bad_witness():
    cls = ConceptClass("apr", 1, 0.5)
    cert = diameter_bruteforce(cls, universe_grid(cls, 0.1))
    bad = DiameterCertificate(cert.sequence, [cert.witnesses[0]] * cert.length)
    assert not bad.verify()


def test_grid_resource_limit():
    with pytest.raises(ResourceLimitError):
        universe_grid(ConceptClass("apr", 6, 0.1), 0.01)
    with pytest.raises(ResourceLimitError):
        diameter_bruteforce(ConceptClass("apr", 1, 0.1), np.zeros((11, 1)), max_points=10)


def test_grid_outside_universe():
    with pytest.raises(UsageError):
        diameter_bruteforce(ConceptClass("hyp", 2, 0.1), [(0.9, 0.9)])


@pytest.mark.parametrize("kind", ["apr", "hyp"])
def test_witness_keeps_seed_negative(kind):
    cls = ConceptClass(kind, 2, 0.2)
    seed = np.array([-1.0, -1.0]) if kind == "apr" else np.array([-1.0, 0.0])
    cert = diameter_bruteforce(cls, universe_grid(cls, 0.25), seed_negatives=[seed])
    assert cert.verify()
    assert all(w.evaluate(seed) == -1 for w in cert.witnesses)
    assert math.isfinite(cert.length)
