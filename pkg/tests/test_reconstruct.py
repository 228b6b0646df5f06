import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enclosure.errors import ConfigError, EmptyHullError
from enclosure.geometry import DomainSpec, InclusionSpec, directions, true_support
from enclosure.reconstruct import (SweepConfig, clip_polygon, hausdorff_convex, hull_from_support, is_convex,
                                   required_T, time_budget_check)

SQUARE = DomainSpec.rectangle(-1, 1, -1, 1, 16)
BBOX = (-1.0, 1.0, -1.0, 1.0)
DISK = InclusionSpec.disk((0.3, -0.2), 0.25, 3.0)


def exact(inclusions, n):
    return [(w, true_support(inclusions, w), 0.0) for w in directions(n)]


# time budget

def test_auto_slowness_on_the_square():
    d = time_budget_check(1.0, None, SQUARE, (1, 0))
    assert d.accepted and d.width == 2.0
    assert abs(d.c - 0.225) < 1e-15


def test_explicit_c_rejected_when_budget_too_small():
    d = time_budget_check(1.0, 1.0, SQUARE, (1, 0))
    assert not d.accepted and "T = 1" in d.reason
    assert time_budget_check(4.01, 1.0, SQUARE, (1, 0)).accepted
    cgo = time_budget_check(1.0, 1.0, SQUARE, (1, 0), kind="cgo")
    assert not cgo.accepted and cgo.reason.startswith("T too small for required c")


def test_real_probes_need_no_budget():
    assert time_budget_check(1e-3, None, SQUARE, (1, 0), kind="real").accepted


def test_required_T_inverts_the_auto_rule():
    w = (np.cos(0.4), np.sin(0.4))
    T = required_T(0.3, SQUARE, w)
    assert abs(time_budget_check(T, None, SQUARE, w).c - 0.3) < 1e-14


def test_sweep_config_preconditions():
    with pytest.raises(ConfigError):
        SweepConfig(n_directions=2)
    with pytest.raises(ConfigError):
        SweepConfig(T=0.0)
    with pytest.raises(ConfigError):
        SweepConfig(kind="sonar")
    with pytest.raises(ConfigError):
        SweepConfig(c_policy=1.0).slowness(SQUARE)


# hull

def test_hull_of_exact_disk_supports():
    hull = hull_from_support(exact([DISK], 16), BBOX)
    r = 0.25
    # circumscribed regular 16-gon: vertices sit at r / cos(pi/16) from the centre
    dist = np.hypot(*(hull.vertices - np.array([0.3, -0.2])).T) - r
    bound = r * (1 / math.cos(math.pi / 16) - 1)
    assert dist.max() <= bound + 1e-9
    assert abs(hausdorff_convex(hull.support, DISK.support) - dist.max()) < 1e-3
    assert is_convex(hull.vertices)


def test_square_inclusion_recovered_exactly():
    sq = InclusionSpec.polygon([(-0.2, -0.1), (0.3, -0.1), (0.3, 0.4), (-0.2, 0.4)], 2.0)
    hull = hull_from_support(exact([sq], 4), BBOX)
    got = sorted(map(tuple, np.round(hull.vertices, 12)))
    assert got == sorted([(-0.2, -0.1), (0.3, -0.1), (0.3, 0.4), (-0.2, 0.4)])


def test_inflated_estimate_is_slack():
    base = exact([DISK], 16)
    w, h, se = base[5]
    bumped = base[:5] + [(w, h + 10, se)] + base[6:]
    dropped = base[:5] + [(w, math.nan, se)] + base[6:]
    a = hull_from_support(bumped, BBOX).vertices
    b = hull_from_support(dropped, BBOX).vertices
    assert np.array_equal(a, b)


def test_vertices_satisfy_every_constraint():
    est = exact([DISK], 16)
    hull = hull_from_support(est, BBOX)
    for w, h, _ in est:
        assert np.all(hull.vertices @ np.asarray(w) <= h + 1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_rotation_covariance(phi):
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    sq = [(-0.2, -0.1), (0.3, -0.1), (0.3, 0.2), (-0.2, 0.2)]
    a = InclusionSpec.polygon(sq, 2.0)
    b = InclusionSpec.polygon([tuple(R @ p) for p in sq], 2.0)
    ws = directions(12)
    big = (-10.0, 10.0, -10.0, 10.0)
    ha = hull_from_support([(w, a.support(w), 0.0) for w in ws], big)
    hb = hull_from_support([(R @ w, b.support(R @ w), 0.0) for w in ws], big)
    rot = ha.vertices @ R.T
    assert len(rot) == len(hb.vertices)
    for v in rot:
        assert np.min(np.hypot(*(hb.vertices - v).T)) < 1e-9


def test_more_directions_shrink_the_hull():
    coarse = hull_from_support(exact([DISK], 8), BBOX)
    fine = hull_from_support(exact([DISK], 32), BBOX)
    # every N = 8 direction is also an N = 32 direction
    for w in directions(8):
        assert fine.support(w) <= coarse.support(w) + 1e-12
    assert fine.area < coarse.area


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 0.05), min_size=16, max_size=16), st.floats(0.0, 0.03))
def test_containment_with_tolerance(errs, tol):
    est = [(w, h - e * tol / 0.05, tol) for (w, h, _), e in zip(exact([DISK], 16), errs)]
    hull = hull_from_support(est, BBOX)
    pts = DISK.outline(512)
    # the disk lies inside the hull dilated by tol: every support of the disk is within tol
    for w in directions(64):
        assert DISK.support(w) <= hull.support(w) + tol + 1e-9
    assert np.all(pts @ np.array([1.0, 0.0]) <= hull.support((1.0, 0.0)) + tol + 1e-9)


def test_two_directions_rejected():
    with pytest.raises(ConfigError):
        hull_from_support(exact([DISK], 16)[:2], BBOX)


def test_inconsistent_estimates_are_relaxed():
    est = exact([DISK], 8)
    w0, h0, _ = est[0]
    w4, h4, _ = est[4]   # opposite direction
    est[0] = (w0, h0 - 0.6, 0.05)
    est[4] = (w4, h4 - 0.6, 0.2)
    hull = hull_from_support(est, BBOX)
    assert len(hull.vertices) >= 3 and hull.relaxations
    assert hull.relaxations[0]["index"] == 4   # least confident first
    assert all(r["delta"] in (0.1, 0.4) for r in hull.relaxations)


def test_irrecoverable_intersection_reported():
    est = exact([DISK], 8)
    est[0] = (est[0][0], est[0][1] - 2.0, 0.0)
    est[4] = (est[4][0], est[4][1] - 2.0, 0.0)
    with pytest.raises(EmptyHullError):
        hull_from_support(est, BBOX)


def test_clip_keeps_orientation_and_handles_full_cut():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    half = clip_polygon(sq, (1, 0), 0.5)
    assert is_convex(half) and abs(half[:, 0].max() - 0.5) < 1e-15
    assert len(clip_polygon(sq, (1, 0), -1.0)) == 0
