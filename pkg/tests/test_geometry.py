import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridnav.errors import TargetTooClose
from hybridnav.geometry import (Covering, Point2, as_point, build_covering, dist_and_gradient,
                                dist_to_complement, dist_to_complement_many, in_region,
                                in_region_many, nearest_in_complement)

C = 2.0 * math.sqrt(2.0)
coord = st.floats(-50, 50, allow_nan=False)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        as_point((math.nan, 0.0))
    assert as_point([1, 2]) == Point2(1.0, 2.0)


def test_diamond_vertices_for_unit_obstacle(unit_cov):
    verts = sorted(tuple(round(c, 12) for c in v) for v in unit_cov.diamond_vertices())
    expected = sorted([(round(C, 12), 0.0), (round(-C, 12), 0.0), (0.0, round(C, 12)), (0.0, round(-C, 12))])
    assert verts == expected
    assert in_region(unit_cov, 1, (10, 0)) and in_region(unit_cov, 2, (10, 0))


def test_target_too_close():
    with pytest.raises(TargetTooClose):
        build_covering((0, 0), 1.0, (2, 0), 0.5)
    with pytest.raises(TargetTooClose):
        build_covering((0, 0), 1.0, (C + 0.5, 0), 0.5)


def test_rotated_frame_for_target_on_y_axis():
    cov = build_covering((0, 0), 1.0, (0, 10), 0.5)
    assert math.isclose(cov.angle, math.pi / 2)
    assert in_region(cov, 1, (0, 10)) and in_region(cov, 2, (0, 10))
    verts = np.array(cov.diamond_vertices())
    assert np.allclose(np.sort(np.abs(verts).max(axis=1)), [C] * 4)
    # the diamond is the same set of points in the world frame
    for p in [(0.0, 0.0), (1.0, 1.0), (-1.5, 0.5)]:
        assert not in_region(cov, 1, p) and not in_region(cov, 2, p)


@pytest.mark.parametrize("q,p,expected", [
    (1, (10, 0), True), (1, (0, 5), False), (2, (0, 5), True),
    (1, (0, 0), False), (2, (0, 0), False),
])
def test_in_region_examples(unit_cov, q, p, expected):
    assert in_region(unit_cov, q, p) is expected


def test_boundary_is_open_but_in_closure(unit_cov):
    edge = (5.0, 5.0 - C)  # on the line v = u - c
    assert not in_region(unit_cov, 1, edge)
    assert in_region(unit_cov, 1, edge, tol=1e-9)
    assert unit_cov.in_closure_O(edge)


@pytest.mark.parametrize("p,expected", [
    ((0, -10), 10 - C), ((10, 0), 5 * math.sqrt(2) - 2), ((0, 0), 0.0),
])
def test_dist_to_complement_examples(unit_cov, p, expected):
    assert dist_to_complement(unit_cov, 1, p) == pytest.approx(expected, abs=1e-12)


def test_gradient_of_distance_is_unit_normal(unit_cov):
    d, gx, gy = dist_and_gradient(unit_cov, 1, (0, -10))
    assert d == pytest.approx(10 - C)
    assert (gx, gy) == pytest.approx((0.0, -1.0))
    d, gx, gy = dist_and_gradient(unit_cov, 1, (10, 0))
    assert (gx, gy) == pytest.approx((1 / math.sqrt(2), -1 / math.sqrt(2)))


def test_nearest_point_realizes_distance(unit_cov):
    p = (7.0, -3.0)
    n = nearest_in_complement(unit_cov, 1, p)
    assert math.hypot(p[0] - n.x, p[1] - n.y) == pytest.approx(dist_to_complement(unit_cov, 1, p))
    assert dist_to_complement(unit_cov, 1, n) < 1e-12


def test_set_identity_and_obstacle_exclusion_on_samples(noisy_dropout):
    cov = noisy_dropout.covering()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-40, 40, size=(10_000, 2))
    union = in_region_many(cov, 1, pts) | in_region_many(cov, 2, pts)
    u, v = cov.local_many(pts)
    in_diamond = np.abs(u) + np.abs(v) <= cov.offset
    assert np.array_equal(union, ~in_diamond)
    r = 4.0 * np.sqrt(rng.uniform(0, 1, 10_000))
    th = rng.uniform(0, 2 * np.pi, 10_000)
    obs = np.column_stack([r * np.cos(th), r * np.sin(th)])
    assert not (in_region_many(cov, 1, obs) | in_region_many(cov, 2, obs)).any()


def test_inscribed_and_circumscribed_radius(noisy_dropout):
    cov = noisy_dropout.covering()
    assert cov.inscribed_radius == pytest.approx(2 * 4.0)
    assert cov.circumscribed_radius == pytest.approx(2 * math.sqrt(2) * 4.0)


def test_target_clearance_on_unit_world(unit_cov):
    for q in (1, 2):
        assert dist_to_complement(unit_cov, q, unit_cov.target) > 2 * unit_cov.obstacle.radius


def test_target_outside_barrier_layer_on_default_world(noisy_dropout):
    cov = noisy_dropout.covering()
    for q in (1, 2):
        assert dist_to_complement(cov, q, cov.target) > math.sqrt(noisy_dropout.rho_b)


def test_vectorized_matches_scalar(noisy_dropout):
    cov = noisy_dropout.covering()
    rng = np.random.default_rng(3)
    pts = rng.uniform(-30, 30, size=(200, 2))
    for q in (1, 2):
        d = dist_to_complement_many(cov, q, pts)
        inside = in_region_many(cov, q, pts)
        for i, p in enumerate(pts):
            assert d[i] == pytest.approx(dist_to_complement(cov, q, p), abs=1e-12)
            assert inside[i] == in_region(cov, q, p)


def test_serialization_round_trip(noisy_dropout):
    cov = noisy_dropout.covering()
    again = Covering.from_dict(cov.to_dict())
    assert again == cov


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord), st.tuples(coord, coord), st.sampled_from([1, 2]),
       st.floats(0, 2 * math.pi))
def test_distance_is_one_lipschitz(p, p2, q, ang):
    cov = build_covering((1.0, -2.0), 2.0, (1.0 + 20 * math.cos(ang), -2.0 + 20 * math.sin(ang)))
    d1, d2 = dist_to_complement(cov, q, p), dist_to_complement(cov, q, p2)
    assert abs(d1 - d2) <= math.hypot(p[0] - p2[0], p[1] - p2[1]) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord), st.sampled_from([1, 2]), st.floats(0, 2 * math.pi))
def test_zero_distance_iff_in_closed_wedge(p, q, ang):
    cov = build_covering((0.0, 0.0), 1.5, (15 * math.cos(ang), 15 * math.sin(ang)))
    d = dist_to_complement(cov, q, p)
    assert (d == 0.0) == (not in_region(cov, q, p)) or d < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.1, 5.0), st.floats(0.01, 5.0))
def test_target_in_both_regions_any_direction(ang, rho, extra):
    dist = 2 * math.sqrt(2) * rho + extra
    cov = build_covering((3.0, 4.0), rho, (3.0 + dist * math.cos(ang), 4.0 + dist * math.sin(ang)))
    assert in_region(cov, 1, cov.target) and in_region(cov, 2, cov.target)
