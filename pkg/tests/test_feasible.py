import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paretotame import dsl
from paretotame.feasible import (Cell, DegenerateCornerError, FeasibleError, FeasibleSet, contains, grid,
                                 normal_cone)
from paretotame.sections import sublevel

INF = np.inf


def quadrant():
    return FeasibleSet([Cell([0, 0], [INF, INF])])


def rays_set(cone):
    return sorted(tuple(np.round(r, 12) + 0.0) for r in cone.rays)


def test_quadrant_contains_interior_point():
    assert contains(quadrant(), [1, 1])


def test_quadrant_rejects_point_outside_by_more_than_tol():
    assert not contains(quadrant(), [-0.1, 0], 1e-9)


def test_negative_tolerance_rejected():
    with pytest.raises(FeasibleError):
        contains(quadrant(), [1, 1], -1.0)


@pytest.mark.parametrize("k", [0, 1, 3, 17])
def test_interval_union_contains_probe_points(problems, k):
    K = problems("ex_5_2").K
    assert contains(K, [-3 * math.pi / 4 + 2 * k * math.pi])


def test_interval_union_gaps_are_excluded(problems):
    K = problems("ex_5_2").K
    # (pi/2, pi) lies between consecutive intervals
    assert not contains(K, [3 * math.pi / 4 + 2 * 3 * math.pi])
    # no translates with negative k
    assert not contains(K, [-3 * math.pi / 4 - 2 * math.pi])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(0, 1e-3), st.floats(0, 1e-3))
def test_membership_is_monotone_in_tolerance(x, t1, t2):
    K = FeasibleSet([Cell([-1, 0], [INF, INF], affine=[([1, 1], 1.0)], smooth=[dsl.parse("x1^2 - x2 - 1", dim=2)])])
    lo, hi = sorted([t1, t2])
    if contains(K, x, lo):
        assert contains(K, x, hi)


def test_interior_point_has_zero_cone():
    cone = normal_cone(quadrant(), [1.0, 2.0])
    assert len(cone.rays) == 0 and len(cone.lineality) == 0
    assert not cone.junction


def test_orthant_corner_rays():
    cone = normal_cone(quadrant(), [0.0, 0.0])
    assert rays_set(cone) == [(-1.0, 0.0), (0.0, -1.0)]


@pytest.mark.parametrize("k", [0, 1, 4])
def test_interval_left_endpoint_ray(problems, k):
    cone = normal_cone(problems("ex_5_2").K, [-math.pi + 2 * k * math.pi])
    assert rays_set(cone) == [(-1.0,)]


def test_interval_right_endpoint_ray(problems):
    cone = normal_cone(problems("ex_5_2").K, [math.pi / 2 + 2 * math.pi])
    assert rays_set(cone) == [(1.0,)]


def test_affine_and_smooth_active_normals():
    K = FeasibleSet([Cell([-INF, -INF], [INF, INF], affine=[([1, 1], 2.0)],
                          smooth=[dsl.parse("x1^2 + x2^2 - 2", dim=2)])])
    cone = normal_cone(K, [1.0, 1.0])
    got = cone.rays / np.linalg.norm(cone.rays, axis=1)[:, None]
    assert np.allclose(got, [[1, 1]] / np.sqrt(2))


def test_three_affine_constraints_through_one_point_are_degenerate():
    K = FeasibleSet([Cell([-INF, -INF], [INF, INF],
                          affine=[([1, 0], 0.0), ([0, 1], 0.0), ([1, 1], 0.0)])])
    with pytest.raises(DegenerateCornerError) as info:
        normal_cone(K, [0.0, 0.0])
    assert "degenerate-corner" in str(info.value)
    assert "(0, 0)" in str(info.value)


def test_junction_of_two_cells_returns_pieces():
    K = FeasibleSet([Cell([-1, -1], [0, 1]), Cell([0, -1], [1, 1])])
    cone = normal_cone(K, [0.0, 0.0])
    assert cone.junction and len(cone.pieces) == 2
    with pytest.raises(FeasibleError):
        cone.rays


def sample_feasible_near(K, x, rng, radius=1e-3, count=4000):
    Y = x[:, None] + rng.uniform(-radius, radius, size=(len(x), count))
    keep = K.contains_many(Y, 0.0)
    return Y[:, keep]


CONE_CASES = [
    ("quadrant corner", lambda: quadrant(), [0.0, 0.0]),
    ("quadrant edge", lambda: quadrant(), [0.0, 3.0]),
    ("disc boundary", lambda: FeasibleSet([Cell([-INF, -INF], [INF, INF], smooth=[dsl.parse("x1^2 + x2^2 - 1", dim=2)])]),
     [math.cos(0.3), math.sin(0.3)]),
    ("wedge", lambda: FeasibleSet([Cell([-INF, -INF], [INF, INF], affine=[([1, -2], 0.0), ([-3, 1], 0.0)])]), [0.0, 0.0]),
    ("box corner with halfplane", lambda: FeasibleSet([Cell([0, -INF], [INF, INF], affine=[([1, -1], 0.0)])]), [0.0, 0.0]),
]


@pytest.mark.parametrize("name, make, x", CONE_CASES, ids=[c[0] for c in CONE_CASES])
def test_rays_satisfy_regular_normal_inequality(name, make, x, rng):
    K = make()
    x = np.array(x)
    cone = normal_cone(K, x)
    Y = sample_feasible_near(K, x, rng)
    assert Y.shape[1] > 100
    D = Y - x[:, None]
    dist = np.linalg.norm(D, axis=0)
    for v in cone.rays:
        v = v / np.linalg.norm(v)
        assert np.all(v @ D <= 1e-6 * dist + 1e-15)
        # combinations of rays are normals too
    if len(cone.rays) > 1:
        w = rng.uniform(0, 1, size=(50, len(cone.rays))) @ cone.rays
        assert np.all(w @ D <= 1e-6 * dist * np.linalg.norm(w, axis=1)[:, None] + 1e-15)


def test_grid_unit_square_three_by_three():
    X = grid(quadrant(), [0, 1, 0, 1], 3)
    assert X.shape == (9, 2)
    assert np.allclose(X[:3], [[0, 0], [0, 0.5], [0, 1]])  # row-major: last axis fastest


def test_grid_degenerate_axis():
    K = FeasibleSet([Cell([-1, -INF], [INF, INF])])
    X = grid(K, [-2, 0, 0, 0], [5, 1])
    assert np.allclose(X, [[-1, 0], [-0.5, 0], [0, 0]])


def test_grid_on_cubic_sublevel_set_matches_independent_membership(problems):
    pb = problems("ex_5_8")
    S = sublevel(pb.f, pb.K, pb.anchor).feasible  # anchor (-1, 2): f1 = 0, f2 = 1
    X = grid(S, [-1, 0, 0, 4], 101)
    xs = np.linspace(-1, 0, 101)
    ys = np.linspace(0, 4, 101)
    expected = [(a, b) for a in xs for b in ys if 0.5 * a * a * b + a <= 1e-9 and abs(a) <= 1]
    assert len(X) == len(expected)
    assert np.allclose(X, expected)


def test_grid_requires_finite_window():
    with pytest.raises(FeasibleError):
        grid(quadrant(), [0, INF, 0, 1], 3)


def test_bounded_detection(problems):
    assert problems("compact_k").K.is_bounded()
    assert not problems("ex_5_8").K.is_bounded()
    assert not problems("ex_5_2").K.is_bounded()
