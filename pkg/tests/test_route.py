import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import min_matching_cost, open_path_length, tsp_open_optimum

from aperture_planner.route import assign_batches, nearest_neighbor_order, order_route, path_length, two_opt


def test_single_point_route():
    r = order_route(np.array([[1.0, 2.0, 35.0]]), (0, 0, 35))
    assert r.order == [0] and r.length == 0.0


def test_collinear_points_are_visited_in_line_order():
    xs = np.array([5.0, 1.0, 9.0, 3.0, 7.0])
    pts = np.column_stack([xs, np.zeros(5), np.full(5, 35.0)])
    r = order_route(pts, (0, 0, 35))
    assert [xs[i] for i in r.order] == [1, 3, 5, 7, 9]
    assert r.length == 8.0


def test_empty_route_raises():
    with pytest.raises(ValueError):
        order_route(np.zeros((0, 3)), (0, 0, 0))


def test_eight_points_against_brute_force():
    pts = np.random.default_rng(2).uniform(0, 32, (8, 2))
    nn = nearest_neighbor_order(pts, (0, 0))
    r = order_route(pts, (0, 0))
    opt = tsp_open_optimum(pts.tolist())
    assert r.length <= path_length(pts[nn]) + 1e-12
    assert r.length >= opt - 1e-9
    assert sorted(r.order) == list(range(8))


def test_batches_trivial_cases():
    pts = np.random.default_rng(0).uniform(0, 10, (5, 3))
    one = assign_batches(pts, 1)
    assert one.batches == [[0], [1], [2], [3], [4]]
    assert one.travel == pytest.approx(path_length(pts))
    single = assign_batches(pts, 5)
    assert single.batches == [[0, 1, 2, 3, 4]] and single.travel == 0.0
    with pytest.raises(ValueError):
        assign_batches(pts, 0)


def test_two_drones_four_samples_match_enumeration():
    pts = np.array([[0, 0], [10, 0], [9, 1], [1, 1]], dtype=float)
    plan = assign_batches(pts, 2)
    assert plan.batches == [[0, 1], [3, 2]]
    best = min(
        math.dist(pts[0], pts[2 + p[0]]) + math.dist(pts[1], pts[2 + p[1]]) for p in itertools.permutations(range(2))
    )
    assert plan.travel == pytest.approx(best)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 9))
def test_route_is_a_permutation_and_improves_on_nn(seed, n):
    pts = np.random.default_rng(seed).uniform(0, 32, (n, 3))
    nn = nearest_neighbor_order(pts, pts[0])
    r = order_route(pts, pts[0])
    assert sorted(r.order) == list(range(n))
    assert r.length <= path_length(pts[nn]) + 1e-9
    assert r.length == pytest.approx(open_path_length(pts.tolist(), r.order))
    assert np.array_equal(r.positions, pts[r.order])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 14), drones=st.integers(1, 6))
def test_batches_partition_and_match_optimally(seed, n, drones):
    pts = np.random.default_rng(seed).uniform(0, 32, (n, 3))
    plan = assign_batches(pts, drones)
    flat = [k for b in plan.batches for k in b if k is not None]
    assert sorted(flat) == list(range(n))
    assert all(len([k for k in b if k is not None]) <= drones for b in plan.batches)
    # batches follow sampling order
    assert [sorted(k for k in b if k is not None) for b in plan.batches] == [
        list(range(i, min(i + drones, n))) for i in range(0, n, drones)
    ]
    for prev, nxt in zip(plan.batches, plan.batches[1:]):
        src = [pts[k] for k in prev if k is not None]
        dst = [pts[k] for k in nxt if k is not None]
        moved = sum(math.dist(pts[p], pts[q]) for p, q in zip(prev, nxt) if q is not None)
        assert moved == pytest.approx(min_matching_cost(src, dst))


def test_two_opt_never_lengthens():
    pts = np.random.default_rng(5).uniform(0, 10, (12, 2))
    order = list(range(12))
    assert path_length(pts[two_opt(pts, order)]) <= path_length(pts[order])
