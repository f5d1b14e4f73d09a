from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from instances import pair_params, symmetric_pair_params
from ramsey_pareto.frontier import WELFARE_TOL, dominates, simplex_grid, sweep, undominated
from ramsey_pareto.kkt_core import make_problem
from ramsey_pareto.model import LOG, coalition4_params, make_params
from ramsey_pareto.oracle import ScalarizedProblem, solve_scalarized
from ramsey_pareto.solver import solve


# -- grid ---------------------------------------------------------------------

def test_grid_two_households():
    grid = simplex_grid(2, 4)
    np.testing.assert_allclose(grid, [[0.25, 0.75], [0.5, 0.5], [0.75, 0.25]])


def test_grid_single_household():
    grid = simplex_grid(1, 7)
    assert len(grid) == 1
    np.testing.assert_array_equal(grid[0], [1.0])


@pytest.mark.parametrize("H, res", [(4, 8), (3, 10), (2, 9), (4, 5)])
def test_grid_count_and_positivity(H, res):
    grid = simplex_grid(H, res)
    assert len(grid) == math.comb(res - 1, H - 1)
    assert len({tuple(g) for g in grid}) == len(grid)
    for g in grid:
        assert np.all(g > 0) and g.sum() == pytest.approx(1.0, abs=1e-15)
    assert [tuple(g) for g in grid] == sorted(tuple(g) for g in grid)


def test_grid_too_coarse():
    with pytest.raises(ValueError):
        simplex_grid(4, 3)


# -- dominance ----------------------------------------------------------------

def test_dominance_examples():
    assert not dominates([2, 3], [2, 3])
    assert dominates([2, 3], [2, 2.9])
    assert not dominates([3, 1], [1, 3]) and not dominates([1, 3], [3, 1])


def test_dominance_length_mismatch():
    with pytest.raises(ValueError):
        dominates([1, 2], [1, 2, 3])


vectors = st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), min_size=1, max_size=12)


@given(vectors)
def test_filter_idempotent(ws):
    keep = undominated(ws)
    survivors = [ws[i] for i in keep]
    assert undominated(survivors) == list(range(len(survivors)))


@given(vectors)
def test_filter_keeps_exactly_the_undominated(ws):
    keep = set(undominated(ws, tol=0.0))
    for i, w in enumerate(ws):
        beaten = any(dominates(v, w) for j, v in enumerate(ws) if j != i)
        assert (i in keep) == (not beaten)


@given(vectors)
def test_filter_symmetric_under_permuting_components(ws):
    swapped = [[w[2], w[0], w[1]] for w in ws]
    assert undominated(ws) == undominated(swapped)


# -- sweeps -------------------------------------------------------------------

def test_symmetric_households_give_mirrored_frontier():
    res = sweep(symmetric_pair_params(), LOG, resolution=8)
    assert len(res.points) == 7 and not res.failures
    by_theta = {round(pt.theta[0], 12): pt.welfare for pt in res.points}
    for p0, w in by_theta.items():
        mirror = by_theta[round(1.0 - p0, 12)]
        np.testing.assert_allclose(w[::-1], mirror, rtol=1e-9, atol=1e-12)
    assert len(res.frontier) == 7


def test_single_household_sweep():
    p = make_params(1, 4, beta=0.95, a0=2.0)
    res = sweep(p, LOG, resolution=5)
    assert len(res.frontier) == 1
    np.testing.assert_allclose(res.frontier[0].welfare, solve(make_problem(p)).welfare, rtol=1e-12)


@pytest.mark.parametrize("variant", ["default", "nodefault"])
def test_no_point_dominated_by_oracle(variant):
    p = pair_params()
    res = sweep(p, LOG, resolution=8, variant=variant)
    assert len(res.frontier) == len(res.points) == 7
    oracle = [
        solve_scalarized(ScalarizedProblem(p, LOG, theta, variant)).welfare for theta in simplex_grid(2, 8)
    ]
    for pt in res.frontier:
        for w in oracle:
            assert not dominates(w, pt.welfare, WELFARE_TOL)
    # and the oracle optimum is not beaten by any sweep point
    for w in oracle:
        assert not any(dominates(pt.welfare, w, WELFARE_TOL) for pt in res.frontier)


def test_benchmark_coarse_sweep():
    res = sweep(coalition4_params(), LOG, resolution=5)
    assert len(res.points) == 4 and not res.failures
    assert len(res.frontier) == 4
    ws = [pt.welfare for pt in res.frontier]
    for i, a in enumerate(ws):
        for j, b in enumerate(ws):
            if i != j:
                assert not dominates(a, b, WELFARE_TOL)


def test_parallel_sweep_matches_serial():
    p = pair_params()
    serial = sweep(p, LOG, resolution=6, variant="nodefault")
    parallel = sweep(p, LOG, resolution=6, variant="nodefault", workers=4)
    for a, b in zip(serial.points, parallel.points):
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.welfare, b.welfare)
    assert [pt.dominated for pt in serial.points] == [pt.dominated for pt in parallel.points]


def test_frontier_points_reproducible():
    p = pair_params()
    res = sweep(p, LOG, resolution=5)
    for pt in res.frontier:
        again = solve(make_problem(p, LOG, pt.theta)).welfare
        np.testing.assert_allclose(again, pt.welfare, rtol=0, atol=1e-9)
