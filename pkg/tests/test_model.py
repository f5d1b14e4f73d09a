from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramsey_pareto.model import (
    LOG,
    Allocation,
    DimensionError,
    DomainError,
    EconomyParams,
    UtilitySpec,
    accumulate,
    bound_violations,
    capital_step,
    check_feasibility,
    coalition4_params,
    existence_bounds,
    feasible_seed,
    make_params,
    marginal_utility_inverse,
    welfare,
)


def unit_economy(H=1, T=0, a0=5.0, **kw):
    return make_params(H, T, r=0.03, omega=1.0, l=1.0, tau=1.0, delta=0.01, a0=a0, **kw)


# -- parameters ---------------------------------------------------------------

def test_scalar_rates_broadcast():
    p = unit_economy(T=3)
    assert p.r.shape == (4,) and p.omega.shape == (4,)
    np.testing.assert_array_equal(p.gamma, np.full(4, 1.02))


@pytest.mark.parametrize("bad", [
    dict(r=-0.01), dict(omega=0.5), dict(tau=0.9), dict(delta=1.0),
    dict(beta=1.0), dict(l=0.0), dict(a0=-1.0),
])
def test_invalid_parameters_rejected(bad):
    kw = dict(r=0.03, omega=1.0, l=1.0, tau=1.0, delta=0.01, beta=0.9, a0=1.0)
    kw.update(bad)
    with pytest.raises(ValueError):
        make_params(2, 2, **kw)


def test_params_are_read_only():
    p = coalition4_params()
    with pytest.raises(ValueError):
        p.beta[0] = 0.5


# -- utilities ----------------------------------------------------------------

@pytest.mark.parametrize("u, x, expected", [
    (LOG, 2.0, 0.5),
    (UtilitySpec("isoelastic", 2.0), 4.0, 0.5),
])
def test_marginal_inverse_examples(u, x, expected):
    assert marginal_utility_inverse(u, x) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("c", [1e-6, 1.0, 1e6])
def test_log_round_trip(c):
    assert marginal_utility_inverse(LOG, 1.0 / c) == pytest.approx(c, rel=1e-12)


@pytest.mark.parametrize("u", [LOG, UtilitySpec("isoelastic", 0.5), UtilitySpec("isoelastic", 3.0)])
def test_round_trip_over_twelve_decades(u):
    c = np.logspace(-6, 6, 97)
    back = u.marginal_inverse(u.marginal(c))
    np.testing.assert_allclose(back, c, rtol=1e-12, atol=0)


def test_marginal_inverse_domain():
    with pytest.raises(DomainError):
        marginal_utility_inverse(LOG, 0.0)
    with pytest.raises(DomainError):
        marginal_utility_inverse(UtilitySpec("isoelastic", 2.0), -1.0)


@pytest.mark.parametrize("u", [LOG, UtilitySpec("isoelastic", 0.5), UtilitySpec("isoelastic", 4.0)])
def test_inada_behaviour(u):
    c = np.logspace(-12, 12, 25)
    mu = u.marginal(c)
    assert np.all(mu > 0)
    assert np.all(np.diff(mu) < 0)
    assert mu[0] > 1e5 and mu[-1] < 1e-5


def test_isoelastic_sigma_one_rejected():
    with pytest.raises(ValueError):
        UtilitySpec("isoelastic", 1.0)


# -- capital accumulation -----------------------------------------------------

@pytest.mark.parametrize("a_t, c_t, expected", [(10.0, 1.0, 10.2), (0.0, 1.0, 0.0)])
def test_capital_step_examples(a_t, c_t, expected):
    p = unit_economy()
    assert capital_step(p, 0, 0, a_t, c_t) == pytest.approx(expected, abs=1e-14)


def test_capital_step_benchmark_constants():
    p = coalition4_params()
    assert capital_step(p, 0, 5, p.a0[0], 2.0) == pytest.approx(29.6, abs=1e-13)


def test_capital_step_errors():
    p = unit_economy(T=2)
    with pytest.raises(IndexError):
        capital_step(p, 0, 3, 1.0, 1.0)
    with pytest.raises(IndexError):
        capital_step(p, 1, 0, 1.0, 1.0)
    with pytest.raises(DomainError):
        capital_step(p, 0, 0, 1.0, 0.0)


@given(
    a=st.floats(-50, 50), da=st.floats(-10, 10), c=st.floats(0.01, 20),
    r=st.floats(0.001, 0.2), tau=st.floats(1.0, 1.5), delta=st.floats(0.01, 0.5),
)
def test_capital_step_affine_in_capital(a, da, c, r, tau, delta):
    p = make_params(1, 0, r=r, tau=tau, delta=delta, a0=1.0)
    gamma = tau * (1 + r) - delta
    diff = capital_step(p, 0, 0, a + da, c) - capital_step(p, 0, 0, a, c)
    assert diff == pytest.approx(gamma * da, rel=1e-12, abs=1e-12)


# -- feasible seed ------------------------------------------------------------

def test_feasible_seed_small():
    p = unit_economy(T=1)
    seed = feasible_seed(p)
    np.testing.assert_array_equal(seed.c, [[1.0, 1.0]])
    np.testing.assert_allclose(seed.a, [[5.0, 5.1, 5.202]], rtol=1e-15)


def test_feasible_seed_benchmark_aggregate_grows_geometrically():
    p = coalition4_params()
    agg = feasible_seed(p).aggregate_capital
    expected = 70.0 * 1.02 ** np.arange(p.T + 2)
    np.testing.assert_allclose(agg, expected, rtol=1e-12)
    assert np.all(agg > 0)


def test_feasible_seed_tiny_aggregate():
    p = make_params(4, 100, beta=[0.9, 0.93, 0.95, 0.98], a0=[0.5, -0.2, -0.2, -0.099])
    seed = feasible_seed(p)
    assert np.all(seed.aggregate_capital[1:] > 0)
    assert check_feasibility(p, seed, tol=0.0) == []


@settings(max_examples=50)
@given(
    H=st.integers(1, 4), T=st.integers(0, 30), seed=st.integers(0, 2**32 - 1),
)
def test_feasible_seed_passes_with_zero_tolerance(H, T, seed):
    rng = np.random.default_rng(seed)
    a0 = rng.uniform(-1, 1, H)
    a0[0] += abs(a0.sum()) + 0.01
    p = EconomyParams(
        H, T, r=rng.uniform(0.001, 0.1, T + 1), omega=rng.uniform(1, 3, T + 1),
        l=rng.uniform(0.1, 2, H), tau=rng.uniform(1, 1.2), delta=rng.uniform(0.01, 0.3),
        beta=rng.uniform(0.5, 0.99, H), a0=a0,
    )
    seed_alloc = feasible_seed(p)
    assert check_feasibility(p, seed_alloc, tol=0.0) == []


# -- feasibility checks -------------------------------------------------------

def test_zero_consumption_reported():
    p = unit_economy(T=2)
    seed = feasible_seed(p)
    c = seed.c.copy()
    c[0, 1] = 0.0
    alloc = Allocation(c, accumulate(p, c))
    kinds = {(v.kind, v.index) for v in check_feasibility(p, alloc)}
    assert ("positivity", (0, 1)) in kinds


def test_negative_aggregate_reported_with_magnitude():
    p = unit_economy(H=2, T=3, a0=[1.0, 1.0])
    seed = feasible_seed(p)
    # choose c_2 so that the aggregate stock at t=3 is exactly -0.5
    c = seed.c.copy()
    a = accumulate(p, c)
    target = -0.5
    c[:, 2] += (a[:, 3].sum() - target) / 2.0
    alloc = Allocation(c, accumulate(p, c))
    agg = [v for v in check_feasibility(p, alloc) if v.kind == "aggregate"]
    assert agg[0].index == (3,)
    assert agg[0].magnitude == pytest.approx(0.5, abs=1e-12)


def test_shape_mismatch_raises():
    p = unit_economy(T=2)
    other = feasible_seed(unit_economy(T=3))
    with pytest.raises(DimensionError):
        check_feasibility(p, other)


def test_accumulation_violation_reported():
    p = unit_economy(T=2)
    seed = feasible_seed(p)
    a = seed.a.copy()
    a[0, 2] += 1e-3
    kinds = {v.kind for v in check_feasibility(p, Allocation(seed.c, a))}
    assert "accumulation" in kinds


# -- existence bounds ---------------------------------------------------------

def test_existence_bounds_single_period():
    a_max, c_bound = existence_bounds(unit_economy())
    assert a_max == pytest.approx(6.1, abs=1e-14)
    assert c_bound == pytest.approx(6.1, abs=1e-14)


def test_existence_bounds_benchmark_against_closed_sum():
    p = coalition4_params()
    # with constant wage and gamma the sum is geometric; household 1 at t=T dominates
    g = 1.02 ** 101
    oracle = (g - 1.0) / 0.02 + 30.0 * g
    a_max, c_bound = existence_bounds(p)
    assert a_max == pytest.approx(oracle, rel=1e-13)
    assert c_bound == pytest.approx(4 * oracle, rel=1e-13)
    # frozen regression value
    assert a_max == pytest.approx(541.163123249391, rel=1e-12)


def test_existence_bounds_positive_with_tiny_endowment():
    p = make_params(2, 5, a0=[1e-9, 0.0])
    assert existence_bounds(p)[0] > 0


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1))
def test_feasible_points_respect_bounds(seed):
    rng = np.random.default_rng(seed)
    H, T = int(rng.integers(1, 4)), int(rng.integers(0, 8))
    p = make_params(H, T, beta=rng.uniform(0.8, 0.97, H), a0=rng.uniform(0.1, 2, H))
    base = feasible_seed(p)
    # scaled-down consumption stays feasible
    c = base.c * rng.uniform(0.05, 1.0, base.c.shape)
    alloc = Allocation(c, accumulate(p, c))
    assert check_feasibility(p, alloc) == []
    assert bound_violations(p, alloc) == []


# -- welfare ------------------------------------------------------------------

def test_welfare_examples():
    p0 = unit_economy(beta=0.9)
    assert welfare(p0, LOG, np.array([[1.0]]))[0] == 0.0
    p1 = unit_economy(T=1, beta=0.5)
    e = math.e
    assert welfare(p1, LOG, np.array([[e, e]]))[0] == pytest.approx(1.5, abs=1e-15)


def test_welfare_domain():
    with pytest.raises(DomainError):
        welfare(unit_economy(), LOG, np.array([[0.0]]))


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), bump=st.floats(1e-6, 1.0))
def test_welfare_increasing_in_consumption(seed, bump):
    rng = np.random.default_rng(seed)
    p = make_params(2, 4, beta=[0.9, 0.95])
    us = (LOG, UtilitySpec("isoelastic", 2.0))
    c = rng.uniform(0.1, 5, (2, 5))
    h, t = int(rng.integers(2)), int(rng.integers(5))
    c2 = c.copy()
    c2[h, t] += bump
    w, w2 = welfare(p, us, c), welfare(p, us, c2)
    assert w2[h] > w[h]
    assert w2[1 - h] == w[1 - h]
