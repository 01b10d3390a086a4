from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjident.aggregation import (ConeK, Demand, aggregate_profit_ces_demand, aggregate_profit_complementary,
                                 aggregate_profit_numeric, ces_kappas, industry, k_stable_check,
                                 verify_equilibrium)
from hjident.core import GridFunction, fenchel_production_from_profit, fenchel_profit_from_production
from hjident.errors import PreconditionError, ValidationError

from oracles import componentwise_monotone

K0, K1, K2 = 1.0, 3.0, 2.0
Z, Y1, Y2 = np.array([1.0, 1.0]), np.array([2.0, 3.0]), np.array([1.0, 2.0])
PAIR = [industry([Z], [K0]), industry([Y1, Y2], [K1, K2])]
LEONTIEF = Demand("leontief")


def test_complementary_example():
    res = aggregate_profit_complementary(K0, Z, K1, Y1, K2, Y2, (1, 1), 10)
    assert (res.value, res.profit_1, res.profit_2, res.cone) == (5.0, 5.0, 3.0, 1)
    assert aggregate_profit_complementary(K0, Z, K1, Y1, K2, Y2, (1, 1), 1).value == 0.0
    with pytest.raises(PreconditionError):
        aggregate_profit_complementary(3.0, Z, 1.0, Y1, 1.0, Y2, (1, 1), 10)


def test_numeric_matches_example():
    res = aggregate_profit_numeric(PAIR, LEONTIEF, (1, 1), 10)
    assert res.value == pytest.approx(5.0, abs=1e-7)
    np.testing.assert_allclose(res.q, [7.0, 3.0], atol=1e-5)
    assert res.constraint_slack >= -1e-9


@given(c=st.floats(0.1, 10), s1=st.floats(0, 3), s2=st.floats(0, 3), p0=st.floats(0.1, 20))
def test_complementary_homogeneity(c, s1, s2, p0):
    a = aggregate_profit_complementary(K0, Z, K1, Y1, K2, Y2, (s1, s2), p0).value
    b = aggregate_profit_complementary(K0, Z, K1, Y1, K2, Y2, (c * s1, c * s2), c * p0).value
    assert b == pytest.approx(c * a, rel=1e-12, abs=1e-12)


def test_continuity_on_the_ray():
    # s.y1 = s.y2 with y1 = (2, 1), y2 = (1, 2) along s = (t, t)
    y1, y2 = np.array([2.0, 1.0]), np.array([1.0, 2.0])
    for t in np.linspace(0.05, 2.0, 40):
        r = aggregate_profit_complementary(1.0, Z, 1.5, y1, 0.8, y2, (t, t), 5.0)
        assert abs(r.profit_1 - r.profit_2) <= 1e-9


def test_single_industry_passthrough():
    ind = industry([[1.0, 2.0], [3.0, 1.0]], [2.0, 1.0])
    res = aggregate_profit_numeric([ind], Demand("identity"), (1, 1), 4.0)
    assert res.value == pytest.approx(2.0 * 1.0 + 1.0 * 0.0)


def test_ces_kappas_example():
    assert ces_kappas(1.0, 2.0, 1.0) == pytest.approx((2.25, 9.0))


def test_ces_closed_form_against_numeric():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 5:
        z, y1, y2 = rng.uniform(0.2, 2, (3, 2))
        k0, k1, k2 = rng.uniform(0.5, 2, 3)
        rho = float(rng.choice([rng.uniform(-0.8, -0.2), rng.uniform(0.3, 3)]))
        s = rng.uniform(0.1, 1, 2)
        kap1, kap2 = ces_kappas(k0, k1 + k2, rho)
        p0 = 1.1 * max(kap1 * s @ z, kap2 * max(s @ y1, s @ y2)) + rng.uniform(0, 1)
        closed = aggregate_profit_ces_demand(k0, z, k1, y1, k2, y2, rho, s, p0)
        assert closed.in_region
        num = aggregate_profit_numeric([industry([z], [k0]), industry([y1, y2], [k1, k2])], Demand("ces", rho), s, p0)
        assert num.value == pytest.approx(closed.value, rel=1e-4)
        checked += 1


def test_ces_outside_region_falls_back():
    res = aggregate_profit_ces_demand(1, Z, 1, Y1, 1, Y2, 1.0, (1, 1), 3.0)
    assert not res.in_region and res.measure is None and res.value >= 0


def test_invalid_prices_rejected():
    with pytest.raises(ValidationError):
        aggregate_profit_numeric(PAIR, LEONTIEF, (0, 0), 0.0)
    with pytest.raises(ValidationError):
        verify_equilibrium(PAIR, LEONTIEF, [[1], [0, 0.5]], (0, 0), (0, 0), 0.0)


def test_permutation_of_industries():
    a = aggregate_profit_numeric(PAIR, LEONTIEF, (0.4, 0.9), 6.0).value
    b = aggregate_profit_numeric(PAIR[::-1], LEONTIEF, (0.4, 0.9), 6.0).value
    assert a == pytest.approx(b, rel=1e-9)


def test_equilibrium_example_and_perturbation():
    s, p0, q = np.array([1.0, 1.0]), 10.0, np.array([7.0, 3.0])
    # s lies inside K_1: one unit of product 1 from y2 at cost 3 while y1 also profitable
    alloc = [[1.0], [0.0, 0.5]]
    rep = verify_equilibrium(PAIR, LEONTIEF, alloc, q, s, p0, consumption=(1.0, 1.0), resources=(2.0, 3.0))
    assert rep.passed
    bad = verify_equilibrium(PAIR, LEONTIEF, [[0.5], [0.0, 0.5]], q, s, p0, consumption=(1.0, 1.0))
    assert not bad.profit_maximal


def test_k_stable_examples():
    X = np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]])
    K = ConeK.orthant(2)
    assert k_stable_check(X, X, [0, 1, 2], K).stable
    Y = np.array([[1.0, 1.0], [2.0, 3.0]])
    assert k_stable_check([[0.5, 0.5], [1.0, 1.5]], Y, [0, 1], K).stable
    v = k_stable_check(X, np.array([[1.0, 2.0], [3.0, 1.0], [4.0, 4.0]]), [0, 1, 2], K)
    assert not v.stable and v.criterion == "proportionality"
    ordered = np.array([[1.0, 1.0], [2.0, 2.0]])
    w = k_stable_check(ordered, ordered, [1, 0], K)
    assert not w.stable and w.criterion == "monotonicity" and w.pair == (0, 1)


@pytest.mark.parametrize("seed", range(20))
def test_k_stable_orthant_monotonicity_oracle(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 5))
    X = rng.integers(0, 3, (m, 2)).astype(float) + 1
    Y = rng.integers(0, 3, (m, 2)).astype(float) + 1
    gamma = rng.permutation(m).tolist()
    v = k_stable_check(X, Y, gamma, ConeK.orthant(2))
    if v.stable or v.criterion == "monotonicity":
        assert (v.criterion != "monotonicity") == componentwise_monotone(X, Y, gamma)
    perm = rng.permutation(m)
    gamma2 = [gamma[perm[i]] for i in range(m)]
    assert k_stable_check(X[perm], Y, gamma2, ConeK.orthant(2)).stable == v.stable


def test_aggregate_duality_round_trip():
    def closed(P, p0):
        P = np.atleast_2d(P)
        c1, c2 = P @ (Z + Y1), P @ (Z + Y2)
        pos = lambda v: np.maximum(v, 0.0)
        a = max(K0 - K2, 0) * pos(p0 - c1) + min(K0, K2) * pos(p0 - c2)
        b = min(K0, K1) * pos(p0 - c1) + max(K0 - K1, 0) * pos(p0 - c2)
        return np.maximum(a, b)

    for s in [(0.1, 0.2), (0.3, 0.05)]:
        assert aggregate_profit_numeric(PAIR, LEONTIEF, s, 1.0).value == pytest.approx(closed(np.array(s), 1.0)[0], abs=1e-7)
    ax = np.arange(0.0, 8.01, 0.5)
    F = GridFunction((ax, ax), np.array([[fenchel_production_from_profit(closed, (a, b), 1.0).value for b in ax] for a in ax]))
    for s in [(0.1, 0.2), (0.3, 0.05), (0.05, 0.3), (0.2, 0.1)]:
        back = fenchel_profit_from_production(F, s, 1.0).value
        assert back == pytest.approx(closed(np.array(s), 1.0)[0], abs=1e-6)
