from __future__ import annotations

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from hjident.core import (CesParams, CesUnitCost, DiscreteMeasure, GridFunction, MinUnitCost, TimeSeriesRecord,
                          ces_unit_cost, check_rho, fenchel_production_from_profit, fenchel_profit_from_production,
                          geometric_grid, gnp_load, gnp_load_generalized, young_transform)
from hjident.errors import DomainError, InfeasibleTransformError, NumericRangeError, ValidationError

pos = st.floats(0.05, 20.0)
rhos = st.one_of(st.floats(-1.0, -0.05), st.floats(0.05, 12.0))


def test_record_validation():
    r = TimeSeriesRecord(1, 5.0, 1.0, (2.0, 3.0))
    assert r.p == (2.0, 3.0)
    with pytest.raises(ValidationError):
        TimeSeriesRecord(1, -1.0, 1.0, (1.0, 1.0))
    with pytest.raises(ValidationError):
        TimeSeriesRecord(1, 1.0, 0.0, (1.0, 1.0))


@pytest.mark.parametrize("rho", [0.0, -1.5, float("nan"), float("inf")])
def test_rho_domain(rho):
    with pytest.raises(DomainError):
        check_rho(rho)


def test_ces_unit_cost_examples():
    assert ces_unit_cost(CesParams(1.0), (1, 1), (1, 1)) == pytest.approx(0.5, rel=1e-15)
    assert ces_unit_cost(CesParams(-1.0), (1, 2), (1, 1)) == 3.0


def test_ces_unit_cost_against_high_precision():
    mp.mp.dps = 50
    val = ces_unit_cost(CesParams(2.0), (2, 1), (1, 3))
    ref = (mp.mpf(2) ** -2 + mp.mpf(3) ** -2) ** mp.mpf(-0.5)
    assert abs(val - float(ref)) <= 1e-12 * float(ref)


def test_ces_log_space_for_large_rho():
    # plain powers overflow here; the log-space path stays finite and tends to min
    v = ces_unit_cost(CesParams(400.0), (1e-3, 1.0), (1.0, 1.0))
    assert v == pytest.approx(1e-3, rel=1e-2)


def test_ces_overflow_named():
    with pytest.raises(NumericRangeError, match="component"):
        ces_unit_cost(CesParams(7.0), (1e-60, 1.0), (1.0, 1.0))


@given(lam=st.floats(0.01, 100.0), p1=pos, p2=pos, x1=pos, x2=pos, rho=rhos)
def test_ces_homogeneous(lam, p1, p2, x1, x2, rho):
    c = CesParams(rho)
    a = ces_unit_cost(c, (lam * p1, lam * p2), (x1, x2))
    b = lam * ces_unit_cost(c, (p1, p2), (x1, x2))
    assert a == pytest.approx(b, rel=1e-12)


@given(p1=pos, p2=pos, x1=pos, x2=pos)
def test_ces_linear_at_minus_one(p1, p2, x1, x2):
    v = ces_unit_cost(CesParams(-1.0), (p1, p2), (x1, x2))
    exact = p1 * x1 + p2 * x2
    assert abs(v - exact) <= 2 * np.spacing(exact)


def test_gnp_load_examples():
    m = DiscreteMeasure(np.array([[1.0, 1.0]]), np.array([1.0]))
    r = gnp_load(m, (1, 1), 3)
    assert r.loads.tolist() == [1.0] and r.total_output == 1 and r.resource_use.tolist() == [1, 1]
    assert gnp_load(m, (2, 2), 3).total_output == 0
    m2 = DiscreteMeasure(np.array([[1.0, 1.0], [3.0, 3.0]]), np.array([2.0, 5.0]))
    r = gnp_load(m2, (1, 1), 4)
    assert r.total_output == 2 and r.resource_use.tolist() == [2, 2]


def test_gnp_boundary_is_loaded():
    m = DiscreteMeasure(np.array([[1.0, 2.0]]), np.array([1.0]))
    r = gnp_load(m, (1, 1), 3.0)
    assert r.loads[0] == 1 and r.boundary == (0,)


@given(atoms=st.lists(st.tuples(pos, pos, st.floats(0.1, 5)), min_size=1, max_size=6),
       p1=pos, p2=pos, a=st.floats(0.1, 50), b=st.floats(0.1, 50))
def test_gnp_monotone_in_p0(atoms, p1, p2, a, b):
    m = DiscreteMeasure(np.array([t[:2] for t in atoms]), np.array([t[2] for t in atoms]))
    lo, hi = sorted((a, b))
    l1, l2 = gnp_load(m, (p1, p2), lo).loads, gnp_load(m, (p1, p2), hi).loads
    assert np.all(l2 >= l1)


def test_gnp_load_generalized_examples():
    m = DiscreteMeasure(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert gnp_load_generalized(m, CesUnitCost(1.0), (1, 1), 1.0).loads[0] == 1
    assert gnp_load_generalized(m, CesUnitCost(1.0), (1, 1), 0.4).loads[0] == 0


def test_gnp_generalized_demand_matches_cost_minimization():
    # rho=2, atom (1,2): cheapest input bundle u with f(u/x) = 1, where f is the
    # production function dual to h(q) = (q1^-2 + q2^-2)^(-1/2): f(v) = (v1^(2/3) + v2^(2/3))^(3/2)
    x = np.array([1.0, 2.0])
    m = DiscreteMeasure(x[None, :], np.array([1.0]))
    r = gnp_load_generalized(m, CesUnitCost(2.0), (1, 1), 1.0)
    f = lambda v: (v[0] ** (2 / 3) + v[1] ** (2 / 3)) ** 1.5  # noqa: E731
    cons = {"type": "eq", "fun": lambda u: f(u / x) - 1.0}
    opt = minimize(lambda u: u.sum(), x0=np.array([0.3, 0.5]), constraints=[cons], method="SLSQP",
                   bounds=[(1e-6, None)] * 2, options={"ftol": 1e-14})
    assert r.loads[0] == 1
    np.testing.assert_allclose(r.demand[0], opt.x, rtol=1e-5)
    assert opt.fun == pytest.approx(float(CesUnitCost(2.0)(x)), rel=1e-8)


def test_min_unit_cost_tie():
    g, tie = MinUnitCost().gradient(np.array([2.0, 2.0]))
    assert tie and g.tolist() == [0.0, 1.0]


def test_young_transform_leontief():
    ax = geometric_grid(1e-2, 1e2, 161)
    f = GridFunction.sample(lambda v: v.min(axis=-1), (ax, ax))
    h = young_transform(f, p_axes=(np.array([0.5, 1.0, 2.0]),) * 2)
    P = np.stack(np.meshgrid([0.5, 1, 2], [0.5, 1, 2], indexing="ij"), -1)
    np.testing.assert_allclose(h.values, P.sum(-1), rtol=1e-9)


def test_young_transform_single_factor():
    ax = geometric_grid(1e-2, 1e2, 81)
    f = GridFunction.sample(lambda v: v[..., 0], (ax, ax))
    h = young_transform(f, p_axes=(np.array([0.5, 2.0]), np.array([1.0, 3.0])))
    np.testing.assert_allclose(h.values, [[0.5, 0.5], [2.0, 2.0]], rtol=1e-3)


def test_young_transform_ces():
    ax = geometric_grid(1e-2, 1e2, 400)
    f = GridFunction.sample(lambda v: (v[..., 0] ** -1 + v[..., 1] ** -1) ** -1, (ax, ax))
    pa = np.array([0.5, 1.0, 3.0])
    h = young_transform(f, p_axes=(pa, pa))
    P = np.stack(np.meshgrid(pa, pa, indexing="ij"), -1)
    ref = (np.sqrt(P[..., 0]) + np.sqrt(P[..., 1])) ** 2
    np.testing.assert_allclose(h.values, ref, rtol=1e-3)


def test_young_transform_zero():
    with pytest.raises(InfeasibleTransformError):
        young_transform(GridFunction((np.array([1.0, 2.0]),), np.zeros(2)))


def test_young_twice_is_identity():
    ax = geometric_grid(1e-2, 1e2, 201)
    f = GridFunction.sample(lambda v: np.sqrt(v[..., 0] * v[..., 1]), (ax, ax))
    pa = np.array([0.5, 1.0, 2.0])
    ff = young_transform(young_transform(f), p_axes=(pa, pa))
    P = np.stack(np.meshgrid(pa, pa, indexing="ij"), -1)
    np.testing.assert_allclose(ff.values, np.sqrt(P[..., 0] * P[..., 1]), rtol=2e-3)


def _single_capacity():
    ax = np.unique(np.concatenate([[0.0, 1.0], geometric_grid(1e-3, 10, 200)]))
    return GridFunction.sample(lambda l: np.minimum(np.minimum(l[..., 0], l[..., 1]), 1.0), (ax, ax))


def test_fenchel_profit_examples():
    F = _single_capacity()
    assert fenchel_profit_from_production(F, (1, 1), 3).value == pytest.approx(1.0, abs=1e-12)
    assert fenchel_profit_from_production(F, (2, 2), 3).value == 0.0
    Z = GridFunction(F.axes, np.zeros_like(F.values))
    assert fenchel_profit_from_production(Z, (0.3, 0.1), 2).value == 0.0


def test_fenchel_production_examples():
    Pi = lambda p, p0: np.maximum(p0 - p[:, 0] - p[:, 1], 0.0)  # noqa: E731
    assert fenchel_production_from_profit(Pi, (2, 2), 1).value == pytest.approx(1.0, abs=1e-9)
    assert fenchel_production_from_profit(Pi, (0, 5), 1).value == pytest.approx(0.0, abs=1e-9)


def test_fenchel_round_trip():
    # concave nondecreasing F, production -> profit -> production at interior nodes
    ax = np.concatenate([[0.0], geometric_grid(1e-3, 1e3, 241)])
    F = GridFunction.sample(lambda l: (l[..., 0] * l[..., 1]) ** (1 / 3), (ax, ax))

    def Pi(p, p0):
        return np.array([fenchel_profit_from_production(F, q, p0).value for q in np.atleast_2d(p)])

    pax = geometric_grid(1e-2, 1e2, 25)
    for l in [(1.0, 1.0), (2.0, 0.5)]:
        got = fenchel_production_from_profit(Pi, l, 1.0, axes=(pax, pax), refine=3, zoom_points=15).value
        assert got == pytest.approx((l[0] * l[1]) ** (1 / 3), rel=2e-2)
