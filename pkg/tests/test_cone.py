from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjident.arrangement import enumerate_spectra, transform_coordinates
from hjident.cone import (PolyhedralCone, cone_contains, cone_from_spectra, exact_phase1, facet_normals,
                          is_discretely_convex, necessary_condition)
from hjident.errors import CapabilityError, DegenerateArrangementError, ValidationError

from oracles import hull_facet_directions, lp_member

NESTED = [(0, 0), (1, 0), (1, 1)]
CROSSING = [(0, 0), (1, 0), (0, 1), (1, 1)]


def random_spectra(rng, T):
    while True:
        rho = float(max(-1.0, rng.choice([-1, 1]) * rng.uniform(0.1, 3)))
        try:
            return enumerate_spectra(transform_coordinates(rho, rng.uniform(0.2, 5, (T, 2))))
        except DegenerateArrangementError:
            continue


def test_cone_from_spectra_examples():
    assert cone_from_spectra([(0,), (1,)]).generators == ((1,),)
    assert cone_from_spectra(NESTED).generators == ((1, 0), (1, 1))
    assert cone_from_spectra(CROSSING).generators == ((0, 1), (1, 0), (1, 1))
    with pytest.raises(ValidationError):
        cone_from_spectra([])
    with pytest.raises(ValidationError):
        PolyhedralCone(((1, 2),), 2)


def test_membership_trivial():
    cone = cone_from_spectra(CROSSING)
    m = cone_contains(cone, (1, 1))
    assert m.contains and m.witness.residual <= 1e-9
    assert cone_contains(cone, (0, 0)).contains
    assert np.all(cone_contains(cone, (0, 0)).witness.coefficients == 0)


def test_nested_certificate():
    cone = cone_from_spectra(NESTED)
    contains, cert = cone_contains(cone, (1, 2))
    assert not contains
    np.testing.assert_allclose(cert.nu, [1, -1])
    assert cert.margin == pytest.approx(-1.0)
    ex = cone_contains(cone, (1, 2), exact=True)
    assert ex.used_exact and not ex.contains
    assert ex.certificate.margin < 0


def test_exact_phase1_feasible():
    ok, lam, _ = exact_phase1([(1, 0), (1, 1)], [Fraction(3), Fraction(1)])
    assert ok and lam == [Fraction(2), Fraction(1)]


@given(y=st.lists(st.floats(-5, 10), min_size=3, max_size=3), seed=st.integers(0, 10_000))
def test_farkas_soundness(y, seed):
    spectra = random_spectra(np.random.default_rng(seed), 3)
    cone = cone_from_spectra(spectra)
    y = np.array(y)
    m = cone_contains(cone, y)
    Z = cone.matrix
    if m.contains:
        assert np.all(m.witness.coefficients >= 0)
        assert np.abs(Z.T @ m.witness.coefficients - y).max() <= 1e-9 * max(1, np.abs(y).max())
    else:
        assert np.all(Z @ m.certificate.nu >= -1e-12)
        assert m.certificate.nu @ y < 0
    assert m.contains == lp_member(cone.generators, y) or m.used_exact


def test_facet_examples():
    assert {f.nu for f in facet_normals(cone_from_spectra(CROSSING))} == {(1, 0), (0, 1)}
    fac = facet_normals(cone_from_spectra(NESTED))
    assert {f.nu for f in fac} == {(0, 1), (1, -1)}
    assert is_discretely_convex(cone_from_spectra(CROSSING)) == (True, None)
    assert is_discretely_convex(cone_from_spectra(NESTED))[0]


def test_facets_of_lower_dimensional_cone():
    fac = facet_normals(PolyhedralCone(((1, 1, 0),), 3))
    assert not fac.full_dimensional
    for nu in fac.lineality:
        assert nu[0] + nu[1] == 0 or nu[2] != 0


@pytest.mark.parametrize("seed", range(8))
def test_facets_against_convex_hull(seed):
    rng = np.random.default_rng(seed)
    cone = cone_from_spectra(random_spectra(rng, int(rng.integers(3, 6))))
    fac = facet_normals(cone)
    assert fac.full_dimensional
    Z = np.array(cone.generators)
    ours = []
    for f in fac:
        nu = np.array(f.nu)
        assert math.gcd(*f.nu) == 1
        assert np.all(Z @ nu >= 0)  # integer arithmetic, exact
        assert np.linalg.matrix_rank(Z[list(f.tight_generators)]) == cone.T - 1
        ours.append(nu / np.linalg.norm(nu))
    oracle = hull_facet_directions(cone.generators)
    assert len(oracle) == len(ours)
    for d in oracle:
        assert any(np.allclose(d, e, atol=1e-9) for e in ours)


def test_necessary_condition_examples():
    assert necessary_condition((2, 1), NESTED).passed
    check = necessary_condition((1, 2), NESTED)
    assert not check.passed and check.pair == ((1,), (2,))
    assert necessary_condition((0, 0), NESTED).passed
    assert necessary_condition(np.array(CROSSING).sum(axis=0), CROSSING).passed
    assert necessary_condition((2, 1), NESTED, mode="facet").passed
    assert not necessary_condition((1, 2), NESTED, mode="facet").passed


def test_necessary_condition_capability():
    spectra = [tuple([1] * k + [0] * (13 - k)) for k in range(14)]
    with pytest.raises(CapabilityError):
        necessary_condition(np.zeros(13), spectra, mode="exhaustive")


@pytest.mark.parametrize("seed", range(4))
def test_necessary_condition_implied_by_membership(seed):
    rng = np.random.default_rng(100 + seed)
    spectra = random_spectra(rng, int(rng.integers(2, 6)))
    Z = np.array(sorted(spectra), dtype=float)
    for _ in range(20):
        y = rng.exponential(size=len(Z)) @ Z
        assert cone_contains(cone_from_spectra(spectra), y).contains
        assert necessary_condition(y, spectra).passed


@given(gens=st.lists(st.tuples(*[st.integers(0, 1)] * 4), min_size=1, max_size=7),
       y=st.tuples(*[st.integers(-2, 6)] * 4))
def test_exact_phase1_against_lp(gens, y):
    gens = sorted(set(gens) - {(0, 0, 0, 0)})
    if not gens:
        return
    ok, lam, nu = exact_phase1(gens, [Fraction(v) for v in y])
    if ok:
        assert all(v >= 0 for v in lam)
        assert all(sum(lam[j] * gens[j][i] for j in range(len(gens))) == y[i] for i in range(4))
    else:
        assert all(sum(nu[i] * g[i] for i in range(4)) >= 0 for g in gens)
        assert sum(nu[i] * y[i] for i in range(4)) < 0
    assert ok == lp_member(gens, y)
