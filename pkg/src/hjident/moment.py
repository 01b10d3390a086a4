"""Moment problem for CES unit costs: solvability, witness measures and verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .arrangement import LineFamily, Spectrum, enumerate_spectra, transform_coordinates, x_to_z, z_to_x
from .core import CesParams, DiscreteMeasure, NormalizedPrices, TimeSeriesRecord, ces_unit_cost, check_rho, outputs
from .cone import FarkasCertificate, Membership, PolyhedralCone, cone_contains, cone_from_spectra
from .errors import AmbiguousThetaError, ConsistencyError, DegenerateArrangementError, ValidationError

THETA_TOL = 1e-9


@dataclass(frozen=True)
class MomentProblemReport:
    rho: float
    solvable: bool
    witness: DiscreteMeasure | None
    certificate: FarkasCertificate | None
    cone_size: int
    spectra_count: int
    coefficients: NDArray[np.float64] | None = None
    generators: tuple[Spectrum, ...] = ()
    residual: float | None = None
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class Setup:
    family: LineFamily
    spectra: frozenset
    cone: PolyhedralCone
    y: NDArray[np.float64]


def setup(series: Sequence[TimeSeriesRecord], rho: float) -> Setup:
    rho = check_rho(rho)
    phat = NormalizedPrices.from_series(series)
    family = transform_coordinates(rho, phat)
    try:
        spectra = enumerate_spectra(family)
    except DegenerateArrangementError as exc:
        raise DegenerateArrangementError(
            f"{exc} at rho={rho}; rho is a critical value, perturb it", triple=exc.triple
        ) from exc
    return Setup(family, spectra, cone_from_spectra(spectra), outputs(series))


def moment_solvable(series: Sequence[TimeSeriesRecord], rho: float, with_witness: bool = True,
                    exact: bool = False) -> MomentProblemReport:
    """Is there a capacity distribution reproducing the outputs at this ``rho``?"""
    s = setup(series, rho)
    mem: Membership = cone_contains(s.cone, s.y, exact=exact)
    if not mem.contains:
        return MomentProblemReport(float(rho), False, None, mem.certificate, len(s.cone),
                                   len(s.spectra), generators=s.cone.generators)
    lam = mem.witness.coefficients
    witness, notes, residual = None, (), None
    if with_witness:
        witness, notes = _witness_from(s, lam)
        residual = float(np.abs(verify_measure(witness, series, rho)).max(initial=0.0))
    return MomentProblemReport(float(rho), True, witness, None, len(s.cone), len(s.spectra),
                               lam, s.cone.generators, residual, notes)


def chebyshev_center(family: LineFamily, spectrum: Sequence[int]) -> tuple[NDArray[np.float64], float, bool]:
    """Deepest point of a cell (in the line coordinates) and its inscribed radius.

    The cell is intersected with the box ``[0, 2 * max intercept]^2``, which
    only affects the unbounded outer cell (third return value).  For the
    ``rho > 0`` branch the half-plane ``z1 + z2 > eps`` (image of the
    orthant) is added.
    """
    A, c = family.cell_inequalities(spectrum)
    norms = np.hypot(A[:, 0], A[:, 1])
    B = 2.0 * family.intercept_bound()
    rows = [np.column_stack([A, norms])]
    rhs = [c]
    rows.append(np.array([[-1.0, 0.0, 1.0], [0.0, -1.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    rhs.append(np.array([0.0, 0.0, B, B]))
    if family.epsilon is not None:
        rows.append(np.array([[-1.0, -1.0, np.sqrt(2.0)]]))
        rhs.append(np.array([-family.epsilon]))
    res = linprog(np.array([0.0, 0.0, -1.0]), A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                  bounds=[(None, None)] * 3, method="highs")
    if res.status != 0 or res.x[2] <= 0:
        raise ConsistencyError(f"cell with spectrum {tuple(spectrum)} is empty")
    z, r = res.x[:2], float(res.x[2])
    outer = not any(spectrum)
    return z, r, outer


def _x_radius(family: LineFamily, x: NDArray, z: NDArray, rz: float) -> float:
    """Radius of an x-disk whose image stays within the z-disk of radius ``rz``."""
    h = 1e-7 * x
    J = np.column_stack([(x_to_z(family, x + np.eye(2)[k] * h[k]) - x_to_z(family, x - np.eye(2)[k] * h[k]))
                         / (2 * h[k]) for k in range(2)])
    rx = min(rz / max(np.linalg.norm(J, 2), 1e-300), 0.5 * x.min())
    ang = np.linspace(0, 2 * np.pi, 65)[:-1]
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    for _ in range(60):
        pts = x + rx * ring
        if np.all(pts > 0):
            try:
                d = np.linalg.norm(x_to_z(family, pts) - z, axis=1)
            except ValidationError:
                d = np.array([np.inf])
            if d.max() < 0.9 * rz:
                return rx
        rx *= 0.5
    raise ConsistencyError("could not fit a smoothing disk inside the cell")


def _witness_from(s: Setup, coefficients, tol: float = 0.0):
    gens = s.cone.generators
    if isinstance(coefficients, Mapping):
        weights = [(tuple(k), float(v)) for k, v in coefficients.items()]
    else:
        coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
        if coefficients.size != len(gens):
            raise ValidationError("one coefficient per cone generator expected")
        weights = list(zip(gens, coefficients))
    pts, ms, rs, notes = [], [], [], []
    known = set(s.spectra)
    for spec, m in weights:
        if m < 0:
            raise ValidationError("witness coefficients must be nonnegative")
        if m <= tol:
            continue
        if spec not in known:
            raise ValidationError(f"{spec} is not the spectrum of a cell")
        z, rz, outer = chebyshev_center(s.family, spec)
        if outer:
            notes.append("outer cell centre taken inside the box of twice the largest intercept")
        x = z_to_x(s.family, z)
        rx = _x_radius(s.family, x, z, rz)
        pts.append(x)
        ms.append(m)
        rs.append(0.5 * rx)
    if not pts:
        return DiscreteMeasure.empty(), tuple(notes)
    return DiscreteMeasure(np.array(pts), np.array(ms), np.array(rs)), tuple(notes)


def construct_witness_measure(series: Sequence[TimeSeriesRecord], rho: float, witness_coefficients) -> DiscreteMeasure:
    """Atoms at cell Chebyshev centres carrying the cone coefficients.

    ``witness_coefficients`` is aligned with the generators of the cone (as
    produced by :func:`moment_solvable`) or maps spectra to masses.  Each atom
    carries a smoothing radius such that its disk lies inside its cell.
    """
    measure, _ = _witness_from(setup(series, rho), witness_coefficients)
    return measure


def verify_measure(measure: DiscreteMeasure, series: Sequence[TimeSeriesRecord], rho: float,
                   check_disks: bool = True) -> NDArray[np.float64]:
    """Residuals ``sum of loaded masses - y(t)``, evaluated with the CES unit cost."""
    params = CesParams(check_rho(rho))
    y = outputs(series)
    res = -y.copy()
    ang = np.linspace(0, 2 * np.pi, 33)[:-1]
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    for t, rec in enumerate(series):
        p = np.asarray(rec.p)
        for x, m, r in zip(measure.points, measure.masses, measure.radii):
            margin = (rec.p0 - ces_unit_cost(params, p, x)) / rec.p0
            if abs(margin) <= THETA_TOL:
                raise AmbiguousThetaError(f"atom {tuple(x)} lies on the level set of observation {rec.t}")
            if check_disks and r > 0:
                hs = np.array([ces_unit_cost(params, p, q) for q in x + r * ring])
                if np.any(np.sign(rec.p0 - hs) != np.sign(margin)):
                    raise AmbiguousThetaError(f"smoothing disk of atom {tuple(x)} crosses a level set of observation {rec.t}")
            if margin > 0:
                res[t] += m
    return res


def prefix_witness(series: Sequence[TimeSeriesRecord], rho: float, order: Sequence[int]) -> DiscreteMeasure:
    """Witness along one ray sector whose line order equals the output order.

    ``order`` lists observations (1-based, original numbering) by decreasing
    output.  The cell below the first ``k`` lines receives
    ``y(order[k-1]) - y(order[k])``, so observation ``order[j]`` sees exactly
    the masses of cells ``k > j``.
    """
    s = setup(series, rho)
    y = s.y
    T = len(order)
    masses: dict[Spectrum, float] = {}
    bits = [0] * T
    for k in range(T):
        bits[order[k] - 1] = 1
        nxt = y[order[k + 1] - 1] if k + 1 < T else 0.0
        diff = y[order[k] - 1] - nxt
        if diff < -1e-12 * max(1.0, abs(y).max()):
            raise ValidationError("order is not a non-increasing arrangement of the outputs")
        masses[tuple(bits)] = max(diff, 0.0)
    measure, _ = _witness_from(s, masses)
    return measure


def simulate_series(p0: ArrayLike, p: ArrayLike, rho: float, measure: DiscreteMeasure) -> list[TimeSeriesRecord]:
    """Outputs generated by a capacity distribution under profitable loading."""
    params = CesParams(check_rho(rho))
    p0 = np.asarray(p0, dtype=float)
    p = np.asarray(p, dtype=float)
    out = []
    for t in range(len(p0)):
        y = 0.0
        for x, m in zip(measure.points, measure.masses):
            if ces_unit_cost(params, p[t], x) <= p0[t]:
                y += m
        out.append(TimeSeriesRecord(t + 1, y, float(p0[t]), tuple(p[t])))
    return out
