"""Cones spanned by 0/1 spectra: membership with certificates, facets, discrete convexity."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import nnls

from .errors import CapabilityError, NumericFailureError, ValidationError

FEAS_TOL = 1e-9
BORDERLINE_TOL = 1e-6
MAX_FACET_DIM = 12


@dataclass(frozen=True)
class PolyhedralCone:
    """Cone generated by distinct nonzero 0/1 vectors of length ``T``."""

    generators: tuple[tuple[int, ...], ...]
    T: int

    def __post_init__(self):
        gens = tuple(tuple(int(v) for v in g) for g in self.generators)
        if any(len(g) != self.T for g in gens):
            raise ValidationError("generator length differs from the ambient dimension")
        if any(v not in (0, 1) for g in gens for v in g):
            raise ValidationError("generators must have 0/1 entries")
        if len(set(gens)) != len(gens):
            raise ValidationError("generators must be distinct")
        object.__setattr__(self, "generators", gens)

    @property
    def matrix(self) -> NDArray[np.float64]:
        return np.array(self.generators, dtype=float).reshape(len(self.generators), self.T)

    def __len__(self):
        return len(self.generators)


def cone_from_spectra(spectra: Iterable[Sequence[int]]) -> PolyhedralCone:
    """Deduplicate, drop the zero spectrum and sort lexicographically."""
    spectra = [tuple(int(v) for v in s) for s in spectra]
    if not spectra:
        raise ValidationError("need at least one spectrum")
    T = len(spectra[0])
    gens = sorted({s for s in spectra if any(s)})
    return PolyhedralCone(tuple(gens), T)


@dataclass(frozen=True)
class MembershipWitness:
    coefficients: NDArray[np.float64]
    residual: float
    exact: bool = False


@dataclass(frozen=True)
class FarkasCertificate:
    """``nu . g >= 0`` for every generator ``g`` and ``nu . y = margin < 0``."""

    nu: NDArray[np.float64]
    margin: float
    exact: bool = False


@dataclass(frozen=True)
class Membership:
    contains: bool
    witness: MembershipWitness | None = None
    certificate: FarkasCertificate | None = None
    used_exact: bool = False
    float_verdict: bool | None = None

    def __iter__(self):
        yield self.contains
        yield self.witness if self.contains else self.certificate

    def __bool__(self):
        return self.contains


def _certificate_ok(Z: NDArray, nu: NDArray, y: NDArray) -> float | None:
    scale = max(1.0, float(np.abs(y).max(initial=0.0)))
    if np.min(Z @ nu, initial=0.0) < -1e-12:
        return None
    margin = float(nu @ y)
    return margin if margin <= -FEAS_TOL * scale else None


def _rational_vector(v: NDArray, max_den: int = 64) -> list[Fraction] | None:
    out = [Fraction(float(x)).limit_denominator(max_den) for x in v]
    return out if np.allclose([float(f) for f in out], v, atol=1e-9, rtol=0) else None


def cone_contains(cone: PolyhedralCone, y: ArrayLike, exact: bool = False) -> Membership:
    """Decide ``y in cone``.

    The floating-point pass is a nonnegative least-squares projection: the
    residual ``r = y - Z^T lam`` is zero iff ``y`` is in the cone, and
    otherwise ``nu = -r`` satisfies ``Z nu >= 0`` and ``nu . y = -|r|^2``
    (the optimality conditions of the projection), i.e. it is a Farkas
    certificate.  Results within ``1e-6`` of the decision threshold, or whose
    certificate fails its own check, are recomputed by an exact rational
    phase-1 simplex.  ``exact=True`` forces the rational path.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != cone.T:
        raise ValidationError(f"y has dimension {y.size}, cone lives in R^{cone.T}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("y must be finite")
    Z = cone.matrix
    scale = max(1.0, float(np.abs(y).max(initial=0.0)))
    if not np.any(y):
        return Membership(True, MembershipWitness(np.zeros(len(cone)), 0.0), float_verdict=True)
    if exact:
        return _exact_membership(cone, y, None)
    if len(cone) == 0:
        lam, r = np.zeros(0), y.copy()
    else:
        lam, _ = nnls(Z.T, y, maxiter=50 * max(Z.shape))
        r = y - Z.T @ lam
    res = float(np.abs(r).max()) / scale
    if res <= FEAS_TOL:
        return Membership(True, MembershipWitness(lam, res), float_verdict=True)
    nu = -r / np.abs(r).max()
    rat = _rational_vector(nu)
    if rat is not None:
        cand = np.array([float(f) for f in rat])
        m = _certificate_ok(Z, cand, y)
        if m is not None:
            nu = cand
    margin = _certificate_ok(Z, nu, y)
    if margin is not None and res > BORDERLINE_TOL:
        return Membership(False, certificate=FarkasCertificate(nu, margin), float_verdict=False)
    return _exact_membership(cone, y, False if margin is not None else None)


def _exact_membership(cone: PolyhedralCone, y: NDArray, float_verdict: bool | None) -> Membership:
    yq = [Fraction(float(v)) for v in y]
    feasible, lam, u = exact_phase1(cone.generators, yq)
    if feasible:
        lam_f = np.array([float(v) for v in lam])
        res = float(np.abs(cone.matrix.T @ lam_f - y).max()) / max(1.0, float(np.abs(y).max()))
        return Membership(True, MembershipWitness(lam_f, res, exact=True), used_exact=True,
                          float_verdict=float_verdict)
    g = 0
    for v in u:
        g = max(g, abs(v))
    nu = np.array([float(v / g) for v in u])
    margin = float(sum(a * b for a, b in zip(u, yq)) / g)
    return Membership(False, certificate=FarkasCertificate(nu, margin, exact=True), used_exact=True,
                      float_verdict=float_verdict)


def exact_phase1(generators: Sequence[Sequence[int]], y: Sequence[Fraction], max_iter: int = 20000):
    """Phase-1 simplex in rational arithmetic for ``sum_j lam_j g_j = y, lam >= 0``.

    Returns ``(True, lam, None)`` or ``(False, None, nu)`` with ``nu`` an exact
    Farkas vector: ``nu . g_j >= 0`` for all ``j`` and ``nu . y < 0``.
    Bland's rule guarantees termination; the iteration cap is a safety net.
    """
    T = len(y)
    m = len(generators)
    sign = [1 if v >= 0 else -1 for v in y]
    ncol = m + T
    # tableau rows: constraint i -> [coeffs..., rhs]
    rows = []
    for i in range(T):
        r = [Fraction(sign[i] * generators[j][i]) for j in range(m)]
        r += [Fraction(1 if k == i else 0) for k in range(T)]
        r.append(sign[i] * y[i])
        rows.append(r)
    basis = [m + i for i in range(T)]
    cost = [Fraction(0)] * m + [Fraction(1)] * T
    # reduced costs d_j = c_j - c_B B^{-1} A_j ; objective value = c_B B^{-1} b
    d = cost[:]
    obj = Fraction(0)
    for i in range(T):
        for j in range(ncol):
            d[j] -= rows[i][j]
        obj += rows[i][-1]
    for _ in range(max_iter):
        enter = next((j for j in range(ncol) if d[j] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i in range(T):
            a = rows[i][enter]
            if a > 0:
                ratio = rows[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:  # cannot happen: phase-1 objective is bounded below by 0
            raise NumericFailureError("unbounded phase-1 problem")
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for i in range(T):
            if i != leave and rows[i][enter] != 0:
                f = rows[i][enter]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[leave])]
        f = d[enter]
        d = [a - f * b for a, b in zip(d, rows[leave][:ncol])]
        obj += f * rows[leave][-1]
        basis[leave] = enter
    else:
        raise NumericFailureError("exact simplex iteration cap exceeded")
    if obj == 0:
        lam = [Fraction(0)] * m
        for i, b in enumerate(basis):
            if b < m:
                lam[b] = rows[i][-1]
        return True, lam, None
    # duals of the sign-adjusted system: u_i = c_art - d_art = 1 - d_{m+i}
    u = [1 - d[m + i] for i in range(T)]
    nu = [-sign[i] * u[i] for i in range(T)]
    return False, None, nu


# ---------------------------------------------------------------------------
# facets by double description


@dataclass(frozen=True)
class FacetNormal:
    nu: tuple[int, ...]
    tight_generators: tuple[int, ...]


@dataclass(frozen=True)
class FacetEnumeration:
    """Facet normals plus, for lower-dimensional cones, a basis of the normals of the span."""

    normals: tuple[FacetNormal, ...]
    lineality: tuple[tuple[int, ...], ...] = ()

    @property
    def full_dimensional(self) -> bool:
        return not self.lineality

    def __iter__(self):
        return iter(self.normals)

    def __len__(self):
        return len(self.normals)

    def __getitem__(self, i):
        return self.normals[i]


def _primitive(v: Sequence[Fraction | int]) -> tuple[int, ...]:
    den = 1
    for x in v:
        den = lcm(den, Fraction(x).denominator)
    ints = [int(Fraction(x) * den) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    return tuple(x // g for x in ints) if g else tuple(ints)


def _independent_rows(rows: Sequence[Sequence[int]]) -> list[int]:
    basis: list[list[Fraction]] = []
    pivots: list[int] = []
    chosen = []
    for idx, row in enumerate(rows):
        v = [Fraction(x) for x in row]
        for b, p in zip(basis, pivots):
            if v[p] != 0:
                f = v[p] / b[p]
                v = [a - f * c for a, c in zip(v, b)]
        nz = next((k for k, x in enumerate(v) if x != 0), None)
        if nz is not None:
            basis.append(v)
            pivots.append(nz)
            chosen.append(idx)
    return chosen


def _nullspace(rows: Sequence[Sequence[int]], d: int) -> list[tuple[int, ...]]:
    """Integer basis of ``{v : row . v = 0 for all rows}``."""
    mat = [[Fraction(x) for x in r] for r in rows]
    piv_cols = []
    r = 0
    for c in range(d):
        k = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if k is None:
            continue
        mat[r], mat[k] = mat[k], mat[r]
        p = mat[r][c]
        mat[r] = [x / p for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        piv_cols.append(c)
        r += 1
    free = [c for c in range(d) if c not in piv_cols]
    out = []
    for fc in free:
        v = [Fraction(0)] * d
        v[fc] = Fraction(1)
        for i, pc in enumerate(piv_cols):
            v[pc] = -mat[i][fc]
        out.append(_primitive(v))
    return out


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _inverse(B: list[list[int]]) -> list[list[Fraction]]:
    n = len(B)
    M = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(B)]
    for c in range(n):
        k = next(i for i in range(c, n) if M[i][c] != 0)
        M[c], M[k] = M[k], M[c]
        p = M[c][c]
        M[c] = [x / p for x in M[c]]
        for i in range(n):
            if i != c and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[c])]
    return [row[n:] for row in M]


def extreme_rays(A: Sequence[Sequence[int]], d: int) -> list[tuple[int, ...]]:
    """Extreme rays of the pointed cone ``{v in Z^d : A v >= 0}`` (``rank A = d``).

    Incremental double description with the combinatorial adjacency test,
    in exact integer arithmetic.
    """
    A = [tuple(int(x) for x in r) for r in A]
    first = _independent_rows(A)
    if len(first) != d:
        raise ValidationError("constraint matrix must have full column rank")
    inv = _inverse([list(A[i]) for i in first])
    rays = [_primitive([inv[r][k] for r in range(d)]) for k in range(d)]
    zero = []
    for ray in rays:
        z = 0
        for i in first:
            if _dot(A[i], ray) == 0:
                z |= 1 << i
        zero.append(z)
    rest = [i for i in range(len(A)) if i not in set(first)]
    for i in rest:
        vals = [_dot(A[i], r) for r in rays]
        plus = [k for k, v in enumerate(vals) if v > 0]
        minus = [k for k, v in enumerate(vals) if v < 0]
        zer = [k for k, v in enumerate(vals) if v == 0]
        new_rays, new_zero = [], []
        for p in plus:
            for q in minus:
                common = zero[p] & zero[q]
                if bin(common).count("1") < d - 2:
                    continue
                if any(k != p and k != q and (zero[k] & common) == common for k in range(len(rays))):
                    continue
                v = [vals[p] * b - vals[q] * a for a, b in zip(rays[p], rays[q])]
                new_rays.append(_primitive(v))
                new_zero.append(common | (1 << i))
        rays = [rays[k] for k in plus] + [rays[k] for k in zer] + new_rays
        zero = [zero[k] for k in plus] + [zero[k] | (1 << i) for k in zer] + new_zero
    return sorted(set(rays))


def facet_normals(cone: PolyhedralCone) -> FacetEnumeration:
    """Primitive integer inner normals of all facets (``T <= 12``)."""
    T = cone.T
    if T > MAX_FACET_DIM:
        raise CapabilityError(f"facet enumeration is limited to T <= {MAX_FACET_DIM}; use cone_contains")
    G = [list(g) for g in cone.generators]
    span = _independent_rows(G)
    r = len(span)
    if r == T:
        rays = extreme_rays(G, T)
        lin: list[tuple[int, ...]] = []
    else:
        lin = _nullspace(G, T)
        if r == 0:
            return FacetEnumeration((), tuple(lin))
        Bs = [G[i] for i in span]
        # parametrize nu = Bs^T c inside span(G); constraints G Bs^T c >= 0
        M = [[_dot(g, b) for b in Bs] for g in G]
        rays = []
        for c in extreme_rays(M, r):
            nu = [sum(c[k] * Bs[k][j] for k in range(r)) for j in range(T)]
            rays.append(_primitive(nu))
        rays = sorted(set(rays))
    normals = []
    for nu in rays:
        tight = tuple(j for j, g in enumerate(cone.generators) if _dot(nu, g) == 0)
        normals.append(FacetNormal(nu, tight))
    return FacetEnumeration(tuple(normals), tuple(lin))


def is_discretely_convex(cone: PolyhedralCone, facets: FacetEnumeration | None = None):
    """``(True, None)`` iff every facet has a normal with entries in {-1, 0, 1}.

    For full-dimensional cones the facet normal is unique up to scaling, so
    the test is entrywise on the primitive normal.  Otherwise all
    {-1,0,1}-vectors defining the same face are searched.
    """
    facets = facet_normals(cone) if facets is None else facets
    Z = np.array(cone.generators, dtype=np.int64).reshape(len(cone), cone.T)
    for f in facets:
        if max(abs(v) for v in f.nu) <= 1:
            continue
        if facets.full_dimensional:
            return False, f
        tight = np.zeros(len(cone), dtype=bool)
        tight[list(f.tight_generators)] = True
        found = False
        for chunk in _sign_vectors(cone.T):
            vals = Z @ chunk.T
            ok = np.all(vals[tight] == 0, axis=0) & np.all(vals[~tight] > 0, axis=0)
            if np.any(ok):
                found = True
                break
        if not found:
            return False, f
    return True, None


def _sign_vectors(T: int, chunk: int = 1 << 16):
    """All vectors of {-1,0,1}^T in a fixed order, in numpy chunks."""
    total = 3 ** T
    powers = 3 ** np.arange(T - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield ((idx[:, None] // powers[None, :]) % 3 - 1).astype(np.int64)


@dataclass(frozen=True)
class NecessaryCheck:
    passed: bool
    pair: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    mode: str = "exhaustive"

    def __iter__(self):
        yield self.passed
        yield self.pair

    def __bool__(self):
        return self.passed


def necessary_condition(y: ArrayLike, spectra: Iterable[Sequence[int]], mode: str = "auto",
                        normals: Sequence[Sequence[int]] | None = None) -> NecessaryCheck:
    """Pairwise comparison test for membership.

    For disjoint index sets ``O1, O2`` (encoded as ``nu`` with +1 on ``O1``,
    -1 on ``O2``): whenever every cell lies below at least as many lines of
    ``O1`` as of ``O2``, the outputs must satisfy ``y(O1) >= y(O2)``.
    ``mode='exhaustive'`` enumerates all 3^T patterns (T <= 12);
    ``mode='facet'`` checks only the supplied (or enumerated) facet normals,
    which is equivalent when the cone is discretely convex.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    W = np.array(sorted({tuple(int(v) for v in s) for s in spectra}), dtype=np.int64)
    T = W.shape[1]
    if y.size != T:
        raise ValidationError("dimension mismatch between y and spectra")
    tol = FEAS_TOL * max(1.0, float(np.abs(y).max(initial=0.0)))
    if mode == "auto":
        mode = "exhaustive" if T <= MAX_FACET_DIM else "facet"
    if mode == "exhaustive":
        if T > MAX_FACET_DIM:
            raise CapabilityError("exhaustive mode is limited to T <= 12; use cone_contains")
        worst, worst_nu = -tol, None
        for chunk in _sign_vectors(T):
            ok = np.all(W @ chunk.T >= 0, axis=0)
            if not np.any(ok):
                continue
            vals = chunk[ok] @ y
            k = int(np.argmin(vals))
            if vals[k] < worst:
                worst, worst_nu = float(vals[k]), chunk[ok][k]
        if worst_nu is None:
            return NecessaryCheck(True, None, "exhaustive")
        return NecessaryCheck(False, _pair(worst_nu), "exhaustive")
    if mode != "facet":
        raise ValidationError(f"unknown mode {mode!r}")
    if normals is None:
        if T > MAX_FACET_DIM:
            raise CapabilityError("facet mode needs explicit normals for T > 12; use cone_contains")
        cone = cone_from_spectra(W.tolist())
        facets = facet_normals(cone)
        ok, _ = is_discretely_convex(cone, facets)
        if not ok or not facets.full_dimensional:
            raise CapabilityError("cone is not discretely convex; facet mode would be unsound")
        normals = [f.nu for f in facets]
    for nu in normals:
        nu = np.asarray(nu)
        if float(nu @ y) < -tol:
            return NecessaryCheck(False, _pair(nu), "facet")
    return NecessaryCheck(True, None, "facet")


def _pair(nu) -> tuple[tuple[int, ...], tuple[int, ...]]:
    nu = np.asarray(nu)
    return (tuple(int(i) + 1 for i in np.flatnonzero(nu > 0)),
            tuple(int(i) + 1 for i in np.flatnonzero(nu < 0)))
