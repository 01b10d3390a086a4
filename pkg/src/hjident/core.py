"""Shared domain types, CES unit costs, loading rules and grid conjugate transforms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import (
    DomainError,
    InfeasibleTransformError,
    MalformedProfitError,
    NumericRangeError,
    ValidationError,
)

BOUNDARY_TOL = 1e-9
LOG_SPACE_RHO = 8.0


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One observation: output volume ``y``, output price ``p0`` and input prices ``p``."""

    t: int
    y: float
    p0: float
    p: tuple[float, ...]

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise ValidationError(f"time index must be an integer >= 1, got {self.t!r}")
        if not np.isfinite(self.y) or self.y < 0:
            raise ValidationError(f"output must be finite and nonnegative, got {self.y!r}")
        if not np.isfinite(self.p0) or self.p0 <= 0:
            raise ValidationError(f"output price must be positive, got {self.p0!r}")
        p = tuple(float(v) for v in self.p)
        if not p or any(not np.isfinite(v) or v <= 0 for v in p):
            raise ValidationError(f"input prices must be positive, got {self.p!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "p0", float(self.p0))


def outputs(series: Sequence[TimeSeriesRecord]) -> NDArray[np.float64]:
    return np.array([r.y for r in series], dtype=float)


@dataclass(frozen=True)
class NormalizedPrices:
    """Input prices divided by the output price, one row per observation."""

    phat: NDArray[np.float64]

    def __post_init__(self):
        a = np.array(self.phat, dtype=float)
        if a.ndim != 2 or not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValidationError("normalized prices must be a finite positive (T, n) array")
        a.setflags(write=False)
        object.__setattr__(self, "phat", a)

    @classmethod
    def from_series(cls, series: Sequence[TimeSeriesRecord]) -> "NormalizedPrices":
        if not series:
            raise ValidationError("empty time series")
        return cls(np.array([np.asarray(r.p) / r.p0 for r in series]))

    def __array__(self, dtype=None, copy=None):
        return self.phat if dtype is None else self.phat.astype(dtype)

    def __len__(self):
        return self.phat.shape[0]


def as_phat(phat: ArrayLike | NormalizedPrices) -> NDArray[np.float64]:
    if isinstance(phat, NormalizedPrices):
        return phat.phat
    return NormalizedPrices(np.asarray(phat, dtype=float)).phat


def check_rho(rho: float) -> float:
    rho = float(rho)
    if not np.isfinite(rho) or rho == 0.0 or rho < -1.0:
        raise DomainError(f"rho must lie in [-1, 0) or (0, inf), got {rho!r}")
    return rho


@dataclass(frozen=True)
class CesParams:
    rho: float
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "rho", check_rho(self.rho))
        if self.n < 1:
            raise DomainError("dimension must be positive")

    @property
    def sigma(self) -> float:
        """Elasticity of substitution ``1/(1+rho)`` (infinite at rho = -1)."""
        return np.inf if self.rho == -1.0 else 1.0 / (1.0 + self.rho)


def _ces_value(q: NDArray[np.float64], rho: float) -> NDArray[np.float64]:
    if rho == -1.0:
        return q.sum(axis=-1)
    logq = np.log(q)
    if abs(rho) > LOG_SPACE_RHO:
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp(-logsumexp(-rho * logq, axis=-1) / rho)
    else:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            terms = q ** (-rho)
            bad = ~np.isfinite(terms) | (terms == 0.0)
            if np.any(bad):
                idx = np.argwhere(bad)[0]
                raise NumericRangeError(
                    f"CES term overflow/underflow in component {int(idx[-1])} "
                    f"(q={q[tuple(idx)]!r}, rho={rho})"
                )
            val = terms.sum(axis=-1) ** (-1.0 / rho)
    if not np.all(np.isfinite(val)) or np.any(val <= 0):
        raise NumericRangeError(f"CES unit cost not representable for rho={rho}")
    return val


class CesUnitCost:
    """CES unit cost ``h(q) = (sum_i q_i^{-rho})^{-1/rho}`` evaluated on ``q = p * x``.

    Vectorized over leading axes of ``q``.  At ``rho = -1`` it is the linear
    cost ``sum q_i`` of a fixed-proportion technology.
    """

    def __init__(self, rho: float):
        self.rho = check_rho(rho)

    def __call__(self, q: ArrayLike) -> NDArray[np.float64]:
        q = np.asarray(q, dtype=float)
        if np.any(~(q > 0)):
            raise ValidationError("CES arguments must be positive")
        return _ces_value(q, self.rho)

    def gradient(self, q: ArrayLike) -> tuple[NDArray[np.float64], bool]:
        """Gradient of ``h`` (Shephard demand per unit output); never tied for CES."""
        q = np.asarray(q, dtype=float)
        if self.rho == -1.0:
            return np.ones_like(q), False
        h = self(q)[..., None]
        return np.exp((1.0 + self.rho) * (np.log(h) - np.log(q))), False

    @property
    def bounded_level_sets(self) -> bool:
        return self.rho < 0

    def __repr__(self):
        return f"CesUnitCost(rho={self.rho!r})"


class MinUnitCost:
    """Unit cost ``min_i q_i`` of a perfect-substitutes technology.

    The cost-minimizing bundle is not unique when several components attain
    the minimum; ``gradient`` then reports a tie and returns the
    lexicographically smallest minimizer (all weight on the last tied index).
    """

    bounded_level_sets = False

    def __call__(self, q: ArrayLike) -> NDArray[np.float64]:
        return np.min(np.asarray(q, dtype=float), axis=-1)

    def gradient(self, q: ArrayLike, rtol: float = 1e-12) -> tuple[NDArray[np.float64], bool]:
        q = np.asarray(q, dtype=float)
        m = q.min()
        tied = np.flatnonzero(q <= m * (1 + rtol))
        g = np.zeros_like(q)
        g[tied[-1]] = 1.0
        return g, len(tied) > 1


def ces_unit_cost(params: CesParams, p: ArrayLike, x: ArrayLike) -> float:
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if p.shape != x.shape or p.shape[-1] != params.n:
        raise ValidationError("price and technology vectors must have dimension n")
    if np.any(~(p > 0)) or np.any(~(x > 0)):
        raise ValidationError("prices and technologies must be componentwise positive")
    out = _ces_value(p * x, params.rho)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite nonnegative measure: atoms ``points[j]`` with ``masses[j]``.

    ``radii[j] > 0`` marks an atom that stands for the uniform density on the
    disk of that radius (same integrals against indicators of cells that
    contain the disk).
    """

    points: NDArray[np.float64]
    masses: NDArray[np.float64]
    radii: NDArray[np.float64] | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        ms = np.array(self.masses, dtype=float).reshape(-1)
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 2)
        if pts.ndim != 2 or pts.shape[0] != ms.shape[0]:
            raise ValidationError("points must be (k, n) with one mass per point")
        if np.any(ms < 0) or not np.all(np.isfinite(ms)):
            raise ValidationError("masses must be finite and nonnegative")
        if np.any(~(pts > 0)):
            raise ValidationError("support points must lie in the open positive orthant")
        rs = np.zeros_like(ms) if self.radii is None else np.array(self.radii, dtype=float).reshape(-1)
        if rs.shape != ms.shape or np.any(rs < 0):
            raise ValidationError("radii must be nonnegative, one per atom")
        if np.any(rs > pts.min(axis=1, initial=np.inf)):
            raise ValidationError("smoothing disks must stay inside the positive orthant")
        for a in (pts, ms, rs):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        object.__setattr__(self, "radii", rs)

    @classmethod
    def empty(cls, n: int = 2) -> "DiscreteMeasure":
        return cls(np.zeros((0, n)), np.zeros(0))

    def __len__(self):
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True)
class LoadResult:
    loads: NDArray[np.float64]
    total_output: float
    resource_use: NDArray[np.float64]
    boundary: tuple[int, ...] = ()
    demand: NDArray[np.float64] | None = None
    ties: tuple[int, ...] = ()


def gnp_load(measure: DiscreteMeasure, p: ArrayLike, p0: float) -> LoadResult:
    """Load every technology that is profitable at prices ``(p, p0)``.

    Atoms with ``p.x == p0`` are loaded (indicator convention ``theta(0) = 1``)
    and listed in ``boundary``.
    """
    p = np.asarray(p, dtype=float)
    if p0 <= 0 or np.any(p <= 0):
        raise ValidationError("prices must be positive")
    margin = (p0 - measure.points @ p) / p0
    boundary = np.abs(margin) <= BOUNDARY_TOL
    loads = ((margin >= 0) | boundary).astype(float)
    w = loads * measure.masses
    return LoadResult(
        loads=loads,
        total_output=float(w.sum()),
        resource_use=w @ measure.points,
        boundary=tuple(int(i) for i in np.flatnonzero(boundary)),
    )


def gnp_load_generalized(measure: DiscreteMeasure, h, p: ArrayLike, p0: float) -> LoadResult:
    """Loading rule with substitution inside each technology.

    A unit of capacity with technology ``x`` is used iff ``p0 >= h(p * x)``;
    it then consumes the cost-minimizing bundle ``x * grad h(p * x)`` per unit
    of output.  ``h`` is a :class:`CesUnitCost`, a :class:`MinUnitCost`, or any
    callable (its gradient is then taken by central differences).
    """
    p = np.asarray(p, dtype=float)
    if p0 <= 0 or np.any(p <= 0):
        raise ValidationError("prices must be positive")
    q = measure.points * p
    cost = np.asarray(h(q), dtype=float).reshape(-1)
    margin = (p0 - cost) / p0
    boundary = np.abs(margin) <= BOUNDARY_TOL
    loads = ((margin >= 0) | boundary).astype(float)
    demand = np.zeros_like(measure.points)
    ties = []
    for j, qj in enumerate(q):
        if hasattr(h, "gradient"):
            g, tie = h.gradient(qj)
        else:
            g, tie = _numeric_gradient(h, qj), False
        if tie:
            ties.append(j)
        demand[j] = measure.points[j] * g
    w = loads * measure.masses
    return LoadResult(
        loads=loads,
        total_output=float(w.sum()),
        resource_use=w @ demand,
        boundary=tuple(int(i) for i in np.flatnonzero(boundary)),
        demand=demand,
        ties=tuple(ties),
    )


def _numeric_gradient(h: Callable, q: NDArray[np.float64]) -> NDArray[np.float64]:
    g = np.empty_like(q)
    for i in range(q.size):
        step = np.finfo(float).eps ** (1 / 3) * q[i]
        e = np.zeros_like(q)
        e[i] = step
        g[i] = (float(h(q + e)) - float(h(q - e))) / (2 * step)
    return g


# ---------------------------------------------------------------------------
# grid functions and conjugate transforms


@dataclass(frozen=True)
class GridFunction:
    """Samples of a function on a rectangular lattice ``axes[0] x axes[1] x ...``."""

    axes: tuple[NDArray[np.float64], ...]
    values: NDArray[np.float64]

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=float)
        for a in axes:
            if a.ndim != 1 or a.size < 1 or np.any(np.diff(a) <= 0) or np.any(a < 0):
                raise ValidationError("grid axes must be nonnegative and strictly increasing")
        if vals.shape != tuple(a.size for a in axes):
            raise ValidationError("values shape does not match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid values must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    @classmethod
    def sample(cls, f: Callable, axes: Sequence[ArrayLike]) -> "GridFunction":
        """Evaluate ``f`` (vectorized over an (..., n) array of points) on the lattice."""
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        return cls(axes, np.asarray(f(lattice_points(axes)), dtype=float).reshape([a.size for a in axes]))

    def points(self) -> NDArray[np.float64]:
        return lattice_points(self.axes).reshape(-1, len(self.axes))


def lattice_points(axes: Sequence[NDArray[np.float64]]) -> NDArray[np.float64]:
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def geometric_grid(lo: float, hi: float, num: int) -> NDArray[np.float64]:
    return np.geomspace(lo, hi, num)


def _directions(points: NDArray[np.float64], weights: NDArray[np.float64], keep_max: bool):
    # collapse positively proportional nodes onto the unit simplex
    s = points.sum(axis=1)
    d = points / s[:, None]
    key = np.round(d, 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    w = weights / s
    red = np.full(len(uniq), -np.inf if keep_max else np.inf)
    (np.maximum if keep_max else np.minimum).at(red, inv, w)
    return uniq, red, inv, s


def young_transform(f: GridFunction, p_axes: Sequence[ArrayLike] | None = None,
                    chunk: int = 2048) -> GridFunction:
    """``h(p) = inf { p.v / f(v) : f(v) > 0 }`` over the grid nodes of ``f``.

    Homogeneity is used to reduce both the technology and the price lattice to
    their directions on the unit simplex, so the cost is quadratic in the
    number of distinct directions rather than in the number of nodes.
    """
    v = f.points()
    vals = f.values.reshape(-1)
    mask = (vals > 0) & (v.sum(axis=1) > 0)
    if not np.any(mask):
        raise InfeasibleTransformError("f vanishes on the whole grid")
    dirs, g, _, _ = _directions(v[mask], vals[mask], keep_max=True)
    axes = f.axes if p_axes is None else tuple(np.asarray(a, dtype=float) for a in p_axes)
    p = lattice_points(axes).reshape(-1, len(axes))
    pos = p.sum(axis=1) > 0
    pd, _, inv, ps = _directions(p[pos], np.ones(pos.sum()), keep_max=True)
    hd = np.empty(len(pd))
    for i in range(0, len(pd), chunk):
        blk = pd[i:i + chunk] @ dirs.T / g[None, :]
        hd[i:i + chunk] = blk.min(axis=1)
    out = np.zeros(p.shape[0])
    out[pos] = ps * hd[inv]
    return GridFunction(axes, out.reshape([a.size for a in axes]))


@dataclass(frozen=True)
class ConjugateResult:
    value: float
    argopt: NDArray[np.float64]
    warnings: tuple[str, ...] = ()


def fenchel_profit_from_production(F: GridFunction, p: ArrayLike, p0: float) -> ConjugateResult:
    """``sup_l (p0 F(l) - p.l)`` over the grid nodes (the origin is always admissible)."""
    p = np.asarray(p, dtype=float)
    if p0 <= 0 or np.any(p < 0):
        raise ValidationError("prices must be nonnegative with p0 > 0")
    obj = p0 * F.values
    for k, a in enumerate(F.axes):
        shape = [1] * len(F.axes)
        shape[k] = a.size
        obj = obj - p[k] * a.reshape(shape)
    idx = np.unravel_index(int(np.argmax(obj)), obj.shape)
    best = float(obj[idx])
    if best <= 0:
        return ConjugateResult(0.0, np.zeros(len(F.axes)))
    warnings = []
    if any(i == a.size - 1 for i, a in zip(idx, F.axes)):
        warnings.append("supremum attained on the outer grid boundary; enlarge the grid")
    if any(i == 0 and a[0] > 0 for i, a in zip(idx, F.axes)):
        warnings.append("supremum attained on the inner grid boundary; extend the grid towards 0")
    return ConjugateResult(best, np.array([a[i] for a, i in zip(F.axes, idx)]), tuple(warnings))


def default_price_axis(lo: float = 1e-4, hi: float = 1e4, num: int = 161) -> NDArray[np.float64]:
    return np.concatenate([[0.0], np.geomspace(lo, hi, num)])


def fenchel_production_from_profit(Pi: Callable, l: ArrayLike, p0: float,
                                   axes: Sequence[ArrayLike] | None = None,
                                   refine: int = 4, zoom_points: int = 41) -> ConjugateResult:
    """``(1/p0) inf_{p >= 0} (Pi(p, p0) + p.l)`` over a price lattice.

    ``Pi`` is called with an (m, n) array of price vectors and must return m
    values.  The objective is convex in ``p``, so after the first pass the
    lattice is repeatedly zoomed around the incumbent minimizer.
    """
    l = np.asarray(l, dtype=float)
    if p0 <= 0 or np.any(l < 0):
        raise ValidationError("need p0 > 0 and l >= 0")
    n = l.size
    axes = [default_price_axis() for _ in range(n)] if axes is None else [np.asarray(a, float) for a in axes]
    best_val, best_p = np.inf, None
    for rnd in range(refine + 1):
        pts = lattice_points(axes).reshape(-1, n)
        vals = np.asarray(Pi(pts, p0), dtype=float).reshape(-1) + pts @ l
        if not np.all(np.isfinite(vals)):
            raise MalformedProfitError("profit evaluator returned non-finite values")
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_p = float(vals[k]), pts[k]
        idx = np.unravel_index(k, [a.size for a in axes])
        new_axes = []
        for a, i in zip(axes, idx):
            lo, hi = a[max(i - 3, 0)], a[min(i + 3, a.size - 1)]
            new_axes.append(np.unique(np.concatenate([np.linspace(lo, hi, zoom_points), [a[i]]])))
        axes = new_axes
    scale = float(np.abs(np.asarray(Pi(best_p[None, :], p0))).max()) + float(np.abs(best_p) @ l) + 1.0
    if best_val < -1e-9 * scale:
        raise MalformedProfitError(
            f"Pi(p,p0) + p.l is negative ({best_val:g}) at p={best_p}; profit function unbounded below"
        )
    return ConjugateResult(max(best_val, 0.0) / p0, best_p)
