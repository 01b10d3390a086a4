"""Aggregate profit of small groups of Houthakker-Johansen industries.

Each industry owns finitely many fixed-proportion technologies (a discrete
capacity distribution over primary-resource requirements) and sells its
whole output to final consumers, whose preferences are a homogeneous utility
``F0`` over the products.  The aggregate profit at resource prices ``s`` and
consumer price index ``p0`` is the minimum of the industries' total profit
over product prices ``q`` with ``q0(q) >= p0``, where ``q0`` is the cost
function dual to ``F0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq, minimize, minimize_scalar

from .core import DiscreteMeasure
from .errors import DomainError, NumericFailureError, PreconditionError, ValidationError

COLLINEAR_RTOL = 1e-9


@dataclass(frozen=True)
class Industry:
    measure: DiscreteMeasure
    id: str = ""

    def profit(self, q_j: float, s: ArrayLike) -> float:
        """``sum_a m_a (q_j - s.x_a)_+``: the industry's maximal profit at output price ``q_j``."""
        cost = self.measure.points @ np.asarray(s, dtype=float)
        return float(np.sum(self.measure.masses * np.maximum(q_j - cost, 0.0)))


def industry(points: ArrayLike, masses: ArrayLike, id: str = "") -> Industry:
    return Industry(DiscreteMeasure(np.atleast_2d(np.asarray(points, dtype=float)), masses), id)


@dataclass(frozen=True)
class Demand:
    """Final-demand utility: ``"leontief"`` (min), ``"ces"`` with ``rho``, or ``"identity"`` (one product)."""

    kind: str
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in ("leontief", "ces", "identity"):
            raise ValidationError(f"unknown demand kind {self.kind!r}")
        if self.kind == "ces":
            if self.rho is None or not np.isfinite(self.rho) or self.rho == 0 or self.rho < -1:
                raise DomainError("CES demand needs rho in [-1, 0) or (0, inf)")

    def utility(self, X: ArrayLike) -> float:
        X = np.asarray(X, dtype=float)
        if self.kind == "identity":
            return float(X.sum())
        if self.kind == "leontief":
            return float(X.min())
        if self.rho == -1.0:
            return float(X.sum())
        if np.any(X <= 0):
            if self.rho > 0 or not np.any(X > 0):
                return 0.0
            X = X[X > 0]
        return float(np.sum(X ** (-self.rho)) ** (-1.0 / self.rho))

    def price_index(self, q: ArrayLike) -> float:
        """``q0(q) = inf { q.X / F0(X) }``."""
        q = np.asarray(q, dtype=float)
        if self.kind == "identity":
            return float(q.sum())
        if self.kind == "leontief":
            return float(q.sum())
        if self.rho == -1.0:
            return float(q.min())
        e = self.rho / (1.0 + self.rho)
        if np.any(q <= 0):
            if e < 0:
                return 0.0
            return float(np.sum(q[q > 0] ** e) ** (1.0 / e)) if np.any(q > 0) else 0.0
        return float(np.sum(q ** e) ** (1.0 / e))


@dataclass(frozen=True)
class ConeK:
    """Cone of admissible resource prices spanned by ``generators``."""

    generators: NDArray[np.float64]

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if g.size == 0 or np.any(np.all(g == 0, axis=1)):
            raise ValidationError("cone generators must be nonzero")
        object.__setattr__(self, "generators", g)

    @classmethod
    def orthant(cls, n: int) -> "ConeK":
        return cls(np.eye(n))

    def dual_contains(self, d: ArrayLike, rtol: float = 1e-12) -> bool:
        """``d`` in K* iff ``d.g >= 0`` for every generator."""
        d = np.asarray(d, dtype=float)
        scale = np.abs(self.generators).max() * max(np.abs(d).max(), 1e-300)
        return bool(np.all(self.generators @ d >= -rtol * scale))


# ---------------------------------------------------------------------------
# two-industry closed forms


@dataclass(frozen=True)
class ComplementaryProfit:
    value: float
    profit_1: float
    profit_2: float
    cone: int  # 1 if s.y2 <= s.y1, else 2


def _vec(v) -> NDArray[np.float64]:
    return np.asarray(v, dtype=float)


def aggregate_profit_complementary(k0, z, k1, y1, k2, y2, s, p0) -> ComplementaryProfit:
    """Aggregate profit for one single-technology and one two-technology industry under min-demand."""
    z, y1, y2, s = _vec(z), _vec(y1), _vec(y2), _vec(s)
    if not p0 > 0 or np.any(s < 0):
        raise ValidationError("need p0 > 0 and s >= 0")
    if min(k0, k1, k2) < 0:
        raise ValidationError("capacities must be nonnegative")
    if not k1 + k2 > k0:
        raise PreconditionError("the closed form assumes k1 + k2 > k0")
    c1, c2 = s @ (z + y1), s @ (z + y2)
    pi1 = max(k0 - k2, 0) * max(p0 - c1, 0) + min(k0, k2) * max(p0 - c2, 0)
    pi2 = min(k0, k1) * max(p0 - c1, 0) + max(k0 - k1, 0) * max(p0 - c2, 0)
    return ComplementaryProfit(float(max(pi1, pi2)), float(pi1), float(pi2), 1 if s @ y2 <= s @ y1 else 2)


def ces_kappas(k0: float, k_total: float, rho: float) -> tuple[float, float]:
    e = (1.0 + rho) / rho
    base = k0 ** rho + k_total ** rho
    return float((base / k_total ** rho) ** e), float((base / k0 ** rho) ** e)


@dataclass(frozen=True)
class CesAggregateProfit:
    value: float
    in_region: bool
    kappa1: float
    kappa2: float
    measure: DiscreteMeasure | None


def aggregate_profit_ces_demand(k0, z, k1, y1, k2, y2, rho, s, p0) -> CesAggregateProfit:
    """Closed form valid when ``p0`` exceeds every rescaled technology cost; numeric otherwise.

    Inside the region the group behaves like one industry whose technologies
    are ``kappa1 z``, ``kappa2 y1``, ``kappa2 y2`` with masses
    ``k0/kappa1``, ``k1/kappa2``, ``k2/kappa2``.
    """
    z, y1, y2, s = _vec(z), _vec(y1), _vec(y2), _vec(s)
    if not p0 > 0 or np.any(s < 0):
        raise ValidationError("need p0 > 0 and s >= 0")
    if min(k0, k1 + k2) <= 0:
        raise ValidationError("capacities must be positive")
    demand = Demand("ces", rho)
    kap1, kap2 = ces_kappas(k0, k1 + k2, rho)
    in_region = p0 > max(kap1 * (s @ z), kap2 * max(s @ y1, s @ y2))
    measure = DiscreteMeasure(np.array([kap1 * z, kap2 * y1, kap2 * y2]),
                              np.array([k0 / kap1, k1 / kap2, k2 / kap2]))
    if in_region:
        val = float(np.sum(measure.masses * np.maximum(p0 - measure.points @ s, 0.0)))
        return CesAggregateProfit(val, True, kap1, kap2, measure)
    inds = [industry([z], [k0]), industry([y1, y2], [k1, k2])]
    res = aggregate_profit_numeric(inds, demand, s, p0)
    return CesAggregateProfit(res.value, False, kap1, kap2, None)


# ---------------------------------------------------------------------------
# numeric aggregate profit


@dataclass(frozen=True)
class AggregateResult:
    value: float
    q: NDArray[np.float64]
    constraint_slack: float
    stationarity_residual: float
    start_values: tuple[float, ...]
    converged: bool
    notes: tuple[str, ...] = field(default=())


def _total_profit(industries: Sequence[Industry], q: NDArray, s: NDArray) -> float:
    return sum(ind.profit(qj, s) for ind, qj in zip(industries, q))


def aggregate_profit_numeric(industries: Sequence[Industry], demand: Demand, s: ArrayLike, p0: float,
                             grid: int | None = None, starts: int = 3, tol: float = 1e-9) -> AggregateResult:
    """``min { sum_j Pi_j(q_j, s) : q0(q) >= p0, q >= 0 }`` for up to three industries.

    Profits increase in ``q``, so the constraint is active; by homogeneity of
    ``q0`` the feasible boundary is ``q = p0 w / q0(w)`` for ``w`` on the unit
    simplex.  A grid over ``w`` supplies the starts, each refined by a local
    search; the best refined value wins (ties go to the earlier start).
    """
    s = _vec(s)
    m = len(industries)
    if not p0 > 0 or np.any(s < 0):
        raise ValidationError("need p0 > 0 and s >= 0")
    if not 1 <= m <= 3:
        raise ValidationError("desk-scale aggregation handles one to three industries")
    if demand.kind == "identity" and m != 1:
        raise ValidationError("identity demand needs exactly one industry")
    if m == 1:
        q = np.array([p0 / demand.price_index(np.ones(1))])
        return AggregateResult(_total_profit(industries, q, s), q, 0.0, 0.0, (), True)

    def point(w):
        w = np.clip(np.asarray(w, dtype=float), 0.0, None)
        c = demand.price_index(w)
        if not c > 0:
            return None
        return p0 * w / c

    def objective(w):
        q = point(w)
        return np.inf if q is None else _total_profit(industries, q, s)

    if m == 2:
        n = grid or 4001
        ts = np.linspace(0.0, 1.0, n)
        vals = np.array([objective((t, 1 - t)) for t in ts])
        cand = _local_minima(vals)[:starts]
        results = []
        for i in cand:
            lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n - 1)]
            r = minimize_scalar(lambda t: objective((t, 1 - t)), bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-13, "maxiter": 500})
            t_best, v_best = (r.x, r.fun) if r.fun <= vals[i] else (ts[i], vals[i])
            # the objective has kinks where some q_j equals an atom cost; minima often sit there
            for t in _kinks(industries, point, s, lo, hi):
                v = objective((t, 1 - t))
                if v < v_best:
                    t_best, v_best = t, v
            results.append((float(v_best), np.array([t_best, 1 - t_best])))
    else:
        n = grid or 90
        pts = [(i / n, j / n, 1 - (i + j) / n) for i in range(n + 1) for j in range(n + 1 - i)]
        vals = np.array([objective(w) for w in pts])
        order = np.argsort(vals, kind="stable")[:starts]
        results = []
        for i in order:
            def f2(v):
                w = np.array([v[0], v[1], 1 - v[0] - v[1]])
                return np.inf if np.any(w < -1e-15) else objective(np.clip(w, 0, None))
            r = minimize(f2, np.array(pts[i][:2]), method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000,
                                  "initial_simplex": np.array(pts[i][:2]) + np.array([[0, 0], [0.5 / n, 0], [0, 0.5 / n]])})
            v = r.fun if r.fun <= vals[i] else vals[i]
            x = r.x if r.fun <= vals[i] else np.array(pts[i][:2])
            results.append((float(v), np.array([x[0], x[1], 1 - x[0] - x[1]])))
    best_k = min(range(len(results)), key=lambda k: (results[k][0], k))
    value, w = results[best_k]
    if not np.isfinite(value):
        raise NumericFailureError("no feasible start found")
    q = point(w)
    slack = demand.price_index(q) - p0
    # local optimality along the feasible boundary
    step = 1e-6
    worse = []
    for d in np.eye(m):
        for sgn in (1.0, -1.0):
            w2 = np.clip(w + sgn * step * (d - w.mean()), 0.0, None)
            if w2.sum() > 0:
                worse.append(objective(w2 / w2.sum()))
    stationarity = max(0.0, value - min(worse)) if worse else 0.0
    spread = max(r[0] for r in results) - value
    converged = stationarity <= tol * max(1.0, abs(value))
    notes = () if converged else (f"local search stalled; best value {value!r}, start spread {spread!r}",)
    return AggregateResult(float(value), q, float(slack), float(stationarity),
                           tuple(r[0] for r in results), converged, notes)


def _kinks(industries: Sequence[Industry], point, s: NDArray, lo: float, hi: float) -> list[float]:
    """Split points ``t`` in ``[lo, hi]`` with ``q_j(t, 1 - t) = s . x`` for an atom ``x`` of industry ``j``."""
    out = []
    for j, ind in enumerate(industries):
        qj = lambda t: point((t, 1 - t))[j]
        for c in np.unique(ind.measure.points @ s):
            try:
                a, b = qj(lo) - c, qj(hi) - c
            except TypeError:  # boundary point outside the demand's domain
                continue
            if a == 0:
                out.append(lo)
            elif a * b < 0:
                out.append(brentq(lambda t: qj(t) - c, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return out


def _local_minima(vals: NDArray) -> list[int]:
    n = len(vals)
    idx = [i for i in range(n)
           if (i == 0 or vals[i] <= vals[i - 1]) and (i == n - 1 or vals[i] <= vals[i + 1])]
    return sorted(idx, key=lambda i: (vals[i], i))


# ---------------------------------------------------------------------------
# stable correspondences


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    pair: tuple[int, int] | None = None
    criterion: str | None = None

    def __iter__(self):
        return iter((self.stable, self.pair))


def _nonneg_proportional(d: NDArray, e: NDArray, rtol: float = COLLINEAR_RTOL) -> bool:
    nd, ne = np.linalg.norm(d), np.linalg.norm(e)
    if ne == 0 or nd == 0:
        return True
    return bool(np.linalg.norm(d / nd - e / ne) <= rtol)


def k_stable_check(X: ArrayLike, Y: ArrayLike, gamma: Sequence[int], K: ConeK) -> StabilityVerdict:
    """Order-theoretic test that ``gamma`` (``X[i] -> Y[gamma[i]]``) is K-stable.

    (i) ``x_j - x_i`` in K* forces ``gamma(x_j) - gamma(x_i)`` in K*;
    (ii) if neither ``x_j - x_i`` nor its negative is in K*, the image
    difference must be a nonnegative multiple of it (or zero).
    """
    X = np.atleast_2d(_vec(X))
    Y = np.atleast_2d(_vec(Y))
    gamma = [int(g) for g in gamma]
    if X.shape != Y.shape:
        raise ValidationError("X and Y must have equal size and dimension")
    if sorted(gamma) != list(range(len(X))):
        raise ValidationError("gamma must be a bijection onto the indices of Y")
    if K.generators.shape[1] != X.shape[1]:
        raise ValidationError("cone dimension differs from technology dimension")
    m = len(X)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            d = X[j] - X[i]
            e = Y[gamma[j]] - Y[gamma[i]]
            fwd, bwd = K.dual_contains(d), K.dual_contains(-d)
            if np.any(d != 0) and fwd and not K.dual_contains(e):
                return StabilityVerdict(False, (i, j), "monotonicity")
            if not fwd and not bwd and not _nonneg_proportional(d, e):
                return StabilityVerdict(False, (i, j), "proportionality")
    return StabilityVerdict(True)


# ---------------------------------------------------------------------------
# equilibrium verification


@dataclass(frozen=True)
class EquilibriumReport:
    profit_gaps: tuple[float, ...]
    balance_residuals: tuple[float, ...]
    resource_residuals: tuple[float, ...]
    demand_value_gap: float
    price_index_slack: float
    tol: float

    @property
    def profit_maximal(self) -> bool:
        return all(g <= self.tol for g in self.profit_gaps)

    @property
    def balances_ok(self) -> bool:
        return all(abs(r) <= self.tol for r in self.balance_residuals)

    @property
    def resources_ok(self) -> bool:
        return all(abs(r) <= self.tol for r in self.resource_residuals)

    @property
    def demand_optimal(self) -> bool:
        return abs(self.demand_value_gap) <= self.tol and self.price_index_slack >= -self.tol

    @property
    def passed(self) -> bool:
        return self.profit_maximal and self.balances_ok and self.resources_ok and self.demand_optimal


def verify_equilibrium(industries: Sequence[Industry], demand: Demand, allocation: Sequence[ArrayLike],
                       q: ArrayLike, s: ArrayLike, p0: float, consumption: ArrayLike | None = None,
                       resources: ArrayLike | None = None, tol: float = 1e-9) -> EquilibriumReport:
    """Check the Lagrange conditions for a candidate allocation.

    ``allocation[j][a]`` is the used fraction of atom ``a`` of industry ``j``.
    ``consumption`` defaults to the industries' outputs and ``resources`` to
    the total resource use (making the resource conditions hold trivially).
    """
    q, s = _vec(q), _vec(s)
    if not p0 > 0:
        raise ValidationError("p0 must be positive")
    if np.any(q < 0) or np.any(s < 0):
        raise ValidationError("prices must be nonnegative")
    if len(allocation) != len(industries) or len(q) != len(industries):
        raise ValidationError("one allocation and one price per industry")
    gaps, outputs, use = [], [], np.zeros_like(s)
    for ind, u, qj in zip(industries, allocation, q):
        u = _vec(u)
        if u.shape != ind.measure.masses.shape or np.any(u < -tol) or np.any(u > 1 + tol):
            raise ValidationError("allocation fractions must lie in [0, 1], one per atom")
        w = ind.measure.masses * u
        achieved = float(w @ (qj - ind.measure.points @ s))
        best = ind.profit(qj, s)
        gaps.append(max(best - achieved, 0.0))
        outputs.append(float(w.sum()))
        use = use + w @ ind.measure.points
    X0 = np.array(outputs) if consumption is None else _vec(consumption)
    balance = tuple(float(qj * (Y - c)) for qj, Y, c in zip(q, outputs, X0))
    lim = use if resources is None else _vec(resources)
    res = tuple(float(sk * (lk - uk)) for sk, lk, uk in zip(s, lim, use))
    value_gap = p0 * demand.utility(X0) - float(q @ X0)
    slack = demand.price_index(q) - p0
    scale = max(1.0, p0)
    return EquilibriumReport(tuple(gaps), balance, res, value_gap / scale, slack / scale, tol)
