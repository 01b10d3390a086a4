"""Estimating the micro-level elasticity of substitution.

The arrangement of transformed level lines, hence the moment cone, can only
change at values of ``rho`` where three lines become concurrent.  Those values
are the roots of a 3x3 determinant, at most one per triple of observations,
so the domain ``[-1, 0) U (0, inf)`` splits into at most ``C(T,3) + 2``
intervals on which solvability is constant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import NormalizedPrices, TimeSeriesRecord, as_phat, check_rho
from .errors import ConsistencyError, DegenerateArrangementError, ValidationError
from .moment import MomentProblemReport, moment_solvable

RHO_MIN = 1e-8
R_MAX_START = 1e2
R_MAX_CAP = 1e4
BISECT_TOL = 1e-10
SCAN_POINTS = 240
OVERFLOW_LOG = 700.0
REPROBES = 5
PROBE_SPREAD = 10.0  # largest |rho log phat| used when probing the unbounded interval


def _diffs(L: NDArray, rho: NDArray) -> tuple[NDArray, NDArray]:
    """Scaled differences ``(e^{-rho L_i} - e^{-rho L_0}) / e^{c}`` for i = 1, 2 and the scale ``c``.

    ``L`` has shape (3,), ``rho`` shape (k,).  ``expm1`` keeps full relative
    accuracy when ``rho (L_i - L_0)`` is small (in particular near rho = 0).
    """
    E = -rho[:, None] * L[None, :]
    c = E.max(axis=1)
    out = np.empty((rho.size, 2))
    for k, i in enumerate((1, 2)):
        arg = E[:, i] - E[:, 0]
        small = np.abs(arg) <= 1.0
        base = np.exp(E[:, 0] - c)
        with np.errstate(over="ignore", under="ignore"):
            out[:, k] = np.where(small, base * np.expm1(np.where(small, arg, 0.0)),
                                 np.exp(E[:, i] - c) - base)
    return out, c


# det [[1,1,1],[a],[b]] = sum of sign * a_i * b_j over ordered pairs i != j
_EXPANSION = ((1, 2, 1.0), (1, 0, -1.0), (0, 2, -1.0), (2, 1, -1.0), (2, 0, 1.0), (0, 1, 1.0))


def _expansion_terms(LA: NDArray, LB: NDArray) -> tuple[NDArray, NDArray]:
    """Log-price sums and signs of the expansion after cancelling exactly equal terms."""
    X = [(LA[i] + LB[j], sgn) for i, j, sgn in _EXPANSION]
    keep = [True] * 6
    for u in range(6):
        for v in range(u + 1, 6):
            if keep[u] and keep[v] and X[u][0] == X[v][0] and X[u][1] == -X[v][1]:
                keep[u] = keep[v] = False
    X = [x for x, k in zip(X, keep) if k]
    return np.array([x for x, _ in X]), np.array([sg for _, sg in X])


def _determinant(phat: NDArray, triple: Sequence[int], rho: NDArray) -> tuple[NDArray, NDArray]:
    """Scaled determinant values and their log scale factor, vectorized over ``rho``.

    Two algebraically equal forms are evaluated: the product of difference
    rows (accurate near ``rho = 0``) and the six-term expansion scaled by its
    largest surviving term (accurate when one exponential dominates, where the
    first form cancels to an exact zero).  The one with the smaller rounding
    bound wins.
    """
    idx = [t - 1 for t in triple]
    LA, LB = np.log(phat[idx, 0]), np.log(phat[idx, 1])
    X, sg = _expansion_terms(LA, LB)
    if X.size == 0:
        return np.zeros(rho.size), np.zeros(rho.size)
    E = -rho[:, None] * X[None, :]
    c = E.max(axis=1)
    with np.errstate(under="ignore"):
        terms = sg[None, :] * np.exp(E - c[:, None])
    six = terms.sum(axis=1)
    six_err = np.abs(terms).sum(axis=1)
    dA, cA = _diffs(LA, rho)
    dB, cB = _diffs(LB, rho)
    shift = np.exp(np.minimum(cA + cB - c, OVERFLOW_LOG))
    p1, p2 = dA[:, 0] * dB[:, 1] * shift, dA[:, 1] * dB[:, 0] * shift
    rows = p1 - p2
    rows_err = np.where(cA + cB - c < OVERFLOW_LOG, np.abs(p1) + np.abs(p2), np.inf)
    return np.where(six_err < rows_err, six, rows), c


def concurrency_determinant(phat: ArrayLike | NormalizedPrices, triple: Sequence[int], rho: float) -> float:
    """``det [[1,1,1], [phat1(t_i)^{-rho}], [phat2(t_i)^{-rho}]]``.

    It vanishes iff the three transformed lines share a point or are all
    parallel; the parallel case (equal price ratios) is returned as exact 0.  When the true value would overflow, the determinant of the
    row-scaled matrix is returned instead; its sign is the same.
    """
    ph = as_phat(phat)
    t1, t2, t3 = triple
    if not (1 <= t1 < t2 < t3 <= ph.shape[0]):
        raise ValidationError("triple must be increasing 1-based indices")
    rho = check_rho(rho)
    if _parallel_triple(ph, triple):
        return 0.0
    d, c = _determinant(ph, triple, np.array([rho]))
    if c[0] < OVERFLOW_LOG:
        return float(d[0] * np.exp(c[0]))
    return float(d[0])


@dataclass(frozen=True)
class CriticalRho:
    rho: float
    triple: tuple[int, int, int]
    boundary: bool = False


@dataclass(frozen=True)
class CriticalRhoSet:
    roots: tuple[CriticalRho, ...]
    brackets: tuple[tuple[float, float], ...]
    skipped: tuple[tuple[int, int, int], ...] = ()
    r_max: float = R_MAX_START

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(r.rho for r in self.roots)


def _parallel_triple(ph: NDArray, triple) -> bool:
    ratio = np.log(ph[[t - 1 for t in triple], 1]) - np.log(ph[[t - 1 for t in triple], 0])
    return float(np.ptp(ratio)) <= 1e-12 * max(1.0, float(np.abs(ratio).max()))


def _sign(phat, triple, rho):
    return np.sign(_determinant(phat, triple, np.atleast_1d(np.asarray(rho, dtype=float)))[0])


def _bisect(phat, triple, lo, hi, slo):
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        smid = _sign(phat, triple, mid)[0]
        if smid == 0:
            return mid
        if smid == slo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _r_max(phat, triple) -> float:
    R = R_MAX_START
    while R < R_MAX_CAP:
        s = _sign(phat, triple, np.array([R, 2 * R, 5 * R, 10 * R]))
        if np.all(s == s[0]) and s[0] != 0:
            break
        R *= 10
    return min(R, R_MAX_CAP)


def critical_rhos(phat: ArrayLike | NormalizedPrices) -> CriticalRhoSet:
    """All roots of the concurrency determinant over the admissible ``rho`` range."""
    ph = as_phat(phat)
    T = ph.shape[0]
    if T >= 2:
        uniq = np.unique(ph, axis=0)
        if uniq.shape[0] < T:
            raise ValidationError("normalized price vectors must be pairwise distinct")
    neg = -np.geomspace(1.0, RHO_MIN, SCAN_POINTS)
    roots, brackets, skipped = [], [], []
    r_max_used = R_MAX_START
    for triple in itertools.combinations(range(1, T + 1), 3):
        if _parallel_triple(ph, triple):
            skipped.append(triple)
            continue
        R = _r_max(ph, triple)
        r_max_used = max(r_max_used, R)
        pos = np.geomspace(RHO_MIN, R, SCAN_POINTS)
        found = []
        d_left, c_left = _determinant(ph, triple, np.array([-1.0]))
        scale = np.abs(_diffs(np.log(ph[[t - 1 for t in triple], 0]), np.array([-1.0]))[0]).max() * \
            np.abs(_diffs(np.log(ph[[t - 1 for t in triple], 1]), np.array([-1.0]))[0]).max()
        if abs(d_left[0]) <= 1e-14 * max(scale, 1e-300):
            found.append(CriticalRho(-1.0, triple, boundary=True))
        for grid in (neg, pos):
            s = _sign(ph, triple, grid)
            nz = np.flatnonzero(s != 0)
            for a, b in zip(nz[:-1], nz[1:]):
                if s[a] != s[b]:
                    lo, hi = grid[a], grid[b]
                    brackets.append((float(lo), float(hi)))
                    found.append(CriticalRho(float(_bisect(ph, triple, lo, hi, s[a])), triple))
            for k in np.flatnonzero(s == 0):
                if not (grid is neg and k == 0):
                    found.append(CriticalRho(float(grid[k]), triple))
        if len(found) > 1:
            raise ConsistencyError(
                f"triple {triple} has {len(found)} critical values {[f.rho for f in found]}; "
                "at most one is possible"
            )
        roots.extend(found)
    roots.sort(key=lambda r: (r.rho, r.triple))
    return CriticalRhoSet(tuple(roots), tuple(brackets), tuple(skipped), r_max_used)


@dataclass(frozen=True)
class RhoInterval:
    lo: float
    hi: float
    solvable: bool | None  # None: no probe in the interval was numerically usable
    probe_rho: float
    report: MomentProblemReport | None
    lo_closed: bool = False

    def contains(self, rho: float) -> bool:
        left = rho >= self.lo if self.lo_closed else rho > self.lo
        return left and rho < self.hi


@dataclass(frozen=True)
class ElasticityReport:
    intervals: tuple[RhoInterval, ...]
    critical: CriticalRhoSet
    warnings: tuple[str, ...] = ()

    @property
    def sigma_intervals(self) -> tuple[tuple[float, float, bool | None], ...]:
        return tuple((*rho_to_sigma_interval(iv.lo, iv.hi), iv.solvable) for iv in self.intervals)

    def interval_of(self, rho: float) -> RhoInterval | None:
        return next((iv for iv in self.intervals if iv.contains(rho)), None)

    @property
    def solvable_intervals(self) -> tuple[RhoInterval, ...]:
        return tuple(iv for iv in self.intervals if iv.solvable is True)


def sigma_of_rho(rho: float) -> float:
    return np.inf if rho == -1.0 else 1.0 / (1.0 + rho)


def rho_to_sigma_interval(lo: float, hi: float) -> tuple[float, float]:
    return (0.0 if hi == np.inf else sigma_of_rho(hi)), sigma_of_rho(lo)


def _intervals(roots: Sequence[float]) -> list[tuple[float, float, bool]]:
    neg = sorted({r for r in roots if -1.0 < r < 0})
    pos = sorted({r for r in roots if r > 0})
    bounds = [-1.0] + neg + [0.0]
    out = [(bounds[i], bounds[i + 1], i == 0 and -1.0 not in roots) for i in range(len(bounds) - 1)]
    bounds = [0.0] + pos + [np.inf]
    out += [(bounds[i], bounds[i + 1], False) for i in range(len(bounds) - 1)]
    return out


def _probe(lo: float, hi: float, cap: float = np.inf) -> float:
    """Representative ``rho`` strictly inside an interval.

    Past the last critical value nothing changes, so the unbounded interval is
    probed below ``cap`` (where price powers stay moderate) when possible.
    """
    if hi == np.inf:
        if 2.0 * lo + 1.0 <= cap:
            return 2.0 * lo + 1.0
        return max(0.5 * (lo + cap), 1.05 * lo + 1e-6)
    if lo == 0.0 or hi == 0.0:
        return 0.5 * (lo + hi)
    return float(np.sign(lo) * np.sqrt(lo * hi))


def estimate_elasticity(series: Sequence[TimeSeriesRecord], witnesses: bool = False,
                        seed: int = 0) -> ElasticityReport:
    """Solvability of the moment problem on every interval between critical values."""
    phat = NormalizedPrices.from_series(series)
    crit = critical_rhos(phat)
    rng = np.random.default_rng(seed)
    intervals, warnings = [], []
    cap = PROBE_SPREAD / max(float(np.abs(np.log(phat.phat)).max()), 1e-12)
    for lo, hi, closed in _intervals(crit.values):
        rho = _probe(lo, hi, cap)
        rep = None
        for attempt in range(REPROBES + 1):
            try:
                rep = moment_solvable(series, rho, with_witness=witnesses)
                break
            except DegenerateArrangementError as exc:
                warnings.append(f"probe rho={rho!r} degenerate ({exc})")
                if attempt == REPROBES:
                    warnings.append(f"interval ({lo!r}, {hi!r}) left undetermined: every probe was degenerate")
                    break
                top = hi if np.isfinite(hi) else max(cap, 3.0 * lo + 1e-3)
                rho = float(rng.uniform(lo, top))
                if rho == 0.0 or rho < -1.0:
                    rho = _probe(lo, hi, cap) * (1 + 1e-6 * (attempt + 1))
        intervals.append(RhoInterval(lo, hi, None if rep is None else rep.solvable, rho, rep, closed))
    return ElasticityReport(tuple(intervals), crit, tuple(warnings))
