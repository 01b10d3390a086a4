"""Profit/production duality: closed forms, quadratures and Laplace-transform checks.

Two-factor industries only.  Densities are callables ``f(x1, x2)``; unit cost
evaluators are callables on a price-weighted technology ``q = p * x``; profit
evaluators are callables ``Pi(p, p0)`` with ``p`` a length-2 array.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate, special

from .core import CesUnitCost, DiscreteMeasure
from .errors import DomainError, NumericFailureError, ValidationError

Density = Callable[[float, float], float]
Profit = Callable[[np.ndarray, float], float]

TAIL_EXPONENT = 30.0
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class CobbDouglasParams:
    """``F(l) = C l1^{a1/(a1+a2+1)} l2^{a2/(a1+a2+1)}`` with ``a_i >= 1``."""

    C: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not self.C > 0:
            raise DomainError("C must be positive")
        if not (self.alpha1 >= 1 and self.alpha2 >= 1):
            raise DomainError("Cobb-Douglas exponents alpha_i must be >= 1")

    @property
    def A(self) -> float:
        """Density constant of the fixed-proportion capacity distribution."""
        a1, a2 = self.alpha1, self.alpha2
        s = a1 + a2
        log_a = ((s + 1) * np.log(self.C) + np.log(s) + a1 * np.log(a1) + a2 * np.log(a2)
                 - s * np.log(s + 1) - special.betaln(a1, a2))
        return float(np.exp(log_a))


@dataclass(frozen=True)
class CesProductionParams:
    """``F(l) = (a1 l1^{-rho} + a2 l2^{-rho})^{-gamma/rho}`` with ``0 < gamma < 1``."""

    alpha1: float
    alpha2: float
    rho: float
    gamma: float

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise DomainError("alpha_i must be positive")
        if not np.isfinite(self.rho) or self.rho == 0 or self.rho < -1:
            raise DomainError("rho must lie in [-1, 0) or (0, inf)")
        if not 0 < self.gamma < 1:
            raise DomainError("gamma must lie in (0, 1)")

    @property
    def beta1(self) -> float:
        return self.alpha1 ** (1.0 / (1.0 + self.rho))

    @property
    def beta2(self) -> float:
        return self.alpha2 ** (1.0 / (1.0 + self.rho))

    @property
    def r(self) -> float:
        """Micro-level exponent of the unit cost paired with the density below."""
        return -2.0 * self.rho / (1.0 + self.rho)

    @property
    def b(self) -> float:
        return self.gamma / (1.0 - self.gamma) * (1.0 + self.rho) / self.rho

    @property
    def d2_constant(self) -> float:
        """``d^2 Pi / d p0^2`` at ``p0 = 1`` divided by the price bracket."""
        g = self.gamma
        return float(np.exp(np.log(g) / (1 - g)) / (1 - g))


# ---------------------------------------------------------------------------
# closed forms


def profit_cobb_douglas(params: CobbDouglasParams, p1: float, p2: float, p0: float) -> float:
    a1, a2 = params.alpha1, params.alpha2
    s = a1 + a2
    _check_prices(p1, p2, p0)
    log_v = (np.log(params.A) + special.betaln(a1, a2) - np.log(s) - np.log(s + 1)
             + (s + 1) * np.log(p0) - a1 * np.log(p1) - a2 * np.log(p2))
    return float(np.exp(log_v))


def profit_ces(params: CesProductionParams, p1: float, p2: float, p0: float) -> float:
    """Conjugate of the CES production function.

    At ``rho = -1`` (linear aggregate) the bracket becomes ``max_i alpha_i / p_i``.
    """
    _check_prices(p1, p2, p0)
    g, rho = params.gamma, params.rho
    log_k = g / (1 - g) * np.log(g) + np.log1p(-g) + np.log(p0) / (1 - g)
    if rho == -1.0:
        bracket = max(params.alpha1 / p1, params.alpha2 / p2)
        return float(np.exp(log_k + g / (1 - g) * np.log(bracket)))
    e = rho / (1 + rho)
    terms = np.array([np.log(params.alpha1) / (1 + rho) + e * np.log(p1),
                      np.log(params.alpha2) / (1 + rho) + e * np.log(p2)])
    log_bracket = special.logsumexp(terms)
    return float(np.exp(log_k - g * (1 + rho) / (rho * (1 - g)) * log_bracket))


def _check_prices(p1, p2, p0):
    if not (p1 > 0 and p2 > 0 and p0 > 0):
        raise ValidationError("prices must be positive")


def _check_r(r: float) -> float:
    if not -1.0 <= r < 0.0:
        raise DomainError("r must lie in [-1, 0)")
    return float(r)


def capacity_density_cd(params: CobbDouglasParams, r: float, x1: float, x2: float) -> float:
    """Density reproducing the Cobb-Douglas profit under the unit cost with exponent ``r``."""
    r = _check_r(r)
    a1, a2 = params.alpha1, params.alpha2
    if x1 <= 0 or x2 <= 0:
        return 0.0
    log_c = np.log(-r) + np.log(params.A) + special.betaln(a1, a2) - special.betaln(-a1 / r, -a2 / r)
    return float(np.exp(log_c + (a1 - 1) * np.log(x1) + (a2 - 1) * np.log(x2)))


def laplace_preimage_cd(params: CobbDouglasParams, r: float, x1: float, x2: float) -> float:
    """``f`` with ``int e^{-p.x} f = d^2 Pi_CD / d p0^2 (p^{-1/r}, 1)``."""
    r = _check_r(r)
    a1, a2 = params.alpha1, params.alpha2
    if x1 <= 0 or x2 <= 0:
        return 0.0
    log_c = (np.log(params.A) + special.betaln(a1, a2) - special.gammaln(-a1 / r) - special.gammaln(-a2 / r))
    return float(np.exp(log_c + (-a1 / r - 1) * np.log(x1) + (-a2 / r - 1) * np.log(x2)))


def _ces_density_params(params: CesProductionParams) -> tuple[float, float]:
    if not 0 < params.rho <= 1:
        raise DomainError("the CES density construction needs 0 < rho <= 1 (so that r is in [-1, 0))")
    return params.r, params.b


def capacity_density_ces(params: CesProductionParams, x1: float, x2: float) -> float:
    """Density reproducing the CES profit under the unit cost with exponent ``r = -2 rho / (1 + rho)``.

    Includes the factor ``-r`` coming from the change of variables ``y = x^{-r}``.
    """
    r, b = _ces_density_params(params)
    if x1 <= 0 or x2 <= 0:
        return 0.0
    b1, b2 = params.beta1, params.beta2
    log_c = (np.log(-r) + np.log(params.d2_constant) + (b - 1) * np.log(2.0) - np.log(np.pi)
             + np.log(b1 * b2) + special.gammaln(b / 2 + 1) + special.gammaln(b / 2) - special.gammaln(b))
    inner = special.logsumexp([2 * np.log(b1) + r * np.log(x1), 2 * np.log(b2) + r * np.log(x2)])
    return float(np.exp(log_c + (r / 2 - 1) * (np.log(x1) + np.log(x2)) - (b / 2 + 1) * inner))


def sqrt_laplace_kernel(beta1: float, beta2: float, b: float, x1: float, x2: float) -> float:
    """``H`` with ``int e^{-p.x} H(x) dx = (beta1 sqrt(p1) + beta2 sqrt(p2))^{-b}``."""
    if x1 <= 0 or x2 <= 0:
        return 0.0
    log_c = ((b - 1) * np.log(2.0) - np.log(np.pi) + np.log(beta1 * beta2)
             + special.gammaln(b / 2 + 1) - special.gammaln(b))
    inner = np.logaddexp(2 * np.log(beta1) - np.log(x1), 2 * np.log(beta2) - np.log(x2))
    return float(np.exp(log_c - 1.5 * (np.log(x1) + np.log(x2)) - (b / 2 + 1) * inner))


def laplace_preimage_ces(params: CesProductionParams, x1: float, x2: float) -> float:
    return params.d2_constant * sqrt_laplace_kernel(params.beta1, params.beta2, params.b, x1, x2)


def unit_cost_r(r: float) -> CesUnitCost:
    """``h(q) = (q1^{-r} + q2^{-r})^{-1/r}`` (bounded level sets for r in [-1, 0))."""
    return CesUnitCost(_check_r(r))


def cd_profit(params: CobbDouglasParams) -> Profit:
    return lambda p, p0: profit_cobb_douglas(params, p[0], p[1], p0)


def ces_profit(params: CesProductionParams) -> Profit:
    return lambda p, p0: profit_ces(params, p[0], p[1], p0)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    tail_exponent: float | None = None

    def __float__(self):
        return self.value


def _nested(outer_lo, outer_hi, inner_lo, inner_hi, g, rtol, points=None) -> QuadResult:
    errs = []

    def inner(u):
        v, e = integrate.quad(lambda t: g(u, t), inner_lo(u), inner_hi(u), epsabs=0.0, epsrel=rtol, limit=200)
        errs.append(e)
        return v

    val, err = integrate.quad(inner, outer_lo, outer_hi, epsabs=0.0, epsrel=rtol, limit=200, points=points)
    return QuadResult(float(val), float(err + (max(errs) if errs else 0.0) * (outer_hi - outer_lo)))


def numeric_profit(measure_or_density: DiscreteMeasure | Density, h: Callable, p: ArrayLike, p0: float,
                   rtol: float = 1e-6) -> float:
    """``int (p0 - h(p * x))_+ mu(dx)`` for an atomic measure or a density.

    For a density the region ``{h(p * x) < p0}`` is parametrized by the
    direction ``w = (u, 1 - u)`` and the cost level ``c``, with
    ``x = c w / h(p * w)``, which maps it onto ``(0, 1) x (0, p0)``.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or np.any(p <= 0) or not p0 > 0:
        raise ValidationError("need two positive prices and p0 > 0")
    if isinstance(measure_or_density, DiscreteMeasure):
        m = measure_or_density
        if m.masses.size == 0:
            return 0.0
        cost = np.array([float(h(p * x)) for x in m.points])
        return float(np.sum(m.masses * np.maximum(p0 - cost, 0.0)))
    if getattr(h, "bounded_level_sets", True) is False:
        raise DomainError("unit cost has unbounded level sets; the profit integral diverges")
    for u in (1e-12, 1 - 1e-12):
        hv = float(h(p * np.array([u, 1 - u])))
        if not np.isfinite(hv) or hv <= 1e-9:
            raise DomainError("unit cost vanishes towards an axis; level sets are unbounded")
    f = measure_or_density

    def g(u, c):
        w = np.array([u, 1.0 - u])
        hw = float(h(p * w))
        x = c * w / hw
        return (p0 - c) * f(x[0], x[1]) * c / hw ** 2

    return _nested(0.0, 1.0, lambda u: 0.0, lambda u: p0, g, rtol).value


def laplace2d(f: Density, p: ArrayLike, rtol: float = 1e-10) -> QuadResult:
    """``int_{R^2_+} e^{-p.x} f(x) dx`` with the tail beyond ``e^{-30}`` dropped.

    Polar-like coordinates ``x = t (u, 1 - u)``; for each direction the radial
    integral stops where ``p.x = 30``.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or np.any(p <= 0):
        raise ValidationError("need two positive Laplace variables")

    def g(u, t):
        x1, x2 = t * u, t * (1.0 - u)
        return np.exp(-(p[0] * x1 + p[1] * x2)) * f(x1, x2) * t

    res = _nested(0.0, 1.0, lambda u: 0.0, lambda u: TAIL_EXPONENT / (p[0] * u + p[1] * (1 - u)), g, rtol)
    return QuadResult(res.value, res.error, TAIL_EXPONENT)


def density_from_laplace_preimage(f: Density, r: float, x1: float, x2: float) -> float:
    """``(-r) (x1 x2)^{-r-1} int_0^inf t e^{-t} f(t x1^{-r}, t x2^{-r}) dt``."""
    r = _check_r(r)
    if x1 <= 0 or x2 <= 0:
        return 0.0
    y1, y2 = x1 ** (-r), x2 ** (-r)
    val, _ = integrate.quad(lambda t: t * np.exp(-t) * f(t * y1, t * y2), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return float((-r) * (x1 * x2) ** (-r - 1) * val)


def lapsqrt2_identity(beta1: float, beta2: float, b: float, p1: float, p2: float):
    """Both sides of ``(beta1 sqrt(p1) + beta2 sqrt(p2))^{-b} = int e^{-p.x} H(x) dx``."""
    if min(beta1, beta2, b, p1, p2) <= 0:
        raise ValidationError("all parameters must be positive")
    lhs = (beta1 * np.sqrt(p1) + beta2 * np.sqrt(p2)) ** (-b)
    rhs = laplace2d(lambda x1, x2: sqrt_laplace_kernel(beta1, beta2, b, x1, x2), (p1, p2)).value
    return float(lhs), float(rhs), float(abs(rhs - lhs) / abs(lhs))


# ---------------------------------------------------------------------------
# checks


def _d2_p0(Pi: Profit, p: np.ndarray, p0: float) -> float:
    h = EPS ** (1 / 3) * max(1.0, p0)
    return (Pi(p, p0 + h) - 2 * Pi(p, p0) + Pi(p, p0 - h)) / h ** 2


def _d1_p0(Pi: Profit, p: np.ndarray, p0: float) -> float:
    h = EPS ** (1 / 3) * p0
    return (Pi(p, p0 + h) - Pi(p, p0 - h)) / (2 * h)


@dataclass(frozen=True)
class PropcharReport:
    limit_ok: bool
    homogeneity_ok: bool
    second_derivative_ok: bool
    density_ok: bool | None
    worst_limit: float
    worst_homogeneity: float
    worst_second_derivative: float
    worst_density: float | None
    tol: float
    details: tuple = field(default=(), repr=False)

    @property
    def passed(self) -> bool:
        return (self.limit_ok and self.homogeneity_ok and self.second_derivative_ok
                and self.density_ok is not False)


def check_propchar(Pi: Profit, f: Density, r: float, grid: Sequence[ArrayLike], tol: float = 1e-3,
                   phi: Density | None = None, profit_points: Sequence[ArrayLike] = (),
                   seed: int = 0) -> PropcharReport:
    """Check that ``Pi`` is the profit of ``phi`` built from ``f`` under the ``r``-unit cost.

    (a) ``Pi`` and ``dPi/dp0`` vanish as ``p0 -> 0``, relative to their values
    at ``p0 = 1``; (b) degree-one homogeneity at random scalings; (c)
    ``d^2 Pi/dp0^2 (p^{-1/r}, 1)`` equals the Laplace transform of ``f`` at
    every grid price.  With ``profit_points`` the density (``phi`` if given,
    otherwise the quadrature construction from ``f``) is integrated and
    compared with ``Pi``.
    """
    r = _check_r(r)
    rng = np.random.default_rng(seed)
    grid = [np.asarray(g, dtype=float) for g in grid]
    worst_lim = worst_hom = worst_d2 = 0.0
    details = []
    for p in grid:
        ref, dref = abs(Pi(p, 1.0)), abs(_d1_p0(Pi, p, 1.0))
        small = 1e-4
        lim = max(abs(Pi(p, small)) / max(ref, 1e-300), abs(_d1_p0(Pi, p, small)) / max(dref, 1e-300))
        worst_lim = max(worst_lim, lim)
        for _ in range(3):
            c, p0 = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
            lhs, rhs = Pi(c * p, c * p0), c * Pi(p, p0)
            worst_hom = max(worst_hom, abs(lhs - rhs) / max(abs(rhs), 1e-300))
        pr = p ** (-1.0 / r)
        d2 = _d2_p0(Pi, pr, 1.0)
        lap = laplace2d(f, p).value
        err = abs(d2 - lap) / max(abs(lap), 1e-300)
        worst_d2 = max(worst_d2, err)
        details.append({"p": p.tolist(), "d2": d2, "laplace": lap, "rel_err": err})
    worst_den = None
    if len(profit_points):
        dens = phi if phi is not None else (lambda x1, x2: density_from_laplace_preimage(f, r, x1, x2))
        h = unit_cost_r(r)
        worst_den = 0.0
        for pt in profit_points:
            pt = np.asarray(pt, dtype=float)
            p, p0 = pt[:2], float(pt[2])
            num = numeric_profit(dens, h, p, p0, rtol=1e-7)
            ref = Pi(p, p0)
            worst_den = max(worst_den, abs(num - ref) / abs(ref))
    return PropcharReport(worst_lim <= tol, worst_hom <= tol, worst_d2 <= tol,
                          None if worst_den is None else worst_den <= tol,
                          worst_lim, worst_hom, worst_d2, worst_den, tol, tuple(details))


@dataclass(frozen=True)
class MonotonicityReport:
    worst_margin: float
    worst_order: int
    worst_lambda: float
    worst_directions: tuple
    margins_by_order: dict
    note: str = "sampling diagnostic: a negative margin refutes complete monotonicity, none proves it"

    def passed(self, threshold: float = -1e-8) -> bool:
        return self.worst_margin >= threshold


def _forward_difference(G: Callable, s: np.ndarray, dirs: Sequence[np.ndarray], h: float) -> float:
    total = 0.0
    k = len(dirs)
    for mask in itertools.product((0, 1), repeat=k):
        shift = sum((h * d for d, m in zip(dirs, mask) if m), np.zeros_like(s))
        total += (-1) ** (k - sum(mask)) * G(s + shift)
    return total


def completely_monotone_check(G: Callable, s0: ArrayLike, cone_dirs: Sequence[ArrayLike], k_max: int = 4,
                              lambdas: Sequence[float] | None = None, step: float = 1e-2) -> MonotonicityReport:
    """Worst value of ``(-1)^k D_{xi1} ... D_{xik} G(lambda s0)`` over sampled directions.

    Derivatives are replaced by forward differences with step ``step *
    lambda |s0|``; for a Laplace transform of a nonnegative measure these
    differences already carry the right sign, so only roundoff can make them
    negative.  Margins are relative to ``|G(lambda s0)|``.
    """
    if not 1 <= k_max <= 4:
        raise ValidationError("k_max must be between 1 and 4")
    s0 = np.asarray(s0, dtype=float)
    dirs = [np.asarray(d, dtype=float) for d in cone_dirs]
    if not dirs:
        raise ValidationError("need at least one direction")
    lambdas = np.geomspace(0.25, 4.0, 7) if lambdas is None else np.asarray(lambdas, dtype=float)
    worst = (np.inf, 0, 0.0, ())
    by_order = {}
    for k in range(1, k_max + 1):
        wk = np.inf
        for lam in lambdas:
            s = lam * s0
            h = step * lam * np.linalg.norm(s0)
            scale = abs(G(s)) or 1.0
            for combo in itertools.combinations_with_replacement(range(len(dirs)), k):
                m = (-1) ** k * _forward_difference(G, s, [dirs[c] for c in combo], h) / (h ** k * scale)
                wk = min(wk, m)
                if m < worst[0]:
                    worst = (float(m), k, float(lam), combo)
        by_order[k] = float(wk)
    return MonotonicityReport(*worst, by_order)


def g_from_pi(Pi: Profit, s: ArrayLike, rtol: float = 1e-9) -> float:
    """``int_0^inf e^{-tau} d_tau (dPi(s, tau)/dtau)``.

    Integrating by parts twice (``Pi(s, 0) = dPi(s, 0)/dtau = 0``) turns the
    Stieltjes integral into ``int_0^inf e^{-tau} Pi(s, tau) dtau``, which needs
    no derivatives and tolerates kinks of ``Pi``.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("s must be nonnegative")
    f = lambda tau: np.exp(-tau) * Pi(s, tau) if tau > 0 else 0.0
    head, _ = integrate.quad(f, 0.0, 60.0, epsabs=1e-14, epsrel=rtol, limit=500)
    tail, _ = integrate.quad(f, 60.0, np.inf, epsabs=1e-14, epsrel=rtol, limit=200)
    val = head + tail
    if not np.isfinite(val):
        raise NumericFailureError("Laplace-Stieltjes integral diverged")
    return float(val)
