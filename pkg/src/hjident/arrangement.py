"""Line families in the transformed quadrant, their cells, spectra and formal words.

After normalizing prices by the output price, the CES level curves
``h(phat(t) * x) = 1`` become straight lines ``a_t z1 + b_t z2 = 1`` in
suitable coordinates ``z``.  A cell of the resulting arrangement is tagged by
its spectrum: bit ``t`` is 1 iff the cell lies strictly below line ``t``
(technologies in the cell are profitable at time ``t``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import NormalizedPrices, as_phat, check_rho
from .errors import ConsistencyError, DegenerateArrangementError, TieError, ValidationError

Spectrum = tuple[int, ...]

CONCURRENCY_TOL = 1e-10
ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class LineFamily:
    """Lines ``coeffs[t,0] z1 + coeffs[t,1] z2 = 1`` with positive coefficients."""

    coeffs: NDArray[np.float64]
    rho: float | None = None
    epsilon: float | None = None
    branch: str | None = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValidationError("line coefficients must be a (T, 2) array")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValidationError("line coefficients must be finite and positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def T(self) -> int:
        return self.coeffs.shape[0]

    def renumbered(self) -> tuple["LineFamily", NDArray[np.intp]]:
        """Family sorted by increasing ``a`` (then ``b``) and the map new -> old index."""
        order = np.lexsort((self.coeffs[:, 1], self.coeffs[:, 0]))
        return LineFamily(self.coeffs[order], self.rho, self.epsilon, self.branch), order

    def spectrum_of(self, z: ArrayLike) -> Spectrum:
        z = np.asarray(z, dtype=float)
        return tuple(int(v) for v in (self.coeffs @ z < 1.0))

    def cell_inequalities(self, spectrum: Sequence[int]) -> tuple[NDArray, NDArray]:
        """Rows ``(A, c)`` with the open cell equal to ``{z > 0 : A z < c}``."""
        s = np.where(np.asarray(spectrum) == 1, 1.0, -1.0)
        return self.coeffs * s[:, None], s.copy()

    def intercept_bound(self) -> float:
        return float((1.0 / self.coeffs).max())


@dataclass(frozen=True)
class FormalWord:
    """Sequence of adjacent transpositions ``sigma_t`` (letters are 1-based ``t``)."""

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(t) for t in self.letters))
        if any(t < 1 for t in self.letters):
            raise ValidationError("word letters are positive integers")

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def permutation(self, T: int) -> tuple[int, ...]:
        """Apply the swaps to the identity arrangement ``(1, ..., T)``."""
        perm = list(range(1, T + 1))
        for t in self.letters:
            if t >= T:
                raise ValidationError(f"letter sigma_{t} out of range for T={T}")
            perm[t - 1], perm[t] = perm[t], perm[t - 1]
        return tuple(perm)

    def __str__(self):
        return "".join(f"s{t}" for t in self.letters) or "(empty)"


@dataclass(frozen=True)
class SweepResult:
    family: LineFamily
    angles: tuple[float, ...]
    crossings: tuple[tuple[int, int], ...]
    permutations: tuple[tuple[int, ...], ...]
    word: FormalWord
    warnings: tuple[str, ...] = ()

    @property
    def T(self) -> int:
        return self.family.T

    @property
    def sector_spectra(self) -> tuple[tuple[Spectrum, ...], ...]:
        return tuple(prefix_spectra(pi) for pi in self.permutations)


def prefix_spectra(pi: Sequence[int]) -> tuple[Spectrum, ...]:
    """Cells met by a ray, from far to near: bits of ``pi[:k]`` set, ``k = 0..T``."""
    T = len(pi)
    bits = [0] * T
    out = [tuple(bits)]
    for line in pi:
        bits[line - 1] = 1
        out.append(tuple(bits))
    return tuple(out)


def transform_coordinates(rho: float, phat: ArrayLike | NormalizedPrices) -> LineFamily:
    """Straighten the level curves ``h(phat(t) * x) = 1`` for a CES unit cost.

    For ``rho < 0`` the substitution ``z = x^{-rho}`` gives coefficients
    ``phat^{-rho}``.  For ``rho > 0`` the substitution
    ``z = eps x^{-rho} / (x1^{-rho} + x2^{-rho} - eps)`` gives ``1/eps - phat^{-rho}``
    with ``eps = 0.5 / max_t max_i phat_i(t)^{-rho}``.
    """
    rho = check_rho(rho)
    ph = as_phat(phat)
    if ph.shape[1] != 2:
        raise ValidationError("the line construction needs two input prices")
    with np.errstate(over="raise"):
        try:
            u = ph ** (-rho)
        except FloatingPointError as exc:
            raise DegenerateArrangementError(f"price powers overflow at rho={rho}") from exc
    if rho < 0:
        return LineFamily(u, rho, None, "negative_rho")
    eps = 0.5 / u.max()
    return LineFamily(1.0 / eps - u, rho, eps, "positive_rho")


def x_to_z(family: LineFamily, x: ArrayLike) -> NDArray[np.float64]:
    """Map technologies into the coordinates where level curves are lines.

    For ``rho > 0`` only technologies with ``x1^{-rho} + x2^{-rho} > eps`` have an image.
    """
    x = np.asarray(x, dtype=float)
    w = x ** (-family.rho)
    if family.rho < 0:
        return w
    s = w.sum(axis=-1, keepdims=True)
    if np.any(s <= family.epsilon):
        # such technologies cost more than the output price under every observed price
        raise ValidationError("technology outside the domain of the projective map")
    return family.epsilon * w / (s - family.epsilon)


def z_to_x(family: LineFamily, z: ArrayLike) -> NDArray[np.float64]:
    """Inverse of :func:`x_to_z` (for ``rho > 0`` defined where ``z1 + z2 > eps``)."""
    z = np.asarray(z, dtype=float)
    if family.rho < 0:
        return z ** (-1.0 / family.rho)
    S = z.sum(axis=-1, keepdims=True)
    if np.any(S <= family.epsilon):
        raise ValidationError("point outside the image of the positive orthant (z1 + z2 <= eps)")
    w = z * family.epsilon / (S - family.epsilon)
    return w ** (-1.0 / family.rho)


def intersections(family: LineFamily) -> tuple[list[tuple[int, int]], NDArray[np.float64]]:
    """Pairs (0-based) whose lines meet in the open quadrant, and the meeting points."""
    a, b = family.coeffs[:, 0], family.coeffs[:, 1]
    T = family.T
    pairs, pts = [], []
    for s in range(T):
        for t in range(s + 1, T):
            if a[s] == a[t] and b[s] == b[t]:
                raise DegenerateArrangementError(f"lines {s + 1} and {t + 1} coincide")
            if (a[s] - a[t]) * (b[s] - b[t]) < 0:
                det = a[s] * b[t] - a[t] * b[s]
                pairs.append((s, t))
                pts.append(((b[t] - b[s]) / det, (a[s] - a[t]) / det))
    return pairs, np.array(pts, dtype=float).reshape(-1, 2)


def check_general_position(family: LineFamily, pairs, pts, tol: float = CONCURRENCY_TOL) -> None:
    if not pairs:
        return
    res = np.abs(pts @ family.coeffs.T - 1.0)
    for k, (s, t) in enumerate(pairs):
        res[k, [s, t]] = np.inf
        u = int(np.argmin(res[k]))
        if res[k, u] <= tol:
            triple = tuple(sorted((s + 1, t + 1, u + 1)))
            raise DegenerateArrangementError(
                f"lines {triple} are concurrent at z=({pts[k][0]:.6g}, {pts[k][1]:.6g}) (residual {res[k, u]:.2e})",
                triple=triple,
            )


def sweep(family: LineFamily, tol: float = CONCURRENCY_TOL) -> SweepResult:
    """Rotate a ray from the z1-axis to the z2-axis and record the line order.

    The order of a sector lists lines by decreasing distance of their crossing
    with the ray.  Each intersection point swaps two adjacent entries; the
    swapped position is the corresponding word letter.
    """
    pairs, pts = intersections(family)
    check_general_position(family, pairs, pts, tol)
    a, b = family.coeffs[:, 0], family.coeffs[:, 1]
    pi = [int(i) + 1 for i in np.lexsort((b, a))]
    perms = [tuple(pi)]
    letters, angles, crossings, warnings = [], [], [], []
    if pairs:
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        rad = np.hypot(pts[:, 0], pts[:, 1])
        order = np.lexsort((rad, ang))
        prev = None
        for k in order:
            s, t = pairs[k]
            if prev is not None and abs(ang[k] - prev) <= ANGLE_TOL * max(1.0, abs(prev)):
                warnings.append(
                    f"intersections {crossings[-1]} and {(s + 1, t + 1)} share a ray; "
                    "their swaps commute and are applied in order of distance"
                )
            prev = ang[k]
            i, j = pi.index(s + 1), pi.index(t + 1)
            if abs(i - j) != 1:
                raise ConsistencyError(
                    f"lines {s + 1},{t + 1} are not adjacent when they cross (positions {i},{j})"
                )
            lo = min(i, j)
            pi[lo], pi[lo + 1] = pi[lo + 1], pi[lo]
            letters.append(lo + 1)
            angles.append(float(ang[k]))
            crossings.append((s + 1, t + 1))
            perms.append(tuple(pi))
    return SweepResult(family, tuple(angles), tuple(crossings), tuple(perms),
                       FormalWord(tuple(letters)), tuple(warnings))


def enumerate_spectra(family: LineFamily, tol: float = CONCURRENCY_TOL) -> frozenset[Spectrum]:
    """Spectra of all cells of the arrangement inside the open quadrant."""
    res = sweep(family, tol)
    out = set()
    for spectra in res.sector_spectra:
        out.update(spectra)
    expected = 1 + family.T + len(res.word)
    if len(out) != expected:
        raise ConsistencyError(f"found {len(out)} cells, expected 1 + T + N = {expected}")
    return frozenset(out)


def sigma_order(family: LineFamily, rtol: float = 1e-12) -> tuple[int, ...]:
    """Order of lines by increasing ``b`` for a family already sorted by ``a``."""
    a, b = family.coeffs[:, 0], family.coeffs[:, 1]
    for name, v in (("a", a), ("b", b)):
        srt = np.sort(v)
        close = np.flatnonzero(np.diff(srt) <= rtol * srt[1:])
        if close.size:
            k = close[0]
            idx = tuple(int(i) + 1 for i in np.flatnonzero(np.isin(v, srt[k:k + 2])))
            raise TieError(f"equal {name}-coefficients for lines {idx}", idx)
    if np.any(np.diff(a) <= 0):
        raise ValidationError("family must be renumbered so that the a-coefficients increase")
    return tuple(int(i) + 1 for i in np.argsort(b, kind="stable"))
