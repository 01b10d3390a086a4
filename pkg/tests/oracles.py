"""Independent reference implementations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_spectra(coeffs, n_points: int = 1_000_000, seed: int = 0) -> set[tuple[int, ...]]:
    """Sign vectors ``[a_t . z < 1]`` of sample points in the open quadrant.

    Every cell has a vertex of the arrangement (pairwise intersection, axis
    intercept, or the origin) on its boundary, so besides uniform samples the
    points are clustered around all vertices at shrinking radii.
    """
    A = np.asarray(coeffs, dtype=float)
    T = A.shape[0]
    rng = np.random.default_rng(seed)
    B = 1.5 * (1.0 / A).max()
    verts = [np.zeros(2)]
    for a in A:
        verts += [np.array([1 / a[0], 0.0]), np.array([0.0, 1 / a[1]])]
    for s, t in itertools.combinations(range(T), 2):
        M = A[[s, t]]
        if abs(np.linalg.det(M)) > 1e-300:
            z = np.linalg.solve(M, np.ones(2))
            if np.all(z > 0):
                verts.append(z)
    n_uniform = n_points // 4
    pts = [rng.uniform(0, B, (n_uniform, 2))]
    per = (n_points - n_uniform) // (len(verts) * 8)
    for v in verts:
        for r in np.geomspace(1e-2, 1e-9, 8) * B:
            pts.append(v + r * rng.uniform(-1, 1, (per, 2)))
    P = np.vstack(pts)
    P = P[np.all(P > 0, axis=1)]
    S = (P @ A.T < 1.0).astype(np.int8)
    return {tuple(int(v) for v in row) for row in np.unique(S, axis=0)}


def inversions(perm) -> int:
    return sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])


def componentwise_monotone(X, Y, gamma) -> bool:
    """Orthant oracle for criterion (i): ``x_j >= x_i`` componentwise forces the same for images."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    for i in range(len(X)):
        for j in range(len(X)):
            if i != j and np.any(X[j] != X[i]) and np.all(X[j] >= X[i]):
                if not np.all(Y[gamma[j]] >= Y[gamma[i]] - 1e-12):
                    return False
    return True


def lp_member(generators, y) -> bool:
    """Feasibility of ``Z^T lam = y, lam >= 0`` by the HiGHS simplex."""
    from scipy.optimize import linprog

    Z = np.asarray(generators, dtype=float)
    y = np.asarray(y, dtype=float)
    res = linprog(np.zeros(len(Z)), A_eq=Z.T, b_eq=y, bounds=[(0, None)] * len(Z), method="highs")
    return res.status == 0


def hull_facet_directions(generators) -> list[np.ndarray]:
    """Unit inner normals of the facets through the origin of ``conv({0} u generators)``."""
    from scipy.spatial import ConvexHull

    Z = np.asarray(generators, dtype=float)
    pts = np.vstack([np.zeros(Z.shape[1]), Z])
    hull = ConvexHull(pts)
    out: list[np.ndarray] = []
    for eq in hull.equations:
        n, off = eq[:-1], eq[-1]
        if abs(off) < 1e-9:
            d = -n / np.linalg.norm(n)
            if not any(np.allclose(d, e, atol=1e-9) for e in out):
                out.append(d)
    return out


def mp_determinant(phat, triple, rho, dps: int = 60):
    """Concurrency determinant in arbitrary precision."""
    import mpmath as mp

    with mp.workdps(dps):
        rows = [[mp.mpf(1)] * 3,
                [mp.mpf(float(phat[t - 1][0])) ** (-mp.mpf(rho)) for t in triple],
                [mp.mpf(float(phat[t - 1][1])) ** (-mp.mpf(rho)) for t in triple]]
        return mp.det(mp.matrix(rows))
