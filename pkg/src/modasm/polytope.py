"""Zero-torque force polytope of an assembly and wrench membership tests."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, lsq_linear


def _lp(c, A_eq, b_eq, bounds):
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    return res


def support_in_direction(A, direction, u_max: float) -> float:
    """Largest ``s >= 0`` with ``A u = [s d, 0]`` for some ``0 <= u <= u_max``."""
    A = np.asarray(A, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    m = A.shape[1]
    As = A * u_max
    target = np.concatenate([d, np.zeros(3)])
    A_eq = np.hstack([As, -target[:, None]])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = _lp(c, A_eq, np.zeros(6), [(0.0, 1.0)] * m + [(0.0, None)])
    if res.status != 0:
        return 0.0
    return max(0.0, float(res.x[-1]))


def membership(A, b, u_max: float, hover=None, gamma_cap: float = 1e6):
    """Whether wrench ``b`` is reachable, plus a scale margin.

    The margin is the largest ``gamma`` with ``hover + gamma (b - hover)``
    reachable (``hover`` defaults to zero), so ``gamma >= 1`` exactly when
    ``b`` itself is reachable.  It is ``inf`` when ``b == hover`` and
    ``nan`` when even the hover wrench is out of reach.  Returns
    ``(feasible, gamma, u)`` with ``u`` a feasible input or ``None``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    h = np.zeros(6) if hover is None else np.asarray(hover, dtype=float)
    m = A.shape[1]
    As = A * u_max
    feas = _lp(np.zeros(m), As, b, [(0.0, 1.0)] * m)
    ok = feas.status == 0
    u = feas.x * u_max if ok else None
    delta = b - h
    if not np.any(delta):
        gamma = math.inf if ok else math.nan
        return ok, gamma, u
    if _lp(np.zeros(m), As, h, [(0.0, 1.0)] * m).status != 0:
        return ok, math.nan, u
    A_eq = np.hstack([As, -delta[:, None]])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = _lp(c, A_eq, h, [(0.0, 1.0)] * m + [(0.0, gamma_cap)])
    if res.status != 0:
        return ok, math.nan, u
    gamma = float(res.x[-1])
    return ok, (math.inf if gamma >= gamma_cap * (1 - 1e-9) else gamma), u


def bounded_residual(A, w, u_max: float) -> float:
    """Smallest ``|A u - w|_2`` over the input box (bounded least squares)."""
    A = np.asarray(A, dtype=float)
    res = lsq_linear(A * u_max, np.asarray(w, dtype=float), bounds=(0.0, 1.0), method="bvls", tol=1e-14)
    return float(np.linalg.norm(A @ (res.x * u_max) - w))


def support_by_bisection(A, direction, u_max: float, rtol: float = 1e-10) -> float:
    """Support value from feasibility probes by bounded least squares."""
    A = np.asarray(A, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    scale = float(np.abs(A).max()) * u_max
    tol = 1e-9 * scale

    def reachable(s):
        return bounded_residual(A, np.concatenate([s * d, np.zeros(3)]), u_max) <= tol

    hi = float(np.abs(A[:3]).sum()) * u_max  # no force exceeds the summed column norms
    lo = 0.0
    if reachable(hi):
        return hi
    while hi - lo > rtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if reachable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def support_by_vertices(A, direction, u_max: float) -> float:
    """Brute-force support value by enumerating basic solutions.

    Every vertex of ``{(u, s): A u = [s d, 0], 0 <= u <= u_max}`` fixes all
    but six variables at a bound; the best feasible vertex is the optimum.
    Exponential in the column count, so only for small assemblies.
    """
    A = np.asarray(A, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    m = A.shape[1]
    M = np.hstack([A * u_max, -np.concatenate([d, np.zeros(3)])[:, None]])  # columns: x (m), s
    scale = float(np.abs(M).max())
    best = 0.0
    cols = range(m + 1)
    rank = np.linalg.matrix_rank(M)
    for basis in itertools.combinations(cols, rank):
        B = M[:, basis]
        if np.linalg.matrix_rank(B) < rank:
            continue
        rest = [j for j in cols if j not in basis]
        for fixed in itertools.product((0.0, 1.0), repeat=len(rest)):
            full = np.zeros(m + 1)
            for j, v in zip(rest, fixed):
                full[j] = v
            if m in rest and fixed[rest.index(m)] == 1.0:
                continue  # s has no upper bound; only s = 0 is a bound
            rhs = -M @ full
            sol, *_ = np.linalg.lstsq(B, rhs, rcond=None)
            full[list(basis)] = sol
            if np.abs(M @ full).max() > 1e-9 * scale:
                continue
            x = full[:m]
            if x.min() < -1e-9 or x.max() > 1 + 1e-9 or full[m] < -1e-9:
                continue
            best = max(best, float(full[m]))
    return best


def icosphere(subdivisions: int = 3) -> np.ndarray:
    """Unit directions from a subdivided icosahedron (642 points at level 3)."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    pts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = pts[i] + pts[j]
                pts.append(p / np.linalg.norm(p))
                cache[key] = len(pts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(pts)


@dataclass
class ForcePolytope:
    directions: np.ndarray  # (D, 3) unit vectors
    support: np.ndarray  # (D,) newtons
    offset: np.ndarray  # subtracted from every support point (e.g. the weight)

    @property
    def points(self) -> np.ndarray:
        return self.directions * self.support[:, None] - self.offset

    def write_csv(self, path) -> None:
        peak = float(self.support.max()) if len(self.support) else 1.0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dir_x", "dir_y", "dir_z", "s", "s_norm", "fx", "fy", "fz"])
            for d, s, p in zip(self.directions, self.support, self.points):
                w.writerow([*map(float, d), float(s), float(s / peak) if peak > 0 else 0.0, *map(float, p)])


def force_polytope(A, u_max: float, directions=None, weight: float = 0.0) -> ForcePolytope:
    """Support values over a direction set; ``weight`` shifts points down by it."""
    dirs = icosphere(3) if directions is None else np.asarray(directions, dtype=float)
    s = np.array([support_in_direction(A, d, u_max) for d in dirs])
    return ForcePolytope(dirs, s, np.array([0.0, 0.0, weight]))
