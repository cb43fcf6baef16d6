"""Capsule model of each module's downwash and pairwise clearance checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kinematics import AssemblyPose, ModuleParams

_EPS = 1e-14


def capsule_extent(params: ModuleParams) -> tuple[float, float]:
    """Default axis range ``[r/2, r/2 + 10 l_arm]`` below each module."""
    return params.r / 2.0, params.r / 2.0 + 10.0 * params.l_arm


def closest_params(p1, q1, p2, q2):
    """Parameters ``(s, t)`` in [0, 1] of the closest points of two segments.

    Works on single segments or on stacked arrays of shape (..., 3).
    """
    p1, q1, p2, q2 = (np.asarray(v, dtype=float) for v in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    a_ok = a > _EPS
    e_ok = e > _EPS
    safe_a = np.where(a_ok, a, 1.0)
    safe_e = np.where(e_ok, e, 1.0)
    denom = a * e - b * b
    # near-parallel axes: any s works, start from 0 and let t pick the clamp
    skew = denom > _EPS * np.maximum(a * e, _EPS)
    s = np.where(skew, np.clip((b * f - c * e) / np.where(skew, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / safe_e
    s = np.where(t < 0.0, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    # degenerate segments
    s = np.where(~a_ok, 0.0, s)
    t = np.where(~a_ok & e_ok, np.clip(f / safe_e, 0.0, 1.0), t)
    s = np.where(a_ok & ~e_ok, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(~e_ok, 0.0, t)
    return s, t


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum Euclidean distance between closed segments [p1, q1] and [p2, q2]."""
    s, t = closest_params(p1, q1, p2, q2)
    p1, q1, p2, q2 = (np.asarray(v, dtype=float) for v in (p1, q1, p2, q2))
    gap = (p1 + s * (q1 - p1)) - (p2 + t * (q2 - p2))
    return float(np.linalg.norm(gap))


@dataclass
class ClearanceReport:
    pairs: np.ndarray  # (P, 2) module ids, i < j
    dist2: np.ndarray  # squared axis distances
    margins: np.ndarray  # dist2 - 4 r^2
    mu: np.ndarray  # (P, 2) depth of the witness points along each axis
    points: np.ndarray  # (P, 2, 3) witness points

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if len(self.margins) else float("inf")

    def __len__(self) -> int:
        return len(self.pairs)

    def matrix(self, n: int) -> np.ndarray:
        """Symmetric (n, n) matrix of squared distances, zeros on the diagonal."""
        out = np.zeros((n, n))
        i, j = self.pairs.T if len(self.pairs) else (np.array([], int), np.array([], int))
        out[i, j] = self.dist2
        out[j, i] = self.dist2
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "distance", "margin"])
            for (i, j), d2, m in zip(self.pairs, self.dist2, self.margins):
                w.writerow([int(i), int(j), float(np.sqrt(d2)), float(m)])


def pair_indices(n: int) -> np.ndarray:
    i, j = np.triu_indices(n, k=1)
    return np.stack([i, j], axis=1)


def clearance_constraints(pose: AssemblyPose, params: ModuleParams, a: float | None = None, b: float | None = None) -> ClearanceReport:
    """Squared distances between all capsule axes and their margins to ``4 r^2``."""
    if a is None or b is None:
        a0, b0 = capsule_extent(params)
        a = a0 if a is None else a
        b = b0 if b is None else b
    if not a < b:
        raise ValueError("capsule extent requires a < b")
    pairs = pair_indices(pose.n)
    if len(pairs) == 0:
        empty = np.zeros(0)
        return ClearanceReport(pairs, empty, empty, np.zeros((0, 2)), np.zeros((0, 2, 3)))
    o = pose.positions
    z = pose.normals
    top = o - a * z
    bottom = o - b * z
    i, j = pairs[:, 0], pairs[:, 1]
    s, t = closest_params(top[i], bottom[i], top[j], bottom[j])
    mu = np.stack([a + s * (b - a), a + t * (b - a)], axis=1)
    pi = o[i] - mu[:, :1] * z[i]
    pj = o[j] - mu[:, 1:] * z[j]
    dist2 = np.einsum("ij,ij->i", pi - pj, pi - pj)
    margins = dist2 - 4.0 * params.r**2
    return ClearanceReport(pairs, dist2, margins, mu, np.stack([pi, pj], axis=1))


def clearance_gradient(report: ClearanceReport, pose: AssemblyPose, dR: np.ndarray, do: np.ndarray) -> np.ndarray:
    """Gradient of every squared distance w.r.t. the angle vector, shape (P, n+1).

    Uses the witness depths held fixed, which is exact wherever the closest
    points are unique.
    """
    if len(report) == 0:
        return np.zeros((0, do.shape[1]))
    i, j = report.pairs[:, 0], report.pairs[:, 1]
    dz = dR[:, :, :, 2]
    dpi = do[i] - report.mu[:, 0, None, None] * dz[i]
    dpj = do[j] - report.mu[:, 1, None, None] * dz[j]
    gap = report.points[:, 0] - report.points[:, 1]
    return 2.0 * np.einsum("pk,pmk->pm", gap, dpi - dpj)
