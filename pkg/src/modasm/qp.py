"""Minimum-norm inputs under box bounds for a fixed actuation matrix."""

from __future__ import annotations

import numpy as np


def _dual_value(y, A, b, lo, hi):
    v = A.T @ y
    x = np.clip(v, lo, hi)
    return y @ b - np.sum(v * x - 0.5 * x * x), x


def min_norm_box(A, b, lo=0.0, hi=1.0, tol=1e-12, max_iter=200):
    """Solve ``min ||x||^2  s.t.  A x = b,  lo <= x <= hi``.

    Semismooth Newton on the concave dual.  Returns ``(x, residual, ok)``
    where ``residual`` is the max-norm of ``A x - b``; ``ok`` is False when
    the equality cannot be met within ``tol * max(1, |b|_inf)`` (the box
    problem is infeasible or the iteration stalled).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = A.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (k,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (k,))
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    reg = 1e-13 * max(1.0, float(np.sum(A * A)))
    y = np.linalg.lstsq(A @ A.T + reg * np.eye(m), b, rcond=None)[0]
    val, x = _dual_value(y, A, b, lo, hi)
    res = b - A @ x
    for _ in range(max_iter):
        if np.abs(res).max(initial=0.0) <= tol * scale:
            return x, float(np.abs(res).max(initial=0.0)), True
        v = A.T @ y
        free = (v > lo) & (v < hi)
        Af = A[:, free]
        H = Af @ Af.T + reg * np.eye(m)
        step = np.linalg.solve(H, res)
        slope = step @ res
        t = 1.0
        while t > 1e-12:
            new_val, new_x = _dual_value(y + t * step, A, b, lo, hi)
            if new_val >= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        y = y + t * step
        val, x = new_val, new_x
        res = b - A @ x
    r = float(np.abs(res).max(initial=0.0))
    return x, r, r <= tol * scale
