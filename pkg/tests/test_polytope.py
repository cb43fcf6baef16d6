import csv
import math

import numpy as np
import pytest

from modasm.graph import extract_graph
from modasm.kinematics import actuation_matrix_at
from modasm.lattice import LatticeConfig, attach, random_growth
from modasm.polytope import (
    bounded_residual,
    force_polytope,
    icosphere,
    membership,
    support_by_bisection,
    support_by_vertices,
    support_in_direction,
)


def achievable_direction(A, u_max, rng):
    """Direction of a random zero-torque force the assembly can produce."""
    F, T = A[:3], A[3:]
    _, s, Vt = np.linalg.svd(T)
    null = Vt[np.sum(s > 1e-12 * s[0]):]
    for _ in range(100):
        f = F @ (null.T @ rng.normal(size=len(null)))
        if np.linalg.norm(f) > 1e-9:
            return f / np.linalg.norm(f)
    raise AssertionError("no zero-torque force direction")


@pytest.fixture
def single(params):
    return actuation_matrix_at(extract_graph(LatticeConfig.single()), [0, 0], params)


def test_single_module_support(single, params):
    s = support_in_direction(single, [0, 0, 1], params.u_max)
    assert s == pytest.approx(4 * params.c_f * params.u_max, rel=1e-9)
    assert support_in_direction(single, [1, 0, 0], params.u_max) == pytest.approx(0.0, abs=1e-9)
    assert support_in_direction(single, [0, 0, -1], params.u_max) == pytest.approx(0.0, abs=1e-9)


def test_icosphere():
    d = icosphere(3)
    assert d.shape == (642, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1)
    assert len(icosphere(0)) == 12


def test_lp_matches_independent_oracles(rng, params):
    for k in range(12):
        n = int(rng.integers(2, 4))
        g = extract_graph(random_growth(n, rng))
        a = rng.uniform(-0.8, 0.8, n + 1)
        A = actuation_matrix_at(g, a, params)
        d = achievable_direction(A, params.u_max, rng)
        s = support_in_direction(A, d, params.u_max)
        ref = support_by_bisection(A, d, params.u_max)
        assert abs(s - ref) <= 1e-6 * max(1.0, ref)
        if n == 2:
            assert abs(s - support_by_vertices(A, d, params.u_max)) <= 1e-6 * max(1.0, s)


def test_membership_scaling(rng, params):
    g = extract_graph(attach(LatticeConfig.single(), (1, 0)))
    A = actuation_matrix_at(g, np.radians([-22.0, 0.0, 44.0]), params)
    W = 2 * params.m * params.g
    hover = np.array([0, 0, W, 0, 0, 0])
    for fy in (0.2, 1.0, 5.0):
        b = np.array([0, fy, W, 0, 0, 0])
        ok, gamma, u = membership(A, b, params.u_max, hover)
        assert ok == (gamma >= 1)
        if ok:
            assert np.allclose(A @ u, b, atol=1e-8)
        assert bounded_residual(A, b, params.u_max) <= 1e-6 or not ok
    ok, gamma, _ = membership(A, hover, params.u_max, hover)
    assert ok and gamma == math.inf


def test_membership_unreachable_hover(single, params):
    far = np.array([0, 0, 100.0, 0, 0, 0])
    ok, gamma, u = membership(single, np.array([0, 0, 1.0, 0, 0, 0]), params.u_max, far)
    assert ok and math.isnan(gamma)
    ok, gamma, u = membership(single, far, params.u_max)
    assert not ok and u is None
    assert gamma == pytest.approx(4 * params.c_f * params.u_max / 100.0, rel=1e-9)


def test_force_polytope_csv(tmp_path, single, params):
    poly = force_polytope(single, params.u_max, directions=icosphere(1), weight=params.m * params.g)
    path = tmp_path / "p.csv"
    poly.write_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 42
    assert set(rows[0]) == {"dir_x", "dir_y", "dir_z", "s", "s_norm", "fx", "fy", "fz"}
    assert max(float(r["s_norm"]) for r in rows) == pytest.approx(1.0)
    top = max(rows, key=lambda r: float(r["dir_z"]))
    assert float(top["fz"]) == pytest.approx(float(top["s"]) - params.m * params.g)
