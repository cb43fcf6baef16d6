import json
import math

import numpy as np
import pytest

from modasm.errors import DimensionMismatch
from modasm.graph import extract_graph
from modasm.kinematics import actuation_matrix_at
from modasm.lattice import LatticeConfig, attach, canonicalize, enumerate_levels
from modasm.optimizer import (
    OptimizationResult,
    SolverOptions,
    WrenchTask,
    augment_wrench_set,
    check_solution,
    force_task,
    orientations,
    problem_size,
    select_across,
    solve_config,
    solve_single,
)
from modasm.qp import min_norm_box

TOY_FORCES = [[0.0, 0.36, 0.0], [0.0, -0.36, 0.0]]


def test_problem_size_bookkeeping():
    size = problem_size(90, 10)
    assert (size["variables"], size["equalities"], size["inequalities"]) == (3691, 60, 4005)
    assert problem_size(1, 1)["inequalities"] == 0


def test_task_validation():
    with pytest.raises(DimensionMismatch):
        WrenchTask(np.zeros((2, 5)))
    with pytest.raises(DimensionMismatch):
        WrenchTask(np.zeros((2, 6)), [1.0])
    with pytest.raises(ValueError):
        WrenchTask(np.zeros((1, 6)), [-1.0])
    with pytest.raises(ValueError):
        WrenchTask([[0, 0, math.nan, 0, 0, 0]])
    t = WrenchTask(np.ones((3, 6)))
    assert WrenchTask.from_json(json.loads(json.dumps(t.to_json()))).wrenches.tolist() == t.wrenches.tolist()


def test_augment(params):
    raw = force_task([[0.5, 0, 0], [0, 0.5, 0]], 4, params, scaled=True)
    nmg = 4 * params.m * params.g
    assert np.allclose(raw.wrenches[0, :3], [0.5 * nmg, 0, 0])
    aug = augment_wrench_set(raw, 4, params)
    assert aug.K == 3
    assert np.allclose(aug.wrenches[:, :3], [[0.5 * nmg, 0, nmg], [0, 0.5 * nmg, nmg], [0, 0, nmg]])
    assert np.all(aug.wrenches[:, 3:] == 0)
    with pytest.raises(ValueError):
        augment_wrench_set(raw, 0, params)


def test_check_solution_hover(params):
    g = extract_graph(attach(LatticeConfig.single(), (0, 1)))
    task = augment_wrench_set(force_task([[0, 0, 0]], 2), 2, params)
    u = np.full((task.K, 8), params.hover_input)
    chk = check_solution(g, task, params, np.zeros(3), u)
    assert chk["eq_residual"] <= 1e-12
    assert chk["bound_violation"] == 0.0
    assert chk["min_margin"] > 0
    assert chk["cost"] == pytest.approx(task.K * 8 * params.hover_input**2)
    bad = check_solution(g, task, params, np.array([0, 0, 1.0]), -u)
    assert bad["bound_violation"] > 0


def test_orientations():
    domino = attach(LatticeConfig.single(), (0, 1))
    assert [k for k, _ in orientations(domino)] == [0, 1]
    assert len(orientations(LatticeConfig.single())) == 1
    for cfg in enumerate_levels(4)[4]:
        orbit = orientations(cfg)
        assert len(orbit) in (1, 2, 4)
        assert {canonicalize(c) for _, c in orbit} == {canonicalize(cfg)}


def test_straight_chain_forces_are_planar(rng, params):
    # every hinge of a straight chain shares one axis, so all thrust lies in a
    # plane and no orientation produces both lateral task forces
    chain = LatticeConfig.single()
    for k in range(1, 4):
        chain = attach(chain, (0, 2 * k - 1))
    g = extract_graph(chain)
    for _ in range(50):
        A = actuation_matrix_at(g, rng.uniform(-1.5, 1.5, 5), params)
        assert np.linalg.matrix_rank(A[:3], tol=1e-9 * np.abs(A[:3]).max()) <= 2


def test_single_module_cannot_push_sideways(params):
    task = augment_wrench_set(force_task(TOY_FORCES, 1), 1, params)
    res = solve_single(extract_graph(LatticeConfig.single()), task, params, SolverOptions(restarts=1))
    assert not res.feasible
    assert res.eq_residual == pytest.approx(0.36 / (params.m * params.g), rel=1e-6)


@pytest.fixture(scope="module")
def toy_outcome():
    from modasm.kinematics import ModuleParams

    params = ModuleParams()
    return select_across(enumerate_levels(2), force_task(TOY_FORCES, 2), params)


def test_toy_selects_two_modules(toy_outcome, params):
    assert toy_outcome.found and toy_outcome.n == 2
    res = toy_outcome.result
    assert res.feasible and res.eq_residual <= 1e-6 and res.bound_violation <= 1e-9 and res.min_margin >= -1e-6
    task = augment_wrench_set(force_task(TOY_FORCES, 2), 2, params)
    chk = check_solution(toy_outcome.graph, task, params, res.alpha, res.inputs)
    assert chk["eq_residual"] <= 1e-6
    # roll and hinge split the tilt evenly at the optimum
    assert abs(res.alpha[2]) == pytest.approx(2 * abs(res.alpha[0]), abs=np.radians(2))
    assert abs(res.alpha[1]) <= 1e-6


def test_toy_solution_beats_box_qp(toy_outcome, params):
    # at the returned angles no cheaper inputs exist
    task = augment_wrench_set(force_task(TOY_FORCES, 2), 2, params)
    A = actuation_matrix_at(toy_outcome.graph, toy_outcome.alpha, params)
    cost = 0.0
    for b in task.wrenches:
        x, r, ok = min_norm_box(A * params.u_max, b, tol=1e-8)
        assert ok
        cost += float((x * params.u_max) @ (x * params.u_max))
    assert toy_outcome.cost == pytest.approx(cost, rel=1e-6)


def test_outcome_json_roundtrip(toy_outcome):
    obj = json.loads(json.dumps(toy_outcome.to_json()))
    assert obj["n"] == 2 and obj["found"]
    res = OptimizationResult.from_json(obj["result"])
    assert np.array_equal(res.alpha, toy_outcome.alpha)
    assert res.quarter_turns == toy_outcome.result.quarter_turns
    assert "seconds" not in obj["result"]
    assert len(obj["table"]) == 2


def test_pinned_angles_are_respected(params):
    g = extract_graph(attach(LatticeConfig.single(), (1, 0)))
    task = augment_wrench_set(force_task(TOY_FORCES, 2), 2, params)
    pin = {0: -0.3, 2: 0.6}
    res = solve_single(g, task, params, SolverOptions(restarts=1, pinned=pin))
    assert res.alpha[0] == -0.3 and res.alpha[2] == 0.6


def test_solve_config_reports_orientation(params):
    task = augment_wrench_set(force_task(TOY_FORCES, 2), 2, params)
    domino = attach(LatticeConfig.single(), (0, 1))
    res, cfg = solve_config(domino, task, params, SolverOptions(restarts=2))
    assert res.feasible
    assert cfg == domino.rotate90(res.quarter_turns).normalized()
    fixed, cfg0 = solve_config(domino, task, params, SolverOptions(restarts=2, yaw_orbit=False))
    assert cfg0 == domino and fixed.quarter_turns == 0


def test_solver_is_deterministic(params):
    task = augment_wrench_set(force_task(TOY_FORCES, 2), 2, params)
    g = extract_graph(attach(LatticeConfig.single(), (1, 0)))
    a = solve_single(g, task, params)
    b = solve_single(g, task, params)
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.inputs, b.inputs)


def test_options_serialize():
    obj = SolverOptions(pinned={1: 0.5}).to_json()
    assert obj["pinned"] == {"1": 0.5}
    assert obj["restarts"] == 4 and obj["yaw_orbit"] is True
    json.dumps(obj)
