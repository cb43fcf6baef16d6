"""Connector-angle and rotor-input optimization for one or many assemblies.

For a fixed tree the decision vector is the angle vector (n + 1 entries)
plus one input vector of 4n squared rotor speeds per task wrench.  The
equality constraints ``A(alpha) u_k = b_k`` are handled by an augmented
Lagrangian, the capsule clearances by shifted hinge penalties with
multipliers, and the box bounds by L-BFGS-B in the inner loop.  Inputs are
optimized in units of ``u_max`` so every variable lives in [0, 1] or
[-pi/2, pi/2].
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .downwash import capsule_extent, clearance_constraints, clearance_gradient
from .errors import DimensionMismatch
from .graph import AssemblyGraph, extract_graph
from .kinematics import ModuleParams, actuation_jacobian, actuation_matrix, pose_jacobian, propagate_poses
from .lattice import LatticeConfig, canonicalize
from .qp import min_norm_box

log = logging.getLogger(__name__)

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class WrenchTask:
    wrenches: np.ndarray  # (K, 6)
    weights: np.ndarray  # (K,)

    def __init__(self, wrenches, weights=None):
        w = np.atleast_2d(np.asarray(wrenches, dtype=float))
        if w.ndim != 2 or w.shape[1] != 6:
            raise DimensionMismatch(f"wrenches must be K x 6, got {w.shape}")
        if len(w) < 1:
            raise ValueError("a task needs at least one wrench")
        lam = np.ones(len(w)) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if lam.shape != (len(w),):
            raise DimensionMismatch(f"{len(lam)} weights for {len(w)} wrenches")
        if np.any(lam < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(lam)):
            raise ValueError("weights must be nonnegative and all entries finite")
        object.__setattr__(self, "wrenches", w)
        object.__setattr__(self, "weights", lam)

    @property
    def K(self) -> int:
        return len(self.wrenches)

    def to_json(self) -> dict:
        return {"wrenches": self.wrenches.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj) -> "WrenchTask":
        return cls(obj["wrenches"], obj.get("weights"))


def augment_wrench_set(task: WrenchTask, n: int, params: ModuleParams) -> WrenchTask:
    """Add the assembly weight to every target and append a pure hover wrench."""
    if n < 1:
        raise ValueError("n must be >= 1")
    weight = n * params.m * params.g
    w = task.wrenches.copy()
    w[:, 2] += weight
    hover = np.array([[0.0, 0.0, weight, 0.0, 0.0, 0.0]])
    return WrenchTask(np.vstack([w, hover]), np.append(task.weights, 1.0))


def force_task(forces, n: int, params: ModuleParams | None = None, scaled: bool = False) -> WrenchTask:
    """Zero-torque task from a list of 3-D forces, optionally in units of ``n m g``."""
    f = np.atleast_2d(np.asarray(forces, dtype=float))
    if scaled:
        params = params or ModuleParams()
        f = f * n * params.m * params.g
    return WrenchTask(np.hstack([f, np.zeros_like(f)]))


def problem_size(n: int, K: int) -> dict:
    """Decision variables and constraint counts of the per-assembly program."""
    return {
        "variables": (n + 1) + 4 * n * K,
        "equalities": 6 * K,
        "inequalities": n * (n - 1) // 2,
        "bounds": 2 * ((n + 1) + 4 * n * K),
    }


@dataclass
class SolverOptions:
    restarts: int = 4
    seed: int = 0
    perturbation: float = 0.3
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-6
    max_outer: int = 500
    max_inner: int = 3000
    capsule: tuple[float, float] | None = None
    pinned: Mapping[int, float] | None = None
    stop_at_first_feasible: bool = False
    yaw_orbit: bool = True
    trust: float = 0.25

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["pinned"] = {str(k): v for k, v in (self.pinned or {}).items()}
        return d


@dataclass
class OptimizationResult:
    alpha: np.ndarray
    inputs: np.ndarray  # (K, 4n) squared rotor speeds
    cost: float
    feasible: bool
    eq_residual: float  # max over tasks of |A u - b|_inf / max(1, |b|_inf)
    bound_violation: float
    min_margin: float
    iterations: int = 0
    seconds: float = 0.0  # not serialized, so re-runs give byte-identical artifacts
    message: str = ""
    starts: list = field(default_factory=list)
    quarter_turns: int = 0

    def to_json(self) -> dict:
        return {
            "quarter_turns": self.quarter_turns,
            "alpha": self.alpha.tolist(),
            "inputs": self.inputs.tolist(),
            "cost": self.cost,
            "feasible": bool(self.feasible),
            "eq_residual": self.eq_residual,
            "bound_violation": self.bound_violation,
            "min_margin": self.min_margin,
            "iterations": self.iterations,
            "message": self.message,
            "starts": self.starts,
        }

    @classmethod
    def from_json(cls, obj) -> "OptimizationResult":
        return cls(
            alpha=np.asarray(obj["alpha"], dtype=float),
            inputs=np.asarray(obj["inputs"], dtype=float),
            cost=float(obj["cost"]),
            feasible=bool(obj["feasible"]),
            eq_residual=float(obj["eq_residual"]),
            bound_violation=float(obj["bound_violation"]),
            min_margin=float(obj["min_margin"]),
            iterations=int(obj.get("iterations", 0)),
            seconds=float(obj.get("seconds", 0.0)),
            message=obj.get("message", ""),
            starts=list(obj.get("starts", [])),
            quarter_turns=int(obj.get("quarter_turns", 0)),
        )


def check_solution(graph: AssemblyGraph, task: WrenchTask, params: ModuleParams, alpha, inputs, capsule=None) -> dict:
    """Residuals of a candidate point, recomputed from scratch."""
    pose = propagate_poses(graph, alpha, params)
    A = actuation_matrix(pose, params)
    u = np.asarray(inputs, dtype=float).reshape(task.K, 4 * graph.n)
    eq = 0.0
    for k in range(task.K):
        b = task.wrenches[k]
        eq = max(eq, float(np.abs(A @ u[k] - b).max()) / max(1.0, float(np.abs(b).max())))
    bound = float(max(0.0, -u.min(), (u - params.u_max).max()))
    a, b = capsule if capsule is not None else capsule_extent(params)
    rep = clearance_constraints(pose, params, a, b)
    cost = float(np.sum(task.weights * np.sum(u * u, axis=1)))
    alpha_viol = float(max(0.0, np.abs(np.asarray(alpha)).max() - HALF_PI))
    return {"eq_residual": eq, "bound_violation": max(bound, alpha_viol), "min_margin": rep.min_margin, "cost": cost}


class _Problem:
    """Scaled augmented Lagrangian for one assembly and one task set."""

    def __init__(self, graph, task, params, capsule):
        self.graph = graph
        self.task = task
        self.params = params
        self.n = graph.n
        self.K = task.K
        self.m = 4 * graph.n
        self.capsule = capsule
        self.bscale = max(1.0, float(np.abs(task.wrenches).max()))
        self.b = task.wrenches / self.bscale
        self.ascale = params.u_max / self.bscale
        self.gscale = 1.0 / (4.0 * params.r**2)
        self.na = graph.n + 1

    def split(self, z):
        return z[: self.na], z[self.na :].reshape(self.K, self.m)

    def constraints(self, alpha, x, with_grad=False):
        derivs = pose_jacobian(self.graph, alpha, self.params)
        pose, dR, do = derivs
        A = actuation_matrix(pose, self.params) * self.ascale
        h = x @ A.T - self.b  # (K, 6)
        rep = clearance_constraints(pose, self.params, *self.capsule)
        g = rep.margins * self.gscale
        if not with_grad:
            return A, h, g, None, None
        dA = actuation_jacobian(self.graph, alpha, self.params, pose_derivs=derivs) * self.ascale
        dg = clearance_gradient(rep, pose, dR, do) * self.gscale
        return A, h, g, dA, dg

    def lagrangian(self, z, y, mu, rho):
        alpha, x = self.split(z)
        A, h, g, dA, dg = self.constraints(alpha, x, with_grad=True)
        lam = self.task.weights
        f = float(np.sum(lam * np.sum(x * x, axis=1)))
        yh = y + rho * h  # (K, 6)
        val = f + float(np.sum(y * h)) + 0.5 * rho * float(np.sum(h * h))
        shifted = np.maximum(0.0, mu - rho * g)
        val += float(np.sum(shifted**2 - mu**2)) / (2.0 * rho)
        gx = 2.0 * lam[:, None] * x + yh @ A
        ga = np.einsum("ijm,kj,ki->m", dA, x, yh)
        if len(g):
            ga -= shifted @ dg
        return val, np.concatenate([ga, gx.ravel()])


def _initial_inputs(prob: _Problem, alpha) -> np.ndarray:
    pose = propagate_poses(prob.graph, alpha, prob.params)
    A = actuation_matrix(pose, prob.params) * prob.ascale
    x = np.linalg.lstsq(A, prob.b.T, rcond=None)[0].T
    return np.clip(x, 0.0, 1.0)


def _run_al(prob: _Problem, alpha0, bounds, opts: SolverOptions):
    x0 = _initial_inputs(prob, alpha0)
    z = np.concatenate([alpha0, x0.ravel()])
    y = np.zeros((prob.K, 6))
    mu = np.zeros(prob.n * (prob.n - 1) // 2)
    rho = 10.0
    prev = math.inf
    target = 1e-9
    total = 0
    history = []
    lo = np.array([b[0] for b in bounds[: prob.na]])
    hi = np.array([b[1] for b in bounds[: prob.na]])
    for outer in range(opts.max_outer):
        # angles move at most `trust` per outer step; a free first step can
        # land on a degenerate corner (all inputs zero, angles at the bounds)
        a = z[: prob.na]
        local = list(zip(np.maximum(lo, a - opts.trust), np.minimum(hi, a + opts.trust))) + bounds[prob.na :]
        res = minimize(
            prob.lagrangian, z, args=(y, mu, rho), jac=True, method="L-BFGS-B", bounds=local,
            options={"maxiter": opts.max_inner, "ftol": 1e-15, "gtol": max(1e-10, min(1e-4, 1e-2 * prev)), "maxcor": 30},
        )
        z = res.x
        total += int(res.nit)
        log.debug("outer %d rho %.0e nit %d %s", outer, rho, res.nit, res.message)
        alpha, x = prob.split(z)
        _, h, g, _, _ = prob.constraints(alpha, x)
        eq_viol = float(np.abs(h).max())
        ineq_viol = float(np.abs(np.minimum(g, mu / rho)).max(initial=0.0))
        viol = max(eq_viol, ineq_viol)
        y = y + rho * h
        mu = np.maximum(0.0, mu - rho * g)
        if viol <= target:
            break
        history.append(viol)
        # stalled at a locally infeasible point: more penalty will not help
        if rho >= 1e8 and len(history) > 3 and history[-1] > 0.99 * history[-4]:
            break
        if viol > 0.25 * prev:
            rho = min(rho * 10.0, 1e10)
        prev = viol
    return z, outer + 1, total


def _polish(prob: _Problem, alpha, x):
    """Exact minimum-norm inputs at the final angles, one task at a time."""
    pose = propagate_poses(prob.graph, alpha, prob.params)
    A = actuation_matrix(pose, prob.params) * prob.ascale
    out = x.copy()
    ok_all = True
    for k in range(prob.K):
        xk, _, ok = min_norm_box(A, prob.b[k], 0.0, 1.0, tol=1e-12)
        if ok:
            out[k] = xk
        ok_all &= ok
    return out, ok_all


def solve_single(graph: AssemblyGraph, task: WrenchTask, params: ModuleParams, opts: SolverOptions | None = None) -> OptimizationResult:
    """Locally optimal angles and inputs for one assembly, with restarts."""
    opts = opts or SolverOptions()
    if task.wrenches.shape[1] != 6:
        raise DimensionMismatch("wrenches must have 6 components")
    t0 = time.perf_counter()
    capsule = opts.capsule or capsule_extent(params)
    prob = _Problem(graph, task, params, capsule)
    lo = np.full(prob.na, -HALF_PI)
    hi = np.full(prob.na, HALF_PI)
    base = np.zeros(prob.na)
    for idx, val in (opts.pinned or {}).items():
        lo[int(idx)] = hi[int(idx)] = base[int(idx)] = float(val)
    bounds = list(zip(lo, hi)) + [(0.0, 1.0)] * (prob.K * prob.m)

    rng = np.random.default_rng(opts.seed)
    starts = [base]
    for _ in range(opts.restarts):
        pert = rng.uniform(-opts.perturbation, opts.perturbation, prob.na)
        starts.append(np.clip(base + pert, lo, hi))

    best = None
    summary = []
    iters = 0
    for s_idx, alpha0 in enumerate(starts):
        z, n_outer, n_inner = _run_al(prob, alpha0, bounds, opts)
        iters += n_outer
        alpha, x = prob.split(z)
        alpha = np.clip(alpha, lo, hi)
        x, _ = _polish(prob, alpha, x)
        u = np.clip(x, 0.0, 1.0) * params.u_max
        chk = check_solution(graph, task, params, alpha, u, capsule)
        feasible = (
            chk["eq_residual"] <= opts.tol_eq
            and chk["bound_violation"] <= 1e-9
            and chk["min_margin"] >= -opts.tol_ineq
        )
        cand = OptimizationResult(
            alpha=alpha, inputs=u, cost=chk["cost"], feasible=feasible,
            eq_residual=chk["eq_residual"], bound_violation=chk["bound_violation"],
            min_margin=chk["min_margin"],
        )
        summary.append({"start": s_idx, "feasible": feasible, "cost": chk["cost"], "eq_residual": chk["eq_residual"]})
        if _better(cand, best):
            best = cand
        if feasible and opts.stop_at_first_feasible:
            break
    best.iterations = iters
    best.seconds = time.perf_counter() - t0
    best.starts = summary
    best.message = "locally optimal" if best.feasible else "no feasible point found"
    return best


def _violation(r: OptimizationResult) -> float:
    return max(r.eq_residual, r.bound_violation, max(0.0, -r.min_margin))


def _better(cand: OptimizationResult, best: OptimizationResult | None) -> bool:
    if best is None:
        return True
    if cand.feasible != best.feasible:
        return cand.feasible
    if cand.feasible:
        return cand.cost < best.cost
    return _violation(cand) < _violation(best)


@dataclass
class SelectionOutcome:
    n: int | None
    index: int | None
    key: str | None
    graph: AssemblyGraph | None
    alpha: np.ndarray | None
    cost: float
    result: OptimizationResult | None
    table: list = field(default_factory=list)
    config: LatticeConfig | None = None
    message: str = ""

    @property
    def found(self) -> bool:
        return self.n is not None

    def to_json(self) -> dict:
        return {
            "found": self.found,
            "n": self.n,
            "index": self.index,
            "key": self.key,
            "graph": self.graph.to_json(self.alpha) if self.graph is not None else None,
            "config": self.config.to_json() if self.config is not None else None,
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "cost": self.cost if math.isfinite(self.cost) else None,
            "result": self.result.to_json() if self.result is not None else None,
            "table": self.table,
            "message": self.message,
        }


def orientations(config: LatticeConfig) -> list[tuple[int, LatticeConfig]]:
    """Distinct planar yaws of a configuration as ``(quarter_turns, config)``.

    The tasks are expressed in a fixed world frame and the root rotation
    has no yaw freedom, so a direction-specific task can be feasible for a
    rotated copy of a lattice shape and not for the shape as stored.
    """
    seen = []
    out = []
    for k in range(4):
        rot = config.rotate90(k).normalized()
        if rot not in seen:
            seen.append(rot)
            out.append((k, rot))
    return out


def solve_config(config: LatticeConfig, task: WrenchTask, params: ModuleParams, opts: SolverOptions | None = None):
    """Best result over the configuration's planar yaws (or as stored).

    Returns ``(result, oriented_config)``; ``result.quarter_turns`` records
    the rotation applied to ``config``.
    """
    opts = opts or SolverOptions()
    cands = orientations(config) if opts.yaw_orbit else [(0, config)]
    best = best_cfg = None
    for k, cfg in cands:
        res = solve_single(extract_graph(cfg), task, params, opts)
        res.quarter_turns = k
        if _better(res, best):
            best, best_cfg = res, cfg
    return best, best_cfg


def _solve_entry(args):
    cfg, task, params, opts = args
    return solve_config(cfg, task, params, opts)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("MODASM_THREADS")
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def solve_many(configs: Sequence[LatticeConfig], task: WrenchTask, params: ModuleParams, opts: SolverOptions | None = None, workers: int | None = None) -> list[tuple[OptimizationResult, LatticeConfig]]:
    """Solve each configuration independently; results keep input order.

    Each entry is ``(result, oriented_config)`` as from :func:`solve_config`.
    """
    opts = opts or SolverOptions()
    jobs = [(cfg, task, params, opts) for cfg in configs]
    nw = worker_count(workers)
    if nw <= 1 or len(jobs) <= 1:
        return [_solve_entry(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(_solve_entry, jobs))


def select_across(
    config_sets: Mapping[int, Sequence[LatticeConfig]],
    task: WrenchTask,
    params: ModuleParams,
    opts: SolverOptions | None = None,
    augment: bool = True,
    workers: int | None = None,
) -> SelectionOutcome:
    """Smallest module count with a feasible assembly, and its cheapest member.

    Ties in cost (relative 1e-9) go to the smaller canonical key.
    """
    opts = opts or SolverOptions()
    table = []
    for n in sorted(config_sets):
        configs = sorted(config_sets[n], key=canonicalize)
        t_n = augment_wrench_set(task, n, params) if augment else task
        results = solve_many(configs, t_n, params, opts, workers)
        best_i = None
        for i, (cfg, (res, _)) in enumerate(zip(configs, results)):
            key = canonicalize(cfg).hex()
            table.append({"n": n, "index": i, "key": key, "feasible": res.feasible, "cost": res.cost,
                          "alpha": res.alpha.tolist(), "eq_residual": res.eq_residual, "min_margin": res.min_margin,
                          "bound_violation": res.bound_violation,
                          "quarter_turns": res.quarter_turns})
            if not res.feasible:
                continue
            if best_i is None or res.cost < results[best_i][0].cost * (1.0 - 1e-9):
                best_i = i
        if best_i is not None:
            res, cfg = results[best_i]
            return SelectionOutcome(
                n=n, index=best_i, key=canonicalize(cfg).hex(), graph=extract_graph(cfg), alpha=res.alpha,
                cost=res.cost, result=res, table=table, config=cfg, message="optimal solution found",
            )
        log.info("no feasible assembly with %d modules", n)
    nmax = max(config_sets) if config_sets else 0
    return SelectionOutcome(None, None, None, None, None, math.inf, None, table,
                            message=f"no feasible solution found within n={nmax}")


def load_task(path) -> tuple[WrenchTask, bool]:
    with open(path) as fh:
        obj = json.load(fh)
    return WrenchTask.from_json(obj), bool(obj.get("augment_gravity", True))


def replace_opts(opts: SolverOptions, **kw) -> SolverOptions:
    return replace(opts, **kw)
