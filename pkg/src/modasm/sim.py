"""Closed-loop rigid-body flight of an optimized assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .control import (
    ActuationStructure,
    Allocator,
    AssemblyInertia,
    ControllerGains,
    Reference,
    assembly_inertia,
    control_wrench,
    hat,
    rotation_angle,
)
from .downwash import clearance_constraints
from .errors import NumericalDivergence
from .graph import AssemblyGraph
from .kinematics import ModuleParams, actuation_matrix, propagate_poses, rot_x, rot_z

E3 = np.array([0.0, 0.0, 1.0])
V_LIMIT = 1e3
W_LIMIT = 1e3


@dataclass
class RigidBodyState:
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray

    @classmethod
    def at_rest(cls, p=(0.0, 0.0, 0.0), R=None) -> "RigidBodyState":
        return cls(np.array(p, dtype=float), np.zeros(3), np.eye(3) if R is None else np.array(R, dtype=float), np.zeros(3))


def orthonormalize(R) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def _deriv(p, v, R, w, force_body, torque, inertia: AssemblyInertia, J_inv, g):
    dp = v
    dv = R @ force_body / inertia.mass - g * E3
    dR = R @ hat(w)
    dw = J_inv @ (torque - np.cross(w, inertia.J @ w))
    return dp, dv, dR, dw


def step(state: RigidBodyState, u_c, inertia: AssemblyInertia, A, dt: float, g: float = 9.81, J_inv=None) -> RigidBodyState:
    """Advance one RK4 step with the body wrench ``A u_c`` held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    W = np.asarray(A) @ np.asarray(u_c)
    f, tau = W[:3], W[3:]
    J_inv = inertia.J_inv if J_inv is None else J_inv
    p, v, R, w = state.p, state.v, state.R, state.omega
    k1 = _deriv(p, v, R, w, f, tau, inertia, J_inv, g)
    k2 = _deriv(p + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], R + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3], f, tau, inertia, J_inv, g)
    k3 = _deriv(p + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], R + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3], f, tau, inertia, J_inv, g)
    k4 = _deriv(p + dt * k3[0], v + dt * k3[1], R + dt * k3[2], w + dt * k3[3], f, tau, inertia, J_inv, g)
    new = [x + dt / 6.0 * (a + 2 * b + 2 * c + d) for x, a, b, c, d in zip((p, v, R, w), k1, k2, k3, k4)]
    new[2] = orthonormalize(new[2])
    if not (np.all(np.isfinite(new[1])) and np.all(np.isfinite(new[3]))):
        raise NumericalDivergence("state became non-finite")
    if np.linalg.norm(new[1]) > V_LIMIT or np.linalg.norm(new[3]) > W_LIMIT:
        raise NumericalDivergence("velocity or angular rate exceeded safety bounds")
    return RigidBodyState(*new)


@dataclass
class TrajectorySpec:
    kind: str = "hover"
    l0: float = 1.0
    tc: float = 10.0
    h0: float = 1.0
    roll: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if self.kind not in ("hover", "circle", "figure8"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not self.tc > 0 or self.l0 < 0:
            raise ValueError("need tc > 0 and l0 >= 0")

    @property
    def attitude(self) -> np.ndarray:
        return rot_z(self.yaw) @ rot_x(self.roll)

    def reference(self, t: float) -> Reference:
        w = 2.0 * math.pi / self.tc
        l0, h0 = self.l0, self.h0
        s, c = math.sin(w * t), math.cos(w * t)
        if self.kind == "hover":
            p, v, a = np.array([0.0, 0.0, h0]), np.zeros(3), np.zeros(3)
        elif self.kind == "circle":
            p = np.array([l0 * c, l0 * s, h0])
            v = np.array([-l0 * w * s, l0 * w * c, 0.0])
            a = np.array([-l0 * w * w * c, -l0 * w * w * s, 0.0])
        else:
            s2, c2 = math.sin(2 * w * t), math.cos(2 * w * t)
            p = np.array([0.5 * l0 * s2, l0 * s, h0 - l0 / 3.0 * s])
            v = np.array([l0 * w * c2, l0 * w * c, -l0 / 3.0 * w * c])
            a = np.array([-2.0 * l0 * w * w * s2, -l0 * w * w * s, l0 / 3.0 * w * w * s])
        return Reference(p, v, a, self.attitude, np.zeros(3))

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, obj) -> "TrajectorySpec":
        known = {"kind", "l0", "tc", "h0", "roll", "yaw"}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class SimLog:
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    ref_p: np.ndarray
    ref_R: np.ndarray
    cmd_R: np.ndarray
    wrench: np.ndarray
    u: np.ndarray
    min_margin: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def quat(self) -> np.ndarray:
        """Scalar-first unit quaternions."""
        q = Rotation.from_matrix(self.R).as_quat()
        return np.hstack([q[:, 3:], q[:, :3]])

    @property
    def pos_error(self) -> np.ndarray:
        return np.linalg.norm(self.p - self.ref_p, axis=1)

    @property
    def att_error_deg(self) -> np.ndarray:
        """Angle between the attitude and the trajectory's target attitude."""
        return np.degrees([rotation_angle(Rd.T @ R) for Rd, R in zip(self.ref_R, self.R)])

    @property
    def cmd_error_deg(self) -> np.ndarray:
        """Angle to the attitude the controller actually commanded."""
        return np.degrees([rotation_angle(Rd.T @ R) for Rd, R in zip(self.cmd_R, self.R)])

    def euler_deg(self) -> np.ndarray:
        """(yaw, pitch, roll) in degrees, intrinsic z-y'-x''."""
        return Rotation.from_matrix(self.R).as_euler("ZYX", degrees=True)

    def summary(self, settle: float | None = None) -> dict:
        settle = self.t[-1] / 2.0 if settle is None else settle
        late = self.t >= settle
        ang = self.att_error_deg
        pe = self.pos_error
        return {
            "rms_pos_error": float(np.sqrt(np.mean(pe**2))),
            "final_pos_error": float(pe[-1]),
            "max_att_error_deg": float(ang.max()),
            "steady_max_att_error_deg": float(ang[late].max()),
            "steady_rms_pos_error": float(np.sqrt(np.mean(pe[late] ** 2))),
            "settle_time": float(settle),
        }

    def write_csv(self, path) -> None:
        quat = self.quat
        ang = self.att_error_deg
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz",
                        "ref_px", "ref_py", "ref_pz", "err_ang_deg", "u_min", "u_max_used", "min_margin"])
            for i in range(len(self.t)):
                w.writerow([repr(float(self.t[i])), *map(repr, map(float, self.p[i])), *map(repr, map(float, self.v[i])),
                            *map(repr, map(float, quat[i])), *map(repr, map(float, self.omega[i])),
                            *map(repr, map(float, self.ref_p[i])), repr(float(ang[i])),
                            repr(float(self.u[i].min())), repr(float(self.u[i].max())), repr(float(self.min_margin[i]))])


def run(graph: AssemblyGraph, alpha, params: ModuleParams, gains: ControllerGains | None = None,
        traj: TrajectorySpec | None = None, duration: float = 10.0, dt: float = 1e-3,
        initial: RigidBodyState | None = None, log_every: int = 1, allocation: str = "box") -> SimLog:
    """Fly the rigid assembly under the tracking controller at rate ``1/dt``."""
    traj = traj or TrajectorySpec()
    pose = propagate_poses(graph, alpha, params)
    A = actuation_matrix(pose, params)
    inertia = assembly_inertia(pose, params)
    J_inv = inertia.J_inv
    gains = gains or ControllerGains.default(inertia)
    structure = ActuationStructure.from_matrix(A)
    allocator = Allocator(A, gains.delta, params.u_max, allocation)
    margin = clearance_constraints(pose, params).min_margin

    if initial is None:
        ref0 = traj.reference(0.0)
        initial = RigidBodyState(ref0.p.copy(), ref0.v.copy(), ref0.R.copy(), np.zeros(3))
    state = initial
    steps = int(round(duration / dt))
    rows = {k: [] for k in ("t", "p", "v", "R", "omega", "ref_p", "ref_R", "cmd_R", "wrench", "u", "margin")}
    for k in range(steps + 1):
        t = k * dt
        ref = traj.reference(t)
        W_d, R_d = control_wrench(state, ref, gains, inertia, params.g, structure)
        u = allocator(W_d)
        if k % log_every == 0:
            for key, val in (("t", t), ("p", state.p), ("v", state.v), ("R", state.R), ("omega", state.omega),
                             ("ref_p", ref.p), ("ref_R", ref.R), ("cmd_R", R_d), ("wrench", W_d), ("u", u),
                             ("margin", margin)):
                rows[key].append(val)
        if k == steps:
            break
        state = step(state, u, inertia, A, dt, params.g, J_inv)
    arr = {k: np.array(v) for k, v in rows.items()}
    return SimLog(arr["t"], arr["p"], arr["v"], arr["R"], arr["omega"], arr["ref_p"], arr["ref_R"], arr["cmd_R"],
                  arr["wrench"], arr["u"], arr["margin"],
                  meta={"n": graph.n, "dt": dt, "duration": duration, "rank": structure.rank, "traj": traj.to_json()})
