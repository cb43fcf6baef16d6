"""Geometric SE(3) tracking controller and regularized control allocation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .kinematics import AssemblyPose, ModuleParams

E3 = np.array([0.0, 0.0, 1.0])


def hat(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def rotation_error(R, R_d) -> np.ndarray:
    return 0.5 * vee(R_d.T @ R - R.T @ R_d)


def angular_velocity_error(R, omega, R_d, omega_d) -> np.ndarray:
    return np.asarray(omega) - R.T @ R_d @ np.asarray(omega_d)


def rotation_angle(R) -> float:
    """Angle of a rotation matrix in radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def axis_angle(axis, angle) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = hat(k)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * K @ K


def align(u, v) -> np.ndarray:
    """Smallest rotation taking unit vector ``u`` onto unit vector ``v``."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(u @ v)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        perp = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(u, [0.0, 1.0, 0.0])
        return axis_angle(perp, math.pi)
    return axis_angle(axis, math.atan2(s, c))


@dataclass
class AssemblyInertia:
    mass: float
    J: np.ndarray

    @property
    def J_inv(self) -> np.ndarray:
        return np.linalg.inv(self.J)


def assembly_inertia(pose: AssemblyPose, params: ModuleParams) -> AssemblyInertia:
    """Point masses at the module centres plus a flat disk per module."""
    m = params.m
    J = np.zeros((3, 3))
    disk = m * params.l_arm**2 * np.diag([0.25, 0.25, 0.5])
    for o, R in zip(pose.positions, pose.rotations):
        J += m * ((o @ o) * np.eye(3) - np.outer(o, o))
        J += R @ disk @ R.T
    return AssemblyInertia(pose.n * m, 0.5 * (J + J.T))


@dataclass
class ControllerGains:
    K_P: np.ndarray
    K_D: np.ndarray
    K_R: np.ndarray
    K_w: np.ndarray
    delta: float = 1e-6

    def __post_init__(self):
        for name in ("K_P", "K_D", "K_R", "K_w"):
            v = np.asarray(getattr(self, name), dtype=float)
            v = np.diag(v) if v.ndim == 2 else np.broadcast_to(v, (3,)).copy()
            if np.any(v <= 0):
                raise ValueError(f"{name} must be positive")
            setattr(self, name, v)
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @classmethod
    def default(cls, inertia: AssemblyInertia) -> "ControllerGains":
        tr = float(np.trace(inertia.J))
        return cls(
            K_P=np.full(3, 6.0 * inertia.mass),
            K_D=np.full(3, 4.0 * inertia.mass),
            K_R=np.full(3, 0.9 * tr),
            K_w=np.full(3, 0.25 * tr),
        )

    def to_json(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("K_P", "K_D", "K_R", "K_w")} | {"delta": self.delta}

    @classmethod
    def from_json(cls, obj, inertia: AssemblyInertia | None = None) -> "ControllerGains":
        base = cls.default(inertia).to_json() if inertia is not None else {}
        base.update(obj)
        return cls(**{k: base[k] for k in ("K_P", "K_D", "K_R", "K_w", "delta") if k in base})

    @classmethod
    def load(cls, path, inertia: AssemblyInertia | None = None) -> "ControllerGains":
        with open(path) as fh:
            return cls.from_json(json.load(fh), inertia)


@dataclass
class Reference:
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    R: np.ndarray
    omega: np.ndarray


@dataclass
class ActuationStructure:
    """What the assembly can push in its own frame.

    ``rank`` of the actuation matrix; ``thrust_dir`` the body direction of
    the hover force; ``missing`` the unreachable body force direction when
    exactly one wrench direction is lost.
    """

    rank: int
    thrust_dir: np.ndarray
    missing: np.ndarray | None

    @classmethod
    def from_matrix(cls, A, tol: float = 1e-6) -> "ActuationStructure":
        A = np.asarray(A, dtype=float)
        U, s, _ = np.linalg.svd(A)
        rank = int(np.sum(s > tol * s[0]))
        f = A[:3].sum(axis=1)
        thrust = f / np.linalg.norm(f) if np.linalg.norm(f) > 0 else E3.copy()
        missing = None
        if rank == 5:
            nf = U[:3, 5]
            if np.linalg.norm(nf) > 1e-6:
                missing = nf / np.linalg.norm(nf)
        return cls(rank, thrust, missing)


def desired_attitude(F_world, R_ref, structure: ActuationStructure | None) -> np.ndarray:
    """Target attitude that lets an underactuated assembly realize ``F_world``."""
    if structure is None or structure.rank >= 6 or np.linalg.norm(F_world) < 1e-9:
        return R_ref
    if structure.rank == 5 and structure.missing is not None:
        n_b = structure.missing
        h = structure.thrust_dir - (structure.thrust_dir @ n_b) * n_b
        if np.linalg.norm(h) > 1e-9:
            h = h / np.linalg.norm(h)
            f = R_ref.T @ F_world
            theta = math.atan2(-(n_b @ f), h @ f)
            return R_ref @ axis_angle(np.cross(n_b, h), theta)
    return align(R_ref @ structure.thrust_dir, F_world) @ R_ref


def control_wrench(state, ref: Reference, gains: ControllerGains, inertia: AssemblyInertia,
                   g: float = 9.81, structure: ActuationStructure | None = None):
    """Desired body-frame wrench ``[F_d, tau_d]`` and the attitude target used."""
    p, v, R, omega = state.p, state.v, state.R, state.omega
    F_world = gains.K_P * (ref.p - p) + gains.K_D * (ref.v - v) + inertia.mass * ref.a + inertia.mass * g * E3
    R_d = desired_attitude(F_world, ref.R, structure)
    omega_d = ref.omega if R_d is ref.R else np.zeros(3)
    e_R = rotation_error(R, R_d)
    e_w = angular_velocity_error(R, omega, R_d, omega_d)
    tau = -gains.K_R * e_R - gains.K_w * e_w + np.cross(omega, inertia.J @ omega)
    return np.concatenate([R.T @ F_world, tau]), R_d


def regularized_inverse(A, W_d, delta: float) -> np.ndarray:
    """Minimizer of ``|A u - W_d|^2 + delta |u|^2``, i.e. ``A^T (A A^T + delta I)^-1 W_d``."""
    A = np.asarray(A, dtype=float)
    return A.T @ np.linalg.solve(A @ A.T + delta * np.eye(A.shape[0]), np.asarray(W_d, dtype=float))


def allocate(A, W_d, delta: float, u_max: float) -> np.ndarray:
    """Regularized right inverse clamped to the input box ``[0, u_max]``."""
    return np.clip(regularized_inverse(A, W_d, delta), 0.0, u_max)


class Allocator:
    """Precomputed allocation on inputs normalized by ``u_max``.

    ``delta`` then regularizes a matrix whose entries are in newtons per
    unit input, which keeps its default meaningful across modules.

    ``mode="clamp"`` applies the closed-form right inverse and clips.
    ``mode="box"`` (default) returns the same point when it already lies in
    the box and otherwise minimizes ``|A u - W|^2 + delta |u|^2`` over the
    box, so saturation does not silently distort the wrench.  Tilted
    assemblies often need it: their minimum-norm hover input has negative
    entries even when a nonnegative one exists.
    """

    def __init__(self, A, delta: float, u_max: float, mode: str = "box"):
        if mode not in ("box", "clamp"):
            raise ValueError(f"unknown allocation mode {mode!r}")
        self.A = np.asarray(A, dtype=float)
        self.u_max = u_max
        self.mode = mode
        As = self.A * u_max
        self.gain = As.T @ np.linalg.inv(As @ As.T + delta * np.eye(As.shape[0]))
        self._stacked = np.vstack([As, math.sqrt(delta) * np.eye(As.shape[1])])

    def __call__(self, W_d) -> np.ndarray:
        x = self.gain @ W_d
        if self.mode == "box" and (x.min() < 0.0 or x.max() > 1.0):
            rhs = np.concatenate([W_d, np.zeros(self.A.shape[1])])
            x = lsq_linear(self._stacked, rhs, bounds=(0.0, 1.0), method="bvls").x
        return np.clip(x, 0.0, 1.0) * self.u_max
