"""Module poses, rotor layout and the actuation matrix of an assembly."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .graph import CONNECTOR_DIR, AssemblyGraph, check_alpha

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ModuleParams:
    """Physical constants of one quadrotor module (SI units).

    ``u_max`` is the squared rotor speed limit.  When omitted it defaults to
    ``2 m g / (4 c_f)`` times a safety factor of 2, i.e. a thrust-to-weight
    ratio of 4 per module.
    """

    m: float = 0.24
    c_f: float = 3.87e-7
    c_m: float = 1.06e-8
    l_arm: float = 0.06
    l_c: float = 0.11
    r: float = 0.095
    u_max: float | None = None
    g: float = 9.81

    def __post_init__(self):
        if self.u_max is None:
            object.__setattr__(self, "u_max", 2.0 * (2.0 * self.m * self.g) / (4.0 * self.c_f))
        for k, v in asdict(self).items():
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"parameter {k} must be positive and finite, got {v!r}")

    @property
    def hover_input(self) -> float:
        """Per-rotor squared speed that holds one level module aloft."""
        return self.m * self.g / (4.0 * self.c_f)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj) -> "ModuleParams":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: float(v) for k, v in obj.items() if k in known and v is not None})

    @classmethod
    def load(cls, path) -> "ModuleParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def with_(self, **kw) -> "ModuleParams":
        return replace(self, **kw)


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


# X layout: front-right, back-right, back-left, front-left
ROTOR_DIRS = np.array([[1.0, -1.0, 0.0], [-1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]) / math.sqrt(2.0)
SPIN_SIGNS = np.array([(-1.0) ** q for q in (1, 2, 3, 4)])


@dataclass
class AssemblyPose:
    positions: np.ndarray  # (n, 3), COM-centred
    rotations: np.ndarray  # (n, 3, 3)
    rotor_positions: np.ndarray  # (4n, 3)
    com: np.ndarray  # pre-centring COM
    total_mass: float
    spin_signs: np.ndarray = field(default_factory=lambda: np.tile(SPIN_SIGNS, 1))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def normals(self) -> np.ndarray:
        """Body z-axes of all modules in the assembly frame."""
        return self.rotations[:, :, 2]


def _chain(graph: AssemblyGraph, alpha: np.ndarray, l_c: float, with_derivs: bool):
    n = graph.n
    R = np.empty((n, 3, 3))
    p = np.zeros((n, 3))
    R[0] = rot_x(alpha[0]) @ rot_y(alpha[1])
    dR = dp = None
    if with_derivs:
        dR = np.zeros((n, n + 1, 3, 3))
        dp = np.zeros((n, n + 1, 3))
        dR[0, 0] = _drot_x(alpha[0]) @ rot_y(alpha[1])
        dR[0, 1] = rot_x(alpha[0]) @ _drot_y(alpha[1])
    for k, e in enumerate(graph.edges):
        j = k + 2
        a = alpha[j]
        if e.hinge_axis == "x":
            H, dH = rot_x(a), (_drot_x(a) if with_derivs else None)
        else:
            H, dH = rot_y(a), (_drot_y(a) if with_derivs else None)
        t = CONNECTOR_DIR[e.cp]
        R[e.child] = R[e.parent] @ H
        p[e.child] = p[e.parent] + l_c * (R[e.parent] @ t) + l_c * (R[e.child] @ t)
        if with_derivs:
            dR[e.child] = dR[e.parent] @ H
            dR[e.child, j] += R[e.parent] @ dH
            dp[e.child] = dp[e.parent] + l_c * ((dR[e.parent] + dR[e.child]) @ t)
    return R, p, dR, dp


def propagate_poses(graph: AssemblyGraph, alpha, params: ModuleParams) -> AssemblyPose:
    """World poses of all modules, shifted so the assembly COM is the origin."""
    alpha = check_alpha(graph, alpha)
    R, p, _, _ = _chain(graph, alpha, params.l_c, with_derivs=False)
    com = p.mean(axis=0)
    o = p - com
    rotors = rotor_layout(o, R, params)
    return AssemblyPose(o, R, rotors, com, graph.n * params.m, np.tile(SPIN_SIGNS, graph.n))


def rotor_layout(positions, rotations, params: ModuleParams) -> np.ndarray:
    """Rotor centres ``o_i + R_i rho_q``, ordered module-major then rotor 1..4."""
    positions = np.atleast_2d(positions)
    rotations = np.asarray(rotations).reshape(-1, 3, 3)
    offsets = params.l_arm * ROTOR_DIRS  # (4, 3)
    pts = positions[:, None, :] + np.einsum("nij,qj->nqi", rotations, offsets)
    return pts.reshape(-1, 3)


def actuation_matrix(pose: AssemblyPose, params: ModuleParams) -> np.ndarray:
    """6 x 4n map from squared rotor speeds to the assembly wrench about its COM."""
    z = np.repeat(pose.normals, 4, axis=0)  # (4n, 3)
    signs = np.tile(SPIN_SIGNS, pose.n)
    force = params.c_f * z
    torque = params.c_f * np.cross(pose.rotor_positions, z) + params.c_m * signs[:, None] * z
    return np.vstack([force.T, torque.T])


def actuation_matrix_at(graph: AssemblyGraph, alpha, params: ModuleParams) -> np.ndarray:
    return actuation_matrix(propagate_poses(graph, alpha, params), params)


def pose_jacobian(graph: AssemblyGraph, alpha, params: ModuleParams):
    """Pose with derivatives of COM-centred positions and rotations.

    Returns ``(pose, dR, do)`` with ``dR[i, j] = dR_i/dalpha_j`` (n, n+1, 3, 3)
    and ``do[i, j] = do_i/dalpha_j`` (n, n+1, 3).
    """
    alpha = check_alpha(graph, alpha)
    R, p, dR, dp = _chain(graph, alpha, params.l_c, with_derivs=True)
    com = p.mean(axis=0)
    o = p - com
    do = dp - dp.mean(axis=0, keepdims=True)
    pose = AssemblyPose(o, R, rotor_layout(o, R, params), com, graph.n * params.m, np.tile(SPIN_SIGNS, graph.n))
    return pose, dR, do


def actuation_jacobian(graph: AssemblyGraph, alpha, params: ModuleParams, pose_derivs=None) -> np.ndarray:
    """Exact derivative of the actuation matrix, shape (6, 4n, n+1)."""
    pose, dR, do = pose_derivs if pose_derivs is not None else pose_jacobian(graph, alpha, params)
    n = graph.n
    offsets = params.l_arm * ROTOR_DIRS
    z = pose.normals  # (n, 3)
    dz = dR[:, :, :, 2]  # (n, n+1, 3)
    rotor = pose.rotor_positions.reshape(n, 4, 3)
    drotor = do[:, None, :, :] + np.einsum("nmij,qj->nqmi", dR, offsets)  # (n, 4, n+1, 3)
    zq = np.broadcast_to(z[:, None, None, :], drotor.shape)
    dzq = np.broadcast_to(dz[:, None, :, :], drotor.shape)
    dforce = params.c_f * dzq
    dtorque = params.c_f * (np.cross(drotor, zq) + np.cross(rotor[:, :, None, :], dzq))
    dtorque = dtorque + params.c_m * SPIN_SIGNS[None, :, None, None] * dzq
    out = np.concatenate([dforce, dtorque], axis=-1)  # (n, 4, n+1, 6)
    return out.reshape(4 * n, n + 1, 6).transpose(2, 0, 1)
