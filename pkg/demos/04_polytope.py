"""
Zero-torque force polytope
==========================

For fixed angles, the forces an assembly can produce without any net
torque form a convex set. Its support value along a direction is one
linear program; sweeping an icosphere traces the whole shape.
"""

from pathlib import Path

import numpy as np

from modasm.graph import extract_graph
from modasm.kinematics import ModuleParams, actuation_matrix_at
from modasm.lattice import LatticeConfig, attach
from modasm.polytope import force_polytope, icosphere, membership, support_in_direction

params = ModuleParams()
domino = extract_graph(attach(LatticeConfig.single(), (1, 0)))
A = actuation_matrix_at(domino, np.radians([-22.5, 0.0, 45.0]), params)
weight = 2 * params.m * params.g

# Straight up the assembly lifts four times its weight; sideways much less.
for d in ([0, 0, 1], [0, 1, 0], [1, 0, 0], [0, 0.1, 1]):
    print(d, round(support_in_direction(A, d, params.u_max), 3))

# Membership with a scale margin: how far past the target could we push?
hover = np.array([0, 0, weight, 0, 0, 0])
for fy in (0.36, 2.0, 5.0):
    ok, gamma, _ = membership(A, np.array([0, fy, weight, 0, 0, 0]), params.u_max, hover)
    print(fy, ok, round(gamma, 2))

# Both hinges of the domino turn about x, so every zero-torque force lies in
# the y-z plane: the set is flat. Sweep directions within that plane.
theta = np.linspace(0.0, 2.0 * np.pi, 73)
plane = np.column_stack([np.zeros_like(theta), np.sin(theta), np.cos(theta)])
flat = force_polytope(A, params.u_max, plane, weight=weight)
print(flat.points[:, 1].min().round(3), flat.points[:, 1].max().round(3))

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
flat.write_csv(out / "polytope_yz.csv")

# The full sphere sweep finds support only straight up.
poly = force_polytope(A, params.u_max, icosphere(2), weight=weight)
print(len(poly.support), int((poly.support > 1e-9).sum()))
