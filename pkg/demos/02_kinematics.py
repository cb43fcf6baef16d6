"""
Hinged assemblies and their actuation matrix
============================================

Each connection is a hinge. Folding it tilts the rotor planes, which
is what lets an assembly push sideways without rolling the whole body.
"""

import numpy as np

from modasm.downwash import clearance_constraints
from modasm.graph import extract_graph
from modasm.kinematics import ModuleParams, actuation_matrix, propagate_poses
from modasm.lattice import LatticeConfig, attach

params = ModuleParams()
domino = extract_graph(attach(LatticeConfig.single(), (1, 0)))
print(domino.edges)

# Flat: both modules level, 0.22 m apart, four independent wrench directions.
flat = propagate_poses(domino, np.zeros(3), params)
A = actuation_matrix(flat, params)
print(np.linalg.norm(flat.positions[1] - flat.positions[0]))
print(np.linalg.matrix_rank(A))

# Roll the root and open the hinge: the normals split, lateral force appears.
alpha = np.radians([-22.0, 0.0, 44.0])
tilted = propagate_poses(domino, alpha, params)
A = actuation_matrix(tilted, params)
print(tilted.normals.round(3))
print(np.linalg.matrix_rank(A))

# Hover inputs as a regularized least-squares allocation.
hover = np.array([0, 0, 2 * params.m * params.g, 0, 0, 0])
u = np.linalg.lstsq(A, hover, rcond=None)[0]
print((u / params.u_max).round(3))

# Downwash clearance: positive margin means the rotor columns miss each other.
print(clearance_constraints(tilted, params).min_margin)
folded_in = propagate_poses(domino, -alpha, params)
print(clearance_constraints(folded_in, params).min_margin)
