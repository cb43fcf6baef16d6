"""
Choosing an assembly for a task
===============================

A task is a set of wrenches the assembly must be able to produce. For
each candidate shape the hinge angles and rotor inputs are optimized
together; the smallest module count with a feasible shape wins, and
within it the cheapest shape.

The two-module case runs in seconds. The four-module section solves all
seven shapes in every yaw and takes several minutes on one core.
"""

import sys

import numpy as np

from modasm.kinematics import ModuleParams
from modasm.lattice import enumerate_levels
from modasm.optimizer import SolverOptions, force_task, select_across

params = ModuleParams()

# Hold +-0.36 N sideways while hovering. One module cannot do it at all.
toy = force_task([[0.0, 0.36, 0.0], [0.0, -0.36, 0.0]], 2)
outcome = select_across(enumerate_levels(2), toy, params)
print(outcome.message, outcome.n)
print(np.degrees(outcome.alpha).round(2))
for row in outcome.table:
    print(row["n"], row["feasible"], f"{row['eq_residual']:.2e}")

if "--four" not in sys.argv:
    print("pass --four to run the four-module selection")
    sys.exit(0)

# Push half the weight along x or along y, in units of n m g.
task = force_task([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]], 4, params, scaled=True)
four = select_across({4: enumerate_levels(4)[4]}, task, params, SolverOptions())
for row in four.table:
    print(row["index"], row["feasible"], f"{row['cost']:.3e}", f"{row['eq_residual']:.1e}")
print(four.index, np.degrees(four.alpha).round(1))
print(four.config.render())
