"""
Mach 800 jet and mirror symmetry
================================

A dense, very fast jet enters through a narrow slot in the bottom wall of a
strongly magnetised box.  The setup is symmetric about x = 0, and nothing in
the update prefers left over right, so the density should stay mirror
symmetric to round-off.  The default grid is coarse to keep the run short.
"""

import sys

import numpy as np

from posdiv_cdg.physics import RHO
from posdiv_cdg.problems import init_problem
from posdiv_cdg.solver import Discretization, SolverOptions, advance, cell_average_conserved, initial_state

nx = int(sys.argv[1]) if len(sys.argv) > 1 else 40
t_end = float(sys.argv[2]) if len(sys.argv) > 2 else 2e-4

disc = Discretization(init_problem("jet_m800"), nx, 3 * nx // 2, SolverOptions())
state = advance(disc, initial_state(disc), t_end)

rho = cell_average_conserved(disc, state)[RHO]
asym = np.max(np.abs(rho - rho[::-1])) / np.max(rho)
print(f"{state.step} steps to t={state.t:g}; density range {rho.min():.3g}..{rho.max():.3g}")
print(f"relative mirror asymmetry of the density: {asym:.1e}")
