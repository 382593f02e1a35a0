"""Discrete optimal control of parabolic differential inclusions.

Grids and grid functions live in :mod:`.grid`, convex sets and the simplex
core in :mod:`.convex`, set-valued maps in :mod:`.maps`, forward and backward
solvers in :mod:`.dynamics` and :mod:`.adjoint`, solvers in :mod:`.optimizer`
and a posteriori certificates in :mod:`.certificate`.
"""

from .adjoint import (adjoint_residual, adjoint_solve_linear, sbp_boundary_terms, sbp_terms,
                      stencil_identity_check, stencil_identity_residuals)
from .certificate import (Certificate, Tolerances, check_adjoint_conditions,
                          check_maximum_principle, check_polyhedral_conditions,
                          sufficiency_sampling)
from .convex import (Box, ExtReal, FiniteSet, LpProblem, Polytope, Singleton, lp_feasible_nonneg,
                     lp_solve, project, support)
from .dynamics import ControlField, cfl_margin, check_feasible, simulate
from .grid import BoundaryData, Field, GridSpec
from .maps import (Constant, GTransform, LamResult, LinearControl, Polyhedral, argmax_select,
                   g_forward, g_hamiltonian, g_lam_from_f, hamiltonian, lam, member)
from .objectives import Linear, PolyhedralMax, Quadratic, objective_value
from .optimizer import (Problem, SolveResult, adjoint_gradient, brute_force, solve_frank_wolfe,
                        solve_polyhedral_lp)
from .report import VerifyReport

__version__ = "0.1.0"
