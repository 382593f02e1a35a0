"""Solvers for the discrete optimal control problem.

* :func:`solve_frank_wolfe` for ``F(u) = A u + B U``: the linear minimization
  oracle is the pointwise maximization of ``<B w, u*>`` over ``U``.
* :func:`solve_polyhedral_lp` for ``F(u) = {v : A u - B v <= d}`` with a linear
  or max-affine integrand: the whole problem is one LP, and its duals give
  the multiplier field ``q``.
* :func:`brute_force` enumerates a finite control alphabet; an oracle for tests.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .adjoint import adjoint_solve_linear
from .convex import Box, FiniteSet, LpProblem, Singleton, lp_solve, project, support
from .dynamics import (CflWarning, ControlField, cfl_margin, simulate, simulate_batch)
from .errors import CapabilityError, InfeasibleError, UnboundedError
from .grid import BoundaryData, Field, GridSpec, laplacian_interior, velocity, write_boundary
from .maps import InclusionMap, LinearControl, Polyhedral
from .objectives import Linear, Objective, PolyhedralMax, objective_mask, objective_value

#: Largest dense LP (rows x columns of the split-variable tableau) accepted.
LP_CELL_LIMIT = 4_000_000
#: Largest enumeration accepted by :func:`brute_force`.
BRUTE_FORCE_LIMIT = 10**7
BRUTE_FORCE_MAX_POINTS = 4
BATCH = 4096


@dataclass
class Problem:
    spec: GridSpec
    F: InclusionMap
    g: Objective
    b: BoundaryData

    def __post_init__(self):
        self.b.check_shapes(self.spec)
        if self.F.n != self.spec.n:
            raise ValueError(f"map acts on R^{self.F.n}, grid carries R^{self.spec.n}")

    @property
    def control_dim(self) -> int:
        return self.F.r if isinstance(self.F, LinearControl) else self.spec.n


@dataclass
class SolveResult:
    control: ControlField
    state: Field
    objective: float
    iterations: int
    gap: float
    warnings: list = field(default_factory=list)
    ustar: Field | None = None
    q: np.ndarray | None = None
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"objective": self.objective, "iterations": self.iterations, "gap": self.gap}


def _cfl_warnings(spec):
    m = cfl_margin(spec)
    return [f"CFL margin {m:.17g} is negative; the explicit step is unstable"] if m < 0 else []


def _simulate_quiet(problem: Problem, w: ControlField) -> Field:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CflWarning)
        return simulate(problem.F, problem.b, w, problem.spec)


# ---------------------------------------------------------------------------
# adjoint gradient and Frank-Wolfe


def _adjoint_pass(problem: Problem, w: ControlField):
    F = problem.F
    if not isinstance(F, LinearControl):
        raise CapabilityError("adjoint gradients need a LinearControl map")
    s = problem.spec
    state = _simulate_quiet(problem, w)
    ustar = adjoint_solve_linear(F.A, problem.g.gradient(state.values), s)
    grad = -s.cell_volume * (ustar.values[:-1, 1:-1, 1:-1] @ F.B)
    return state, ustar, grad


def adjoint_gradient(problem: Problem, w: ControlField) -> np.ndarray:
    """Gradient of the cost with respect to every control value.

    Shape ``(nt-1, ny-2, nx-2, r)``; equals ``-delta*sigma*h * B^T u*`` pointwise.
    """
    return _adjoint_pass(problem, w)[2]


def _lmo(U, dirs):
    """Pointwise maximizer of ``<w, dir>`` over ``U``."""
    if hasattr(U, "support_many"):
        return U.support_many(dirs)
    flat = dirs.reshape(-1, dirs.shape[-1])
    out = np.empty_like(flat)
    for i, d in enumerate(flat):
        s = support(U, d)
        if s.value.infinite:
            raise UnboundedError("control set is unbounded in an oracle direction")
        out[i] = s.maximizer
    return out.reshape(dirs.shape)


def start_control(U, spec) -> ControlField:
    """Constant admissible control: the projection of 0 onto ``U`` when available."""
    if isinstance(U, (Box, Singleton)):
        w0 = project(U, np.zeros(U.dim))
    else:
        s = support(U, np.zeros(U.dim))
        w0 = s.maximizer
    return ControlField.constant(spec, w0)


def solve_frank_wolfe(problem: Problem, max_iters: int = 500, gap_tol: float = 1e-6,
                      w0: ControlField | None = None) -> SolveResult:
    """Conditional gradient with step ``2/(k+2)``; stops once the FW gap is ``<= gap_tol``."""
    F = problem.F
    if not isinstance(F, LinearControl):
        raise CapabilityError(f"Frank-Wolfe needs a LinearControl map, got {type(F).__name__}")
    if isinstance(F.U, FiniteSet):
        raise CapabilityError("Frank-Wolfe needs a convex control set, not a finite alphabet")
    w = w0.copy() if w0 is not None else start_control(F.U, problem.spec)
    history = []
    it = 0
    while True:
        state, ustar, grad = _adjoint_pass(problem, w)
        what = _lmo(F.U, ustar.values[:-1, 1:-1, 1:-1] @ F.B)
        gap = math.fsum((grad * (w.values - what)).ravel().tolist())
        J = objective_value(problem.g, state)
        history.append((J, gap))
        if gap <= gap_tol or it >= max_iters:
            break
        gamma = 2.0 / (it + 2.0)
        w = ControlField(problem.spec, w.values + gamma * (what - w.values))
        it += 1
    return SolveResult(w, state, J, it, gap, _cfl_warnings(problem.spec), ustar,
                       history=history)


# ---------------------------------------------------------------------------
# monolithic LP for polyhedral maps


def _state_from_x(spec, b, x):
    u = np.zeros(spec.shape)
    write_boundary(u, b)
    u[1:, 1:-1, 1:-1] = x.reshape(spec.nt - 1, spec.ny - 2, spec.nx - 2, spec.n)
    return u


def _constraint_values(F: Polyhedral, u: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``A u_k - B v_k`` at control points, shape ``(nt-1, ny-2, nx-2, s)``."""
    vel = (u[1:, 1:-1, 1:-1] - u[:-1, 1:-1, 1:-1]) / spec.h \
        - laplacian_interior(u[:-1], spec.delta, spec.sigma)
    return u[:-1, 1:-1, 1:-1] @ F.A.T - vel @ F.B.T


def solve_polyhedral_lp(problem: Problem) -> SolveResult:
    """Solve the whole problem as one LP and return state, velocity and multipliers.

    The multiplier field ``q`` (shape ``(nt, ny, nx, s)``, zero off the
    control points) is the LP dual of the inclusion rows divided by
    ``delta*sigma*h``.  The adjoint is ``u* = -B^T q``.
    """
    F, g, spec, b = problem.F, problem.g, problem.spec, problem.b
    if not isinstance(F, Polyhedral):
        raise CapabilityError(f"the LP route needs a Polyhedral map, got {type(F).__name__}")
    if not isinstance(g, (Linear, PolyhedralMax)):
        raise CapabilityError(f"the LP route needs a linear or max-affine objective, "
                              f"got {type(g).__name__}")
    npts = (spec.nt - 1) * (spec.ny - 2) * (spec.nx - 2)
    nu = npts * spec.n
    nz = npts if isinstance(g, PolyhedralMax) else 0
    nrows = npts * F.s + (npts * g.a.shape[0] if nz else 0)
    cells = nrows * (2 * (nu + nz) + nrows)
    if cells > LP_CELL_LIMIT:
        raise CapabilityError(f"LP with {nrows} rows and {nu + nz} variables "
                              f"({cells} tableau cells) exceeds the limit {LP_CELL_LIMIT}")

    # the inclusion rows are affine in x; assemble them column by column
    zero = _state_from_x(spec, b, np.zeros(nu))
    c0 = _constraint_values(F, zero, spec).ravel()
    cols = np.empty((c0.size, nu))
    for j in range(nu):
        e = np.zeros(nu)
        e[j] = 1.0
        cols[:, j] = _constraint_values(F, _state_from_x(spec, b, e), spec).ravel() - c0
    d_rows = np.tile(F.d, npts)
    M_inc = np.hstack([cols, np.zeros((c0.size, nz))])
    e_inc = d_rows - c0

    dsh = spec.cell_volume
    if isinstance(g, Linear):
        cvals = np.broadcast_to(g.c, spec.shape)[1:, 1:-1, 1:-1].ravel()
        c = -dsh * cvals
        M, e = M_inc, e_inc
    else:
        m = g.a.shape[0]
        c = np.concatenate([np.zeros(nu), -dsh * np.ones(nz)])
        # a_i . u_p - z_p <= -b_i
        M_epi = np.zeros((npts * m, nu + nz))
        for p in range(npts):
            M_epi[p * m:(p + 1) * m, p * spec.n:(p + 1) * spec.n] = g.a
            M_epi[p * m:(p + 1) * m, nu + p] = -1.0
        M = np.vstack([M_inc, M_epi])
        e = np.concatenate([e_inc, np.tile(-g.b, npts)])

    res = lp_solve(LpProblem(c, M, e))
    if res.status == "infeasible":
        raise InfeasibleError(f"no state satisfies the inclusion with this boundary data "
                              f"(phase-one infeasibility {res.infeasibility:.3e})")
    if res.status == "unbounded":
        raise UnboundedError("the cost is unbounded below over feasible states")

    u = _state_from_x(spec, b, res.x[:nu])
    state = Field(spec, u)
    y = res.duals[:c0.size].reshape(spec.nt - 1, spec.ny - 2, spec.nx - 2, F.s)
    q = np.zeros((spec.nt, spec.ny, spec.nx, F.s))
    q[:-1, 1:-1, 1:-1] = y / dsh
    ustar = Field(spec, -(q @ F.B))
    control = ControlField(spec, velocity(state))
    return SolveResult(control, state, objective_value(g, state), 1, 0.0,
                       _cfl_warnings(spec), ustar, q)


# ---------------------------------------------------------------------------
# enumeration oracle


def brute_force(problem: Problem, alphabet: FiniteSet) -> SolveResult:
    """Exact minimizer over controls taking values in a finite alphabet.

    The first minimizing assignment in enumeration order wins (points in
    ``(t, y, x)`` order, alphabet in its given order, last point fastest).
    Letters outside a control set ``U`` are dropped; for polyhedral maps
    assignments leaving ``F`` are skipped.
    """
    spec, F = problem.spec, problem.F
    if max(spec.nx, spec.ny, spec.nt) > BRUTE_FORCE_MAX_POINTS:
        raise CapabilityError(f"brute force needs a grid of at most "
                              f"{BRUTE_FORCE_MAX_POINTS} points per axis")
    letters = alphabet.points
    if letters.shape[1] != problem.control_dim:
        raise ValueError(f"alphabet letters have dimension {letters.shape[1]}, "
                         f"controls need {problem.control_dim}")
    if hasattr(F, "U"):
        letters = np.array([p for p in letters if F.U.contains(p)])
        if letters.size == 0:
            raise InfeasibleError("no alphabet letter lies in the control set")
    npts = (spec.nt - 1) * (spec.ny - 2) * (spec.nx - 2)
    total = len(letters) ** npts
    if total > BRUTE_FORCE_LIMIT:
        raise CapabilityError(f"{len(letters)}^{npts} = {total} assignments exceed "
                              f"the limit {BRUTE_FORCE_LIMIT}")

    mask = objective_mask(spec)
    shape = (spec.nt - 1, spec.ny - 2, spec.nx - 2, letters.shape[1])
    best_val, best_idx = math.inf, None
    combos = itertools.product(range(len(letters)), repeat=npts)
    offset = 0
    while True:
        chunk = list(itertools.islice(combos, BATCH))
        if not chunk:
            break
        idx = np.array(chunk, dtype=np.intp)
        W = letters[idx].reshape((len(chunk),) + shape)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CflWarning)
            U, ok = simulate_batch(F, problem.b, W, spec)
        vals = problem.g.values(U)[:, mask].sum(axis=1)
        vals = np.where(ok, vals, np.inf)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_idx = float(vals[i]), offset + i
            best_assign = idx[i]
        offset += len(chunk)
    if best_idx is None:
        raise InfeasibleError("no alphabet assignment keeps the velocity inside F")
    w = ControlField(spec, letters[best_assign].reshape(shape))
    state = _simulate_quiet(problem, w)
    return SolveResult(w, state, objective_value(problem.g, state), total, 0.0,
                       _cfl_warnings(spec))
