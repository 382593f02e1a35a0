"""Optimality certificates for the discrete problem.

A certificate bundles a candidate state ``utilde``, an adjoint ``ustar``, the
multiplier ``lam`` of the cost and, for polyhedral maps, the multiplier field
``q``.  The checks here are purely a posteriori: they never solve anything
except small per-point feasibility LPs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .adjoint import adjoint_boundary_violation, adjoint_residual
from .convex import Box, ConvexSet, LpProblem, lp_solve, support
from .dynamics import CflWarning, ControlField, FEAS_TOL, inclusion_residuals, simulate
from .errors import PreconditionError
from .grid import Field, GridSpec, laplacian_interior, velocity, write_boundary
from .maps import InclusionMap, LinearControl, Polyhedral
from .objectives import Objective, objective_value
from .report import VerifyReport, worst_interior

DEFAULT_SEED = 0
SAMPLE_MARGIN_TOL = 1e-8


@dataclass(frozen=True)
class Tolerances:
    inclusion_tol: float = 1e-8
    boundary_tol: float = 1e-12
    argmax_tol: float = 1e-8
    complementarity_tol: float = 1e-8

    def __post_init__(self):
        for name in ("inclusion_tol", "boundary_tol", "argmax_tol", "complementarity_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def uniform(cls, tol: float) -> "Tolerances":
        return cls(tol, tol, tol, tol)


@dataclass
class Certificate:
    utilde: Field
    ustar: Field
    q: np.ndarray | None = None
    lam: int = 1
    tolerances: Tolerances = field(default_factory=Tolerances)
    w: ControlField | None = None

    def __post_init__(self):
        if self.lam not in (0, 1):
            raise ValueError(f"lambda must be 0 or 1, got {self.lam}")
        if self.utilde.spec != self.ustar.spec:
            raise ValueError("state and adjoint live on different grids")
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=float)
            if self.q.shape[:3] != self.utilde.spec.shape[:3]:
                raise ValueError(f"q has shape {self.q.shape}, grid is {self.utilde.spec.shape[:3]}")


# ---------------------------------------------------------------------------
# conditions (i)-(iii)


def check_adjoint_conditions(F: InclusionMap, g: Objective, cert: Certificate,
                             spec: GridSpec | None = None) -> VerifyReport:
    """Adjoint inclusion, adjoint boundary zeros and the argmax condition."""
    spec = spec or cert.utilde.spec
    tol = cert.tolerances
    feas, _ = worst_interior(inclusion_residuals(F, cert.utilde))
    if not feas <= FEAS_TOL:
        raise PreconditionError(f"candidate state violates the inclusion by {feas:.3e}")
    rep = VerifyReport()
    bmax, bpt, _ = adjoint_boundary_violation(cert.ustar)
    rep.add("boundary_zeros", bmax, bpt, tol.boundary_tol)
    sub = adjoint_residual(F, cert.ustar, cert.utilde, g, cert.lam, tol=tol.inclusion_tol,
                           argmax_tol=tol.argmax_tol, require_boundary=False)
    rep.conditions.append(sub["argmax"])
    rep.conditions.append(sub["adjoint_inclusion"])
    return rep


# ---------------------------------------------------------------------------
# maximum principle


def recover_control(F: LinearControl, utilde: Field) -> ControlField:
    """Solve ``B w = v - A u`` pointwise (least squares); needs ``B`` injective."""
    if np.linalg.matrix_rank(F.B) < F.r:
        raise ValueError("B is not injective; supply the control explicitly")
    target = velocity(utilde) - utilde.values[:-1, 1:-1, 1:-1] @ F.A.T
    w = np.linalg.lstsq(F.B, target.reshape(-1, F.n).T, rcond=None)[0].T
    return ControlField(utilde.spec, w.reshape(target.shape[:3] + (F.r,)))


def check_maximum_principle(B, U: ConvexSet, cert: Certificate, A=None) -> VerifyReport:
    """Pointwise ``max_U <B w, u*> - <B w~, u*>`` at every control point.

    ``w~`` is ``cert.w`` when given, otherwise recovered from the state using
    ``A`` (required in that case).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    w = cert.w
    if w is None:
        if A is None:
            raise ValueError("no control supplied and no A given to recover it")
        w = recover_control(LinearControl(A, B, U), cert.utilde)
    dirs = cert.ustar.values[:-1, 1:-1, 1:-1] @ B
    if hasattr(U, "support_many"):
        best = np.sum(U.support_many(dirs) * dirs, axis=-1)
    else:
        best = np.array([support(U, d).value.value for d in dirs.reshape(-1, dirs.shape[-1])])
        best = best.reshape(dirs.shape[:3])
    gaps = best - np.sum(w.values * dirs, axis=-1)
    viol = np.array([U.violation(p) for p in w.values.reshape(-1, w.r)]).reshape(gaps.shape) \
        if not isinstance(U, Box) else np.maximum(
            np.max(np.maximum(U.lower - w.values, w.values - U.upper), axis=-1), 0.0)
    rep = VerifyReport()
    tol = cert.tolerances
    vmax, vpt = worst_interior(viol)
    rep.add("control_admissible", vmax, vpt, tol.argmax_tol)
    gmax, gpt = worst_interior(gaps)
    rep.add("maximum_principle", gmax, gpt, tol.argmax_tol)
    return rep


# ---------------------------------------------------------------------------
# polyhedral multiplier system


def multiplier_subgradients(F: Polyhedral, q: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``-A^T q_k - B^T (Lap q_k + (q_k - q_{k-1})/h)`` on levels ``1 .. K``.

    Shape ``(nt-1, ny-2, nx-2, n)``.  Boundary values of ``q`` enter the
    Laplacian as stored (they should be zero).
    """
    lap = laplacian_interior(q[1:], spec.delta, spec.sigma)
    dq = (q[1:, 1:-1, 1:-1] - q[:-1, 1:-1, 1:-1]) / spec.h
    return -(q[1:, 1:-1, 1:-1] @ F.A) - (lap + dq) @ F.B


def check_polyhedral_conditions(F: Polyhedral, g: Objective, cert: Certificate,
                                spec: GridSpec | None = None) -> VerifyReport:
    """Sign, inclusion, complementarity, boundary and consistency checks on ``q``."""
    if cert.q is None:
        raise ValueError("certificate has no multiplier field q")
    spec = spec or cert.utilde.spec
    q = cert.q
    if q.shape != spec.shape[:3] + (F.s,):
        raise ValueError(f"q has shape {q.shape}, expected {spec.shape[:3] + (F.s,)}")
    tol = cert.tolerances
    rep = VerifyReport()
    qc = q[:-1, 1:-1, 1:-1]
    neg, npt = worst_interior(np.max(-qc, axis=-1))
    rep.add("q_nonnegative", max(neg, 0.0), npt, tol.inclusion_tol)

    s = multiplier_subgradients(F, q, spec)
    ut = cert.utilde.values[1:, 1:-1, 1:-1]
    dist = np.empty(s.shape[:3])
    for k, iy, ix in np.ndindex(dist.shape):
        sk = s[k, iy, ix]
        if cert.lam == 0:
            dist[k, iy, ix] = float(np.max(np.abs(sk)))
        else:
            dist[k, iy, ix] = g.subgradient_distance(ut[k, iy, ix], (ix + 1, iy + 1, k + 1), sk)
    imax, ipt = worst_interior(dist, level_offset=1)
    rep.add("multiplier_inclusion", imax, ipt, tol.inclusion_tol)

    vel = velocity(cert.utilde)
    slack = cert.utilde.values[:-1, 1:-1, 1:-1] @ F.A.T - vel @ F.B.T - F.d
    comp = np.abs(np.sum(slack * qc, axis=-1))
    cmax, cpt = worst_interior(comp)
    rep.add("complementarity", cmax, cpt, tol.complementarity_tol)

    btq = np.max(np.abs(q @ F.B), axis=-1)
    face = np.zeros(btq.shape, dtype=bool)
    face[-1] = True
    face[:, 0] = face[:, -1] = True
    face[:, :, 0] = face[:, :, -1] = True
    masked = np.where(face, btq, 0.0)
    flat = int(masked.argmax())
    it, iy, ix = (int(i) for i in np.unravel_index(flat, masked.shape))
    rep.add("multiplier_boundary", masked.flat[flat], (ix, iy, it), tol.boundary_tol)

    cons = np.max(np.abs(cert.ustar.values + q @ F.B), axis=-1)
    flat = int(cons.argmax())
    it, iy, ix = (int(i) for i in np.unravel_index(flat, cons.shape))
    rep.add("adjoint_consistency", cons.flat[flat], (ix, iy, it), tol.boundary_tol)
    return rep


# ---------------------------------------------------------------------------
# sampling


def _sample_polyhedral_state(problem, rng, radius):
    """March with a random velocity in ``F(u) ∩ [-radius, radius]^n`` at each point.

    The velocity is a random convex combination of two LP vertices found
    along random directions.  Returns ``None`` if ``F(u)`` became empty.
    """
    F, spec = problem.F, problem.spec
    n = F.n
    u = np.zeros(spec.shape)
    write_boundary(u, problem.b)
    Mbox = np.vstack([-F.B, np.eye(n), -np.eye(n)])
    for k in range(spec.nt - 1):
        inner = u[k, 1:-1, 1:-1]
        lap = laplacian_interior(u[k:k + 1], spec.delta, spec.sigma)[0]
        vel = np.empty_like(inner)
        for iy, ix in np.ndindex(inner.shape[:2]):
            e = np.concatenate([F.d - F.A @ inner[iy, ix], np.full(2 * n, radius)])
            verts = []
            for _ in range(2):
                res = lp_solve(LpProblem(rng.normal(size=n), Mbox, e))
                if res.status != "optimal":
                    return None
                verts.append(res.x)
            lam = rng.uniform()
            vel[iy, ix] = lam * verts[0] + (1.0 - lam) * verts[1]
        u[k + 1, 1:-1, 1:-1] = inner + spec.h * (lap + vel)
    return Field(spec, u)


def _sample_control(U: ConvexSet, shape, rng):
    if isinstance(U, Box):
        return rng.uniform(U.lower, U.upper, size=shape + (U.dim,))
    flat = [U.sample(rng) for _ in range(int(np.prod(shape)))]
    return np.array(flat).reshape(shape + (U.dim,))


def sufficiency_sampling(problem, cert: Certificate, num_samples: int = 100,
                         seed: int = DEFAULT_SEED, margin_tol: float = SAMPLE_MARGIN_TOL
                         ) -> VerifyReport:
    """Compare the certified cost with the cost of random admissible controls.

    Each sample's margin is ``J[u] - J[utilde]``; the check passes when no
    margin falls below ``-margin_tol``.
    """
    F, spec, g = problem.F, problem.spec, problem.g
    rng = np.random.default_rng(seed)
    J0 = objective_value(g, cert.utilde)
    margins = []
    skipped = 0
    shape = (spec.nt - 1, spec.ny - 2, spec.nx - 2)
    if isinstance(F, Polyhedral):
        radius = 10.0 * (1.0 + float(np.max(np.abs(velocity(cert.utilde)), initial=0.0)))
    for _ in range(num_samples):
        if isinstance(F, Polyhedral):
            state = _sample_polyhedral_state(problem, rng, radius)
            if state is None:
                skipped += 1
                continue
        else:
            w = ControlField(spec, _sample_control(F.U, shape, rng))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CflWarning)
                state = simulate(F, problem.b, w, spec)
        margins.append(objective_value(g, state) - J0)
    rep = VerifyReport()
    worst = min(margins) if margins else 0.0
    rep.add("sufficiency", max(0.0, -worst), None, margin_tol)
    rep.notes.append(f"seed={seed} samples={len(margins)} skipped={skipped} "
                     f"min_margin={format(worst + 0.0, '.17g')}")
    if margins and not math.isfinite(worst):
        rep.conditions[-1].passed = False
    return rep
