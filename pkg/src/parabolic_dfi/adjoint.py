"""Discrete adjoint fields: backward solve, adjoint-inclusion residuals and
summation-by-parts identities.

Level conventions (``K = nt - 1``)::

    state velocity   v_k  = (u_{k+1} - u_k)/h - Lap u_k,          k = 0 .. K-1
    adjoint residual r_k  = -Lap u*_k - (u*_k - u*_{k-1})/h,       k = 1 .. K

The adjoint inclusion asks ``r_k in F*(u*_k; (u_k, v_k)) - lambda dg(u_k)``
for ``k < K`` and ``r_K in -lambda dg(u_K)`` on the terminal level, where no
velocity is attached.  ``u*`` vanishes on the four lateral faces and on the
terminal level.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError
from .grid import Field, GridSpec, laplacian_interior, velocity
from .maps import ACTIVE_TOL, Constant, InclusionMap, LinearControl, Polyhedral
from .objectives import Objective
from .convex import lp_feasible_nonneg
from .report import VerifyReport, worst_interior

BOUNDARY_TOL = 1e-9


# ---------------------------------------------------------------------------
# stencil identity


def stencil_identity_check(ustar: Field, p) -> float:
    """``|LHS - RHS|`` of the rewritten adjoint stencil at interior point ``p`` with ``t >= h``.

    LHS is the neighbour-weighted form
    ``[u*(x-d) + u*(x+d) + theta^2 (u*(y+s) + u*(y-s)) - (d^2/h) u*(t-h)] / d^2
    - (2/d^2 + 2/s^2 - 1/h) u*``; RHS is ``A1 u* + A2 u* + (u* - u*(t-h))/h``.
    """
    s = ustar.spec
    s.check_point(p, x_interior=True, y_interior=True, t_backward=True)
    ix, iy, it = p
    v = ustar.values
    d2, s2, th2 = s.delta**2, s.sigma**2, s.theta**2
    c = v[it, iy, ix]
    lhs = ((v[it, iy, ix - 1] + v[it, iy, ix + 1] + th2 * (v[it, iy + 1, ix] + v[it, iy - 1, ix])
            - (d2 / s.h) * v[it - 1, iy, ix]) / d2
           - (2.0 / d2 + 2.0 / s2 - 1.0 / s.h) * c)
    a1 = (v[it, iy, ix + 1] - 2.0 * c + v[it, iy, ix - 1]) / d2
    a2 = (v[it, iy + 1, ix] - 2.0 * c + v[it, iy - 1, ix]) / s2
    rhs = a1 + a2 + (c - v[it - 1, iy, ix]) / s.h
    return float(np.max(np.abs(lhs - rhs)))


def stencil_identity_residuals(ustar: Field) -> np.ndarray:
    """:func:`stencil_identity_check` at every interior point of levels ``1 .. K`` at once.

    Shape ``(nt-1, ny-2, nx-2)``.
    """
    s = ustar.spec
    v = ustar.values
    d2, s2, th2 = s.delta**2, s.sigma**2, s.theta**2
    c = v[1:, 1:-1, 1:-1]
    west, east = v[1:, 1:-1, :-2], v[1:, 1:-1, 2:]
    south, north = v[1:, :-2, 1:-1], v[1:, 2:, 1:-1]
    prev = v[:-1, 1:-1, 1:-1]
    lhs = ((west + east + th2 * (north + south) - (d2 / s.h) * prev) / d2
           - (2.0 / d2 + 2.0 / s2 - 1.0 / s.h) * c)
    rhs = (east - 2.0 * c + west) / d2 + (north - 2.0 * c + south) / s2 + (c - prev) / s.h
    return np.max(np.abs(lhs - rhs), axis=-1)


# ---------------------------------------------------------------------------
# backward solve


def adjoint_solve_linear(A, gprime, spec: GridSpec) -> Field:
    """Backward march ``u*_{k-1} = u*_k + h (Lap u*_k + A^T u*_k - g'(u_k))``.

    ``gprime`` is a :class:`Field` or an ``(nt, ny, nx, n)`` array; only its
    interior values on levels ``1 .. K`` are used.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    gp = gprime.values if isinstance(gprime, Field) else np.asarray(gprime, dtype=float)
    if gp.shape != spec.shape:
        raise ValueError(f"gradient field has shape {gp.shape}, expected {spec.shape}")
    us = np.zeros(spec.shape)
    for k in range(spec.nt - 1, 0, -1):
        level = us[k:k + 1]
        inner = level[0, 1:-1, 1:-1]
        lap = laplacian_interior(level, spec.delta, spec.sigma)[0]
        us[k - 1, 1:-1, 1:-1] = inner + spec.h * (lap + inner @ A - gp[k, 1:-1, 1:-1])
    return Field(spec, us)


# ---------------------------------------------------------------------------
# residuals


def adjoint_residual_field(ustar: Field) -> np.ndarray:
    """``r_k`` on levels ``1 .. K`` at interior points; shape ``(nt-1, ny-2, nx-2, n)``."""
    s = ustar.spec
    v = ustar.values
    lap = laplacian_interior(v[1:], s.delta, s.sigma)
    return -lap - (v[1:, 1:-1, 1:-1] - v[:-1, 1:-1, 1:-1]) / s.h


_FACES = {
    "t=T": lambda v: v[-1],
    "y=0": lambda v: v[:, 0],
    "y=S": lambda v: v[:, -1],
    "x=0": lambda v: v[:, :, 0],
    "x=L": lambda v: v[:, :, -1],
}


def adjoint_boundary_violation(ustar: Field):
    """Largest ``|u*|`` over the lateral faces and the terminal level.

    Returns ``(max, worst_point, offending_faces)``.
    """
    v = ustar.values
    mag = np.max(np.abs(v), axis=-1)
    mask = np.zeros(mag.shape, dtype=bool)
    mask[-1] = True
    mask[:, 0] = mask[:, -1] = True
    mask[:, :, 0] = mask[:, :, -1] = True
    masked = np.where(mask, mag, 0.0)
    flat = int(masked.argmax())
    it, iy, ix = (int(i) for i in np.unravel_index(flat, masked.shape))
    faces = [name for name, sel in _FACES.items() if np.max(np.abs(sel(v))) > BOUNDARY_TOL]
    return float(masked.flat[flat]), (ix, iy, it), faces


def argmax_gaps(F: InclusionMap, ustar: Field, utilde: Field) -> np.ndarray:
    """``|<v_k, u*_k> - H_F(u_k, u*_k)|`` at control points (``+inf`` if ``H`` is).

    Shape ``(nt-1, ny-2, nx-2)``.
    """
    vel = velocity(utilde)
    us = ustar.values[:-1, 1:-1, 1:-1]
    ut = utilde.values[:-1, 1:-1, 1:-1]
    pair = np.sum(vel * us, axis=-1)
    if isinstance(F, (LinearControl, Constant)) and hasattr(F.U, "support_many"):
        dirs = us @ F.B if isinstance(F, LinearControl) else us
        W = F.U.support_many(dirs)
        sup = np.sum(W * dirs, axis=-1)
        if isinstance(F, LinearControl):
            sup = sup + np.sum((ut @ F.A.T) * us, axis=-1)
        return np.abs(pair - sup)
    out = np.empty(pair.shape)
    for idx in np.ndindex(pair.shape):
        H = F.hamiltonian(ut[idx], us[idx])
        out[idx] = math.inf if H.infinite else abs(pair[idx] - H.value)
    return out


def _inclusion_residuals(F, g: Objective, ustar: Field, utilde: Field, lam: int) -> np.ndarray:
    """Residual of the adjoint inclusion on levels ``1 .. K``; shape ``(nt-1, ny-2, nx-2)``."""
    r = adjoint_residual_field(ustar)
    us = ustar.values[1:, 1:-1, 1:-1]
    ut = utilde.values[1:, 1:-1, 1:-1]
    if isinstance(F, LinearControl):
        fstar = us @ F.A
    else:
        fstar = np.zeros_like(us)
    fstar[-1] = 0.0  # no velocity on the terminal level

    if not isinstance(F, Polyhedral):
        if g.differentiable:
            grad = g.gradient(utilde.values)[1:, 1:-1, 1:-1]
            return np.max(np.abs(r - fstar + lam * grad), axis=-1)
        out = np.empty(r.shape[:3])
        for k, iy, ix in np.ndindex(out.shape):
            p = (ix + 1, iy + 1, k + 1)
            diff = fstar[k, iy, ix] - r[k, iy, ix]
            if lam == 0:
                out[k, iy, ix] = float(np.max(np.abs(diff)))
            else:
                out[k, iy, ix] = g.subgradient_distance(ut[k, iy, ix], p, diff / lam)
        return out

    vel = velocity(utilde)
    out = np.empty(r.shape[:3])
    for k, iy, ix in np.ndindex(out.shape):
        p = (ix + 1, iy + 1, k + 1)
        out[k, iy, ix] = _polyhedral_point_residual(
            F, g, lam, p, ut[k, iy, ix], us[k, iy, ix], r[k, iy, ix],
            None if k == out.shape[0] - 1 else vel[k + 1, iy, ix])
    return out


def _polyhedral_point_residual(F: Polyhedral, g: Objective, lam, p, u, us, r, v) -> float:
    """L1 residual of ``r = -A^T q - lam s`` with ``B^T q = -u*``, ``q >= 0``, ``s in dg(u)``.

    ``q`` vanishes on inactive rows of ``F(u)``; on the terminal level
    (``v is None``) there is no multiplier at all.
    """
    n = F.n
    base, G = g.subdiff_generators(u, p)
    if v is None:
        Mq = np.zeros((n, 0))
        rhs = r + lam * base
        pins = []
    else:
        Mq = np.vstack([-F.A.T, F.B.T])
        rhs = np.concatenate([r + lam * base, -us])
        pins = list(np.flatnonzero(F.slack(u, v) > ACTIVE_TOL))
    M = Mq
    if G is not None and lam != 0:
        # s = sum mu_i a_i over active pieces, mu in the simplex
        k = G.shape[0]
        Mmu = np.vstack([-lam * G.T, np.zeros((Mq.shape[0] - n, k))])
        M = np.vstack([np.hstack([Mq, Mmu]),
                       np.concatenate([np.zeros(Mq.shape[1]), np.ones(k)])[None]])
        rhs = np.concatenate([rhs, [1.0]])
    if M.shape[1] == 0:
        return float(np.sum(np.abs(rhs)))
    return float(lp_feasible_nonneg(M, rhs, pins).residual)


def adjoint_residual(F: InclusionMap, ustar: Field, utilde: Field, g: Objective, lam: int = 1,
                     tol: float = 1e-8, argmax_tol: float | None = None,
                     require_boundary: bool = True) -> VerifyReport:
    """Check the discrete adjoint inclusion and the argmax condition.

    Conditions reported: ``argmax`` (levels ``0 .. K-1``) and ``adjoint_inclusion``
    (levels ``1 .. K``).  Raises :class:`PreconditionError` naming the faces
    where ``u*`` fails to vanish, unless ``require_boundary`` is false.
    """
    if lam not in (0, 1):
        raise ValueError(f"lambda must be 0 or 1, got {lam}")
    if require_boundary:
        bmax, _, faces = adjoint_boundary_violation(ustar)
        if bmax > BOUNDARY_TOL:
            raise PreconditionError(f"adjoint does not vanish on faces {', '.join(faces)} "
                                    f"(max {bmax:.3e})")
    rep = VerifyReport()
    gmax, gpt = worst_interior(argmax_gaps(F, ustar, utilde))
    rep.add("argmax", gmax, gpt, tol if argmax_tol is None else argmax_tol)
    imax, ipt = worst_interior(_inclusion_residuals(F, g, ustar, utilde, lam), level_offset=1)
    rep.add("adjoint_inclusion", imax, ipt, tol)
    return rep


# ---------------------------------------------------------------------------
# summation by parts


def _ip(a, b):
    return math.fsum(np.sum(a * b, axis=-1).ravel().tolist())


def sbp_terms(u: Field, utilde: Field, ustar: Field):
    """Discrete ``(J1, J2, J3)`` in their volume (interior-sum) form.

    With ``e = u - utilde``::

        J1 = dsh * sum_{k<K} <(e_{k+1} - e_k)/h, u*_k> + <e_{k+1}, (u*_{k+1} - u*_k)/h>
        J2 = dsh * sum_k <A1 e_k, u*_k> - <e_k, A1 u*_k>
        J3 = dsh * sum_k <A2 e_k, u*_k> - <e_k, A2 u*_k>

    all sums running over spatially interior points.  They vanish whenever
    ``e`` is zero on the initial and lateral faces and ``u*`` is zero on the
    lateral faces and the terminal level.
    """
    s = u.spec
    e = u.values - utilde.values
    us = ustar.values
    dsh = s.cell_volume
    ei, usi = e[:, 1:-1, 1:-1], us[:, 1:-1, 1:-1]
    j1 = dsh * (_ip((ei[1:] - ei[:-1]) / s.h, usi[:-1]) + _ip(ei[1:], (usi[1:] - usi[:-1]) / s.h))
    a1e = (e[:, 1:-1, 2:] - 2 * ei + e[:, 1:-1, :-2]) / s.delta**2
    a1s = (us[:, 1:-1, 2:] - 2 * usi + us[:, 1:-1, :-2]) / s.delta**2
    j2 = dsh * (_ip(a1e, usi) - _ip(ei, a1s))
    a2e = (e[:, 2:, 1:-1] - 2 * ei + e[:, :-2, 1:-1]) / s.sigma**2
    a2s = (us[:, 2:, 1:-1] - 2 * usi + us[:, :-2, 1:-1]) / s.sigma**2
    j3 = dsh * (_ip(a2e, usi) - _ip(ei, a2s))
    return j1, j2, j3


def sbp_boundary_terms(u: Field, utilde: Field, ustar: Field):
    """The same three quantities written as face fluxes (no interior sums).

    ``sbp_terms`` and ``sbp_boundary_terms`` agree for arbitrary fields; the
    flux form makes visible which boundary values each term depends on.
    """
    s = u.spec
    e = u.values - utilde.values
    us = ustar.values
    ds = s.delta * s.sigma
    dsh = s.cell_volume
    j1 = ds * (_ip(e[-1, 1:-1, 1:-1], us[-1, 1:-1, 1:-1]) - _ip(e[0, 1:-1, 1:-1], us[0, 1:-1, 1:-1]))
    ey, uy = e[:, 1:-1], us[:, 1:-1]
    j2 = dsh / s.delta**2 * (_ip(ey[:, :, -1], uy[:, :, -2]) - _ip(ey[:, :, -2], uy[:, :, -1])
                             - _ip(ey[:, :, 1], uy[:, :, 0]) + _ip(ey[:, :, 0], uy[:, :, 1]))
    ex, ux = e[:, :, 1:-1], us[:, :, 1:-1]
    j3 = dsh / s.sigma**2 * (_ip(ex[:, -1], ux[:, -2]) - _ip(ex[:, -2], ux[:, -1])
                             - _ip(ex[:, 1], ux[:, 0]) + _ip(ex[:, 0], ux[:, 1]))
    return j1, j2, j3
