"""Convex set-valued maps ``F : R^n => R^n`` and the auxiliary five-argument map.

Three autonomous variants are provided:

``LinearControl(A, B, U)``
    ``F(u) = A u + B U`` with a convex set ``U`` of controls.
``Polyhedral(A, B, d)``
    ``F(u) = {v : A u - B v <= d}``.
``Constant(U)``
    ``F(u) = U``.

Every map exposes membership, the Hamiltonian ``H_F(u, v*) = sup <v, v*>``
over ``F(u)``, an argmax selection and the locally adjoint mapping (LAM)
``F*(v*; (u, v))``, which for convex maps is the superdifferential of the
concave function ``H_F(., v*)`` at ``u`` whenever ``v`` attains the sup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import (Box, ConvexSet, ExtReal, FiniteSet, LpProblem, Singleton,
                     lp_feasible_nonneg, lp_solve, set_from_dict, support)
from .errors import PreconditionError, UnboundedError

MEMBER_TOL = 1e-9
ARGMAX_TOL = 1e-9
ACTIVE_TOL = 1e-9


def _vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


@dataclass
class LamResult:
    """Value of the LAM at one graph point.

    ``kind`` is ``"empty"``, ``"point"`` or ``"affine"``; for ``"affine"`` the
    vector ``ustar`` is one representative and ``q`` its multiplier.
    """

    kind: str
    ustar: np.ndarray | None = None
    q: np.ndarray | None = None

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"


class InclusionMap:
    n: int

    def member(self, u, v, tol=MEMBER_TOL) -> bool:
        return self.residual(u, v) <= tol

    def residual(self, u, v) -> float:
        """Nonnegative violation measure, zero exactly when ``v in F(u)``."""
        raise NotImplementedError

    def residuals(self, u, v) -> np.ndarray:
        """:meth:`residual` over ``(..., n)`` arrays."""
        flat_u = u.reshape(-1, self.n)
        flat_v = v.reshape(-1, self.n)
        out = np.array([self.residual(a, b) for a, b in zip(flat_u, flat_v)])
        return out.reshape(u.shape[:-1])

    def hamiltonian(self, u, vstar) -> ExtReal:
        raise NotImplementedError

    def argmax(self, u, vstar) -> np.ndarray:
        raise NotImplementedError

    def lam(self, vstar, u, v) -> LamResult:
        raise NotImplementedError

    def in_argmax(self, u, v, vstar, tol=ARGMAX_TOL) -> bool:
        H = self.hamiltonian(u, vstar)
        if H.infinite:
            return False
        return float(_vec(v) @ _vec(vstar)) >= H.value - tol * max(1.0, abs(H.value))

    def _check_member(self, u, v):
        r = self.residual(u, v)
        if r > MEMBER_TOL:
            raise PreconditionError(f"v is not in F(u) (violation {r:.3e})")


class LinearControl(InclusionMap):
    """``F(u) = A u + B U``."""

    def __init__(self, A, B, U: ConvexSet):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.n = self.A.shape[0]
        self.r = self.B.shape[1]
        if self.A.shape != (self.n, self.n) or self.B.shape[0] != self.n:
            raise ValueError(f"bad shapes A {self.A.shape}, B {self.B.shape}")
        if U.dim != self.r:
            raise ValueError(f"control set has dimension {U.dim}, B has {self.r} columns")
        self.U = U
        self._Binv = None
        if self.r == self.n and abs(np.linalg.det(self.B)) > 1e-12:
            self._Binv = np.linalg.inv(self.B)

    def velocity(self, u, w):
        """``A u + B w`` over ``(..., n)`` / ``(..., r)`` arrays."""
        return u @ self.A.T + w @ self.B.T

    def residual(self, u, v):
        target = _vec(v) - self.A @ _vec(u)
        U = self.U
        if isinstance(U, Singleton):
            return float(np.max(np.abs(target - self.B @ U.point)))
        if isinstance(U, FiniteSet):
            return float(np.min(np.max(np.abs(target - U.points @ self.B.T), axis=1)))
        if self._Binv is not None and isinstance(U, Box):
            w = self._Binv @ target
            return float(np.max(np.abs(self.B @ (w - U.project(w)))))
        # min t  s.t.  |B w - target| <= t,  C w <= e
        C, e = U.halfspaces()
        r, n = self.r, self.n
        ones = np.ones((n, 1))
        M = np.vstack([
            np.hstack([self.B, -ones]),
            np.hstack([-self.B, -ones]),
            np.hstack([C, np.zeros((C.shape[0], 1))]),
        ])
        rhs = np.concatenate([target, -target, e])
        c = np.zeros(r + 1)
        c[-1] = -1.0
        res = lp_solve(LpProblem(c, M, rhs))
        return max(0.0, float(res.x[-1]))

    def residuals(self, u, v):
        if self._Binv is not None and isinstance(self.U, Box):
            target = v - u @ self.A.T
            w = target @ self._Binv.T
            gap = (w - np.clip(w, self.U.lower, self.U.upper)) @ self.B.T
            return np.max(np.abs(gap), axis=-1)
        return super().residuals(u, v)

    def hamiltonian(self, u, vstar):
        vs = _vec(vstar)
        s = support(self.U, self.B.T @ vs)
        return s.value + float((self.A @ _vec(u)) @ vs)

    def argmax(self, u, vstar):
        vs = _vec(vstar)
        s = support(self.U, self.B.T @ vs)
        if s.value.infinite:
            raise UnboundedError("Hamiltonian is +inf; no maximizer")
        return self.A @ _vec(u) + self.B @ s.maximizer

    def lam(self, vstar, u, v):
        self._check_member(u, v)
        if not self.in_argmax(u, v, vstar):
            return LamResult("empty")
        return LamResult("point", self.A.T @ _vec(vstar))

    def to_dict(self):
        return {"variant": "linear_control", "A": self.A.tolist(), "B": self.B.tolist(),
                "U": self.U.to_dict()}

    def __repr__(self):
        return f"LinearControl(A={self.A.tolist()}, B={self.B.tolist()}, U={self.U!r})"


class Polyhedral(InclusionMap):
    """``F(u) = {v : A u - B v <= d}`` with ``A, B`` of shape ``(s, n)``."""

    def __init__(self, A, B, d):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.d = _vec(d)
        self.s, self.n = self.A.shape
        if self.B.shape != (self.s, self.n) or self.d.shape != (self.s,):
            raise ValueError(f"bad shapes A {self.A.shape}, B {self.B.shape}, d {self.d.shape}")
        res = lp_solve(LpProblem(np.zeros(self.n), -self.B, self.d))
        if res.status == "infeasible":
            raise ValueError("F(0) is empty")

    @classmethod
    def from_ppc(cls, A, B, d):
        """Map constraints ``A v - B u <= d`` (derivative first) into this form."""
        return cls(-np.atleast_2d(B), -np.atleast_2d(A), d)

    def slack(self, u, v):
        """``d - (A u - B v)``; nonnegative exactly on the graph."""
        return self.d - (self.A @ _vec(u) - self.B @ _vec(v))

    def residual(self, u, v):
        return max(0.0, float(-np.min(self.slack(u, v))))

    def residuals(self, u, v):
        viol = u @ self.A.T - v @ self.B.T - self.d
        return np.maximum(np.max(viol, axis=-1), 0.0)

    def _lp(self, u, vstar, lex=()):
        return lp_solve(LpProblem(_vec(vstar), -self.B, self.d - self.A @ _vec(u)), lex=lex)

    def hamiltonian(self, u, vstar):
        res = self._lp(u, vstar)
        if res.status != "optimal":
            return ExtReal.inf()
        return ExtReal.of(res.value)

    def argmax(self, u, vstar):
        res = self._lp(u, vstar, lex=list(np.eye(self.n)))
        if res.status != "optimal":
            raise UnboundedError(f"Hamiltonian is +inf ({res.status})")
        return res.x

    def lam(self, vstar, u, v):
        self._check_member(u, v)
        pins = np.flatnonzero(self.slack(u, v) > ACTIVE_TOL)
        res = lp_feasible_nonneg(self.B.T, -_vec(vstar), pins)
        if res.status != "feasible":
            return LamResult("empty")
        return LamResult("affine", -self.A.T @ res.q, res.q)

    def to_dict(self):
        return {"variant": "polyhedral", "A": self.A.tolist(), "B": self.B.tolist(),
                "d": self.d.tolist()}

    def __repr__(self):
        return f"Polyhedral(A={self.A.tolist()}, B={self.B.tolist()}, d={self.d.tolist()})"


class Constant(InclusionMap):
    """``F(u) = U`` for a fixed convex set ``U`` in R^n."""

    def __init__(self, U: ConvexSet):
        self.U = U
        self.n = U.dim

    def residual(self, u, v):
        return self.U.violation(v)

    def residuals(self, u, v):
        if isinstance(self.U, Box):
            viol = np.maximum(self.U.lower - v, v - self.U.upper)
            return np.maximum(np.max(viol, axis=-1), 0.0)
        if isinstance(self.U, Singleton):
            return np.max(np.abs(v - self.U.point), axis=-1)
        return super().residuals(u, v)

    def hamiltonian(self, u, vstar):
        return support(self.U, vstar).value

    def argmax(self, u, vstar):
        s = support(self.U, vstar)
        if s.value.infinite:
            raise UnboundedError("Hamiltonian is +inf; no maximizer")
        return s.maximizer

    def lam(self, vstar, u, v):
        self._check_member(u, v)
        if not self.in_argmax(u, v, vstar):
            return LamResult("empty")
        return LamResult("point", np.zeros(self.n))

    def to_dict(self):
        return {"variant": "constant", "U": self.U.to_dict()}

    def __repr__(self):
        return f"Constant({self.U!r})"


def map_from_dict(d: dict) -> InclusionMap:
    kind = d.get("variant")
    if kind == "linear_control":
        return LinearControl(d["A"], d["B"], set_from_dict(d["U"]))
    if kind == "polyhedral":
        return Polyhedral(d["A"], d["B"], d["d"])
    if kind == "constant":
        return Constant(set_from_dict(d["U"]))
    raise ValueError(f"unknown map variant {kind!r}")


# spec-level function surface --------------------------------------------------


def member(F: InclusionMap, u, v) -> bool:
    return F.member(u, v)


def hamiltonian(F: InclusionMap, u, vstar) -> ExtReal:
    """``sup {<v, v*> : v in F(u)}``, ``+inf`` when unbounded or ``F(u)`` empty."""
    return F.hamiltonian(u, vstar)


def argmax_select(F: InclusionMap, u, vstar) -> np.ndarray:
    return F.argmax(u, vstar)


def lam(F: InclusionMap, vstar, u, v) -> LamResult:
    return F.lam(vstar, u, v)


# ---------------------------------------------------------------------------
# five-argument map G(u1, u2, u, u3, u4) = linear part - delta^2 F(u)


@dataclass(frozen=True)
class GTransform:
    """The map obtained by solving the discrete parabolic inclusion for ``u(x + delta)``.

    ``G(u1, u2, u, u3, u4) = -u1 - theta^2 u2 + c0 u - theta^2 u3 + (delta^2/h) u4
    - delta^2 F(u)`` where ``u1 .. u4`` are the values at ``x - delta``,
    ``y - sigma``, ``y + sigma`` and ``t + h`` and ``c0 = 2 + 2 theta^2 - delta^2/h``.
    """

    base: InclusionMap
    delta: float
    sigma: float
    h: float

    def __post_init__(self):
        if not (self.delta > 0 and self.sigma > 0 and self.h > 0):
            raise ValueError("steps must be positive")

    @property
    def theta(self) -> float:
        return self.delta / self.sigma

    @property
    def c0(self) -> float:
        return 2.0 + 2.0 * self.theta**2 - self.delta**2 / self.h

    @property
    def kappa(self) -> float:
        """``2/delta^2 + 2/sigma^2 - 1/h`` (equals ``c0 / delta^2``)."""
        return 2.0 / self.delta**2 + 2.0 / self.sigma**2 - 1.0 / self.h

    def linear_part(self, u1, u2, u, u3, u4):
        th2 = self.theta**2
        return (-_vec(u1) - th2 * _vec(u2) + self.c0 * _vec(u) - th2 * _vec(u3)
                + (self.delta**2 / self.h) * _vec(u4))

    def f_velocity(self, u1, u2, u, u3, u4, v):
        """Recover the ``F(u)`` element behind a point ``v`` of ``G``."""
        d2, s2 = self.delta**2, self.sigma**2
        return (self.kappa * _vec(u) + _vec(u4) / self.h - _vec(u1) / d2
                - _vec(u2) / s2 - _vec(u3) / s2 - _vec(v) / d2)

    def forward(self, u1, u2, u, u3, u4, vf):
        return self.linear_part(u1, u2, u, u3, u4) - self.delta**2 * _vec(vf)

    def member(self, u1, u2, u, u3, u4, v) -> bool:
        return self.base.member(u, self.f_velocity(u1, u2, u, u3, u4, v))

    def hamiltonian(self, u1, u2, u, u3, u4, vstar) -> ExtReal:
        vs = _vec(vstar)
        lin = float(self.linear_part(u1, u2, u, u3, u4) @ vs)
        return self.base.hamiltonian(u, -vs).scale(self.delta**2) + lin

    def argmax(self, u1, u2, u, u3, u4, vstar):
        vf = self.base.argmax(u, -_vec(vstar))
        return self.forward(u1, u2, u, u3, u4, vf)


@dataclass
class GLam:
    """Adjoint vectors of ``G`` at a graph point.

    ``u1s, u2s, u3s, u4s`` are fixed by ``v*``; ``ustar`` is ``None`` when the
    LAM of the base map is empty.
    """

    u1s: np.ndarray
    u2s: np.ndarray
    u3s: np.ndarray
    u4s: np.ndarray
    ustar: np.ndarray | None
    base: LamResult

    def as_vector(self):
        """``(u1*, u2*, u*, u3*, u4*)`` stacked, matching the argument order of ``G``."""
        return np.concatenate([self.u1s, self.u2s, self.ustar, self.u3s, self.u4s])


def g_forward(G: GTransform, u1, u2, u, u3, u4, v) -> np.ndarray:
    """Element of ``G(u1, u2, u, u3, u4)`` generated by ``v in F(u)``."""
    G.base._check_member(u, v)
    return G.forward(u1, u2, u, u3, u4, v)


def g_hamiltonian(G: GTransform, u1, u2, u, u3, u4, vstar) -> ExtReal:
    return G.hamiltonian(u1, u2, u, u3, u4, vstar)


def g_lam_from_f(G: GTransform, vstar, witness) -> GLam:
    """LAM of ``G`` at ``witness = (u1, u2, u, u3, u4, v)`` expressed through ``F*``.

    The four neighbour multipliers are ``-v*``, ``-theta^2 v*``, ``-theta^2 v*``
    and ``(delta^2/h) v*``; the centre multiplier is ``delta^2 f* + c0 v*``
    for ``f*`` in ``F*(-v*; (u, vf))``, ``vf`` being the recovered ``F``-velocity.
    """
    u1, u2, u, u3, u4, v = (_vec(a) for a in witness)
    vs = _vec(vstar)
    vf = G.f_velocity(u1, u2, u, u3, u4, v)
    G.base._check_member(u, vf)
    if not G.base.in_argmax(u, vf, -vs):
        raise PreconditionError("recovered velocity is not in the argmax set of F")
    th2 = G.theta**2
    base = G.base.lam(-vs, u, vf)
    ustar = None if base.is_empty else G.delta**2 * base.ustar + G.c0 * vs
    return GLam(-vs, -th2 * vs, -th2 * vs, (G.delta**2 / G.h) * vs, ustar, base)
