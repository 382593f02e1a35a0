"""Convex sets, support functions and a small dense simplex solver.

The simplex method works on a full tableau with Bland's rule, so it is meant
for desk-scale problems (a few thousand rows at most in practice).  Ties are
broken deterministically everywhere:

* box support: a zero direction component selects the upper bound;
* finite sets: the lowest-index maximizer wins;
* polytopes: the lexicographically largest optimal vertex wins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConditioningError, InfeasibleError

#: Entries at or below this magnitude are never pivoted on.
PIVOT_FLOOR = 1e-11
#: Preferred minimum pivot magnitude in the ratio test.
PIVOT_TOL = 1e-9
#: Reduced-cost optimality tolerance (scaled by the cost norm).
OPT_TOL = 1e-11
#: Absolute feasibility tolerance for phase I (scaled by the rhs norm).
FEAS_TOL = 1e-9
#: Size limit on the dense LP core.
MAX_LP_DIM = 10_000


@dataclass(frozen=True)
class ExtReal:
    """A value in ``R ∪ {+inf}`` with the infinite case tagged explicitly."""

    value: float = 0.0
    infinite: bool = False

    @classmethod
    def inf(cls) -> "ExtReal":
        return cls(0.0, True)

    @classmethod
    def of(cls, x: float) -> "ExtReal":
        return cls(float(x), False)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __add__(self, other):
        if isinstance(other, ExtReal):
            if self.infinite or other.infinite:
                return ExtReal.inf()
            return ExtReal(self.value + other.value)
        return ExtReal.inf() if self.infinite else ExtReal(self.value + float(other))

    __radd__ = __add__

    def scale(self, a: float) -> "ExtReal":
        """Multiply by a nonnegative scalar (``0 * inf`` is taken as ``inf``)."""
        if a < 0:
            raise ValueError("ExtReal.scale needs a nonnegative factor")
        return ExtReal.inf() if self.infinite else ExtReal(a * self.value)

    def __str__(self):
        return "+inf" if self.infinite else format(self.value, ".17g")


# ---------------------------------------------------------------------------
# simplex core


class _Tableau:
    """Dense tableau ``[A | b]`` with an explicit basis list."""

    def __init__(self, A, b, basis):
        self.T = np.hstack([A, b[:, None]]).astype(float)
        self.basis = list(basis)

    @property
    def ncols(self):
        return self.T.shape[1] - 1

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cost - cb @ self.T[:, :-1]

    def optimize(self, cost, allowed):
        """Maximize ``cost . z`` moving only columns in ``allowed`` (bool mask).

        Returns ``("optimal", None)`` or ``("unbounded", column)``.
        """
        scale = max(1.0, float(np.max(np.abs(cost))))
        tol = OPT_TOL * scale
        max_iter = 50 * (self.T.shape[0] + self.ncols) + 1000
        for _ in range(max_iter):
            rc = self.reduced_costs(cost)
            cand = np.flatnonzero(allowed & (rc > tol))
            if cand.size == 0:
                return "optimal", None
            j = int(cand[0])  # Bland: lowest index
            col = self.T[:, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                if np.any(col > PIVOT_FLOOR):
                    raise ConditioningError(
                        f"entering column {j} has only pivots below {PIVOT_TOL:g}")
                return "unbounded", j
            ratios = self.T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = min(ties, key=lambda i: self.basis[i])  # Bland: lowest basic index
            self.pivot(int(r), j)
        raise ConditioningError("simplex iteration limit reached")

    def solution(self):
        z = np.zeros(self.ncols)
        z[self.basis] = self.T[:, -1]
        return z


@dataclass
class _StdResult:
    status: str
    z: np.ndarray | None = None
    value: float = 0.0
    basis: list = field(default_factory=list)
    rows: np.ndarray | None = None
    ray: np.ndarray | None = None
    infeasibility: float = 0.0


def _solve_standard(Aeq, b, c, lex=()):
    """Maximize ``c.z`` s.t. ``Aeq z = b, z >= 0`` by the two-phase method.

    ``lex`` holds further objectives maximized in turn over the optimal face.
    """
    Aeq = np.array(Aeq, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    c = np.asarray(c, dtype=float)
    k, N = Aeq.shape
    neg = b < 0
    Aeq[neg] *= -1.0
    b[neg] *= -1.0

    # reuse identity columns as the starting basis where possible
    basis = [-1] * k
    for j in range(N):
        col = Aeq[:, j]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] < 0:
            basis[nz[0]] = j
    art_rows = [i for i in range(k) if basis[i] < 0]
    n_art = len(art_rows)
    A_full = np.hstack([Aeq, np.zeros((k, n_art))])
    for a, i in enumerate(art_rows):
        A_full[i, N + a] = 1.0
        basis[i] = N + a
    tab = _Tableau(A_full, b, basis)
    rows_kept = np.arange(k)

    if n_art:
        cost1 = np.zeros(N + n_art)
        cost1[N:] = -1.0
        status, _ = tab.optimize(cost1, np.ones(N + n_art, dtype=bool))
        infeas = float(np.sum(tab.solution()[N:]))
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(b), initial=0.0))):
            return _StdResult("infeasible", infeasibility=infeas)
        # drive remaining artificials out of the basis, dropping redundant rows
        drop = []
        for r in range(len(tab.basis)):
            if tab.basis[r] >= N:
                row = tab.T[r, :N]
                cand = np.flatnonzero(np.abs(row) > PIVOT_FLOOR)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                else:
                    drop.append(r)
        keep = [r for r in range(len(tab.basis)) if r not in drop]
        tab.T = np.hstack([tab.T[keep, :N], tab.T[keep, -1:]])
        tab.basis = [tab.basis[r] for r in keep]
        rows_kept = rows_kept[keep]

    allowed = np.ones(N, dtype=bool)
    status, j = tab.optimize(c, allowed)
    if status == "unbounded":
        ray = np.zeros(N)
        ray[j] = 1.0
        ray[tab.basis] = -tab.T[:, j]
        return _StdResult("unbounded", ray=ray)
    basis_opt = list(tab.basis)
    z_opt = tab.solution()
    scale = max(1.0, float(np.max(np.abs(c))))
    for obj in lex:
        rc = tab.reduced_costs(c)
        allowed &= rc >= -OPT_TOL * scale * 10
        c = np.asarray(obj, dtype=float)
        scale = max(1.0, float(np.max(np.abs(c))))
        status, _ = tab.optimize(c, allowed)
        if status == "unbounded":
            break
        z_opt = tab.solution()
    return _StdResult("optimal", z=z_opt, basis=basis_opt, rows=rows_kept)


@dataclass
class LpProblem:
    """``maximize c.x  subject to  M x <= e`` with ``x`` free."""

    c: np.ndarray
    M: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.e = np.atleast_1d(np.asarray(self.e, dtype=float))
        k, m = self.M.shape
        if self.c.shape != (m,) or self.e.shape != (k,):
            raise ValueError(f"inconsistent LP dimensions: c {self.c.shape}, "
                             f"M {self.M.shape}, e {self.e.shape}")


@dataclass
class LpResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: np.ndarray | None = None
    value: float | None = None
    duals: np.ndarray | None = None
    ray: np.ndarray | None = None
    infeasibility: float = 0.0


def lp_solve(p: LpProblem, lex=()) -> LpResult:
    """Solve ``max c.x s.t. M x <= e`` (free ``x``) with the two-phase simplex method.

    Parameters
    ----------
    p : LpProblem
    lex : sequence of arrays, optional
        Secondary objectives maximized in order over the optimal face; used
        for deterministic tie-breaking among optimal vertices.

    Returns
    -------
    LpResult
        On optimality ``x``, ``value`` and nonnegative ``duals`` with
        ``M.T @ duals == c``.  When unbounded, ``ray`` is a feasible direction
        with ``c.ray > 0``.  When infeasible, ``infeasibility`` is the optimal
        phase-I objective.
    """
    k, m = p.M.shape
    if k > MAX_LP_DIM or m > MAX_LP_DIM:
        raise CapabilityError(f"LP of size {k}x{m} exceeds the dense limit {MAX_LP_DIM}")
    Aeq = np.hstack([p.M, -p.M, np.eye(k)])
    cstd = np.concatenate([p.c, -p.c, np.zeros(k)])
    lex_std = [np.concatenate([o, -np.asarray(o, dtype=float), np.zeros(k)]) for o in lex]
    res = _solve_standard(Aeq, p.e, cstd, lex_std)
    if res.status == "infeasible":
        return LpResult("infeasible", infeasibility=res.infeasibility)
    if res.status == "unbounded":
        ray = res.ray[:m] - res.ray[m:2 * m]
        return LpResult("unbounded", ray=ray)
    z = res.z
    x = z[:m] - z[m:2 * m]
    duals = np.zeros(k)
    rows = res.rows
    Bm = Aeq[np.ix_(rows, res.basis)]
    duals[rows] = np.linalg.solve(Bm.T, cstd[res.basis])
    return LpResult("optimal", x=x, value=float(p.c @ x), duals=duals)


@dataclass
class NonnegResult:
    status: str  # "feasible" | "infeasible"
    q: np.ndarray
    residual: float


def lp_feasible_nonneg(M, rhs, pins=(), tol=1e-9) -> NonnegResult:
    """Find ``q >= 0`` with ``M q = rhs`` and ``q[i] = 0`` for ``i`` in ``pins``.

    The minimal L1 residual ``||M q - rhs||_1`` is computed first; among
    minimizers the one with the smallest ``sum(q)`` is returned, remaining ties
    going to the lowest-index basis.  The system counts as feasible when the
    residual is at most ``tol * max(1, max|rhs|)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    k, m = M.shape
    if rhs.shape != (k,):
        raise ValueError(f"rhs shape {rhs.shape} does not match {k} rows")
    if k > MAX_LP_DIM or m > MAX_LP_DIM:
        raise CapabilityError(f"system of size {k}x{m} exceeds the dense limit {MAX_LP_DIM}")
    free = np.ones(m, dtype=bool)
    free[list(pins)] = False
    cols = np.flatnonzero(free)
    Aeq = np.hstack([M[:, cols], np.eye(k), -np.eye(k)])
    mc = cols.size
    c = np.concatenate([np.zeros(mc), -np.ones(2 * k)])
    lex = [np.concatenate([-np.ones(mc), np.zeros(2 * k)])]
    res = _solve_standard(Aeq, rhs, c, lex)
    q = np.zeros(m)
    q[cols] = np.maximum(res.z[:mc], 0.0)  # basic values carry pivot roundoff
    residual = float(np.sum(np.abs(M @ q - rhs)))
    ok = residual <= tol * max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    return NonnegResult("feasible" if ok else "infeasible", q, residual)


# ---------------------------------------------------------------------------
# convex sets


@dataclass
class SupportResult:
    value: ExtReal
    maximizer: np.ndarray | None


class ConvexSet:
    """Common interface of the closed convex sets ``U``."""

    dim: int

    def support(self, direction) -> SupportResult:
        raise NotImplementedError

    def contains(self, point, tol=1e-9) -> bool:
        return self.violation(point) <= tol

    def violation(self, point) -> float:
        raise NotImplementedError

    def halfspaces(self):
        """``(C, e)`` with ``U = {w : C w <= e}``."""
        raise CapabilityError(f"{type(self).__name__} has no halfspace description")

    def sample(self, rng) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _as_vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


class Box(ConvexSet):
    def __init__(self, lower, upper):
        self.lower = _as_vec(lower)
        self.upper = _as_vec(upper)
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds differ in shape")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")
        self.dim = self.lower.size

    def support(self, direction):
        d = _as_vec(direction)
        w = np.where(d >= 0, self.upper, self.lower)
        return SupportResult(ExtReal.of(float(d @ w)), w)

    def support_many(self, directions):
        """Vectorized support maximizers for an ``(..., dim)`` array of directions."""
        return np.where(directions >= 0, self.upper, self.lower)

    def violation(self, point):
        p = _as_vec(point)
        return float(np.max(np.maximum(self.lower - p, p - self.upper), initial=0.0))

    def halfspaces(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower])

    def project(self, point):
        return np.clip(_as_vec(point), self.lower, self.upper)

    def sample(self, rng):
        return rng.uniform(self.lower, self.upper)

    def vertices(self):
        return np.array([np.where(bits, self.upper, self.lower)
                         for bits in itertools.product([False, True], repeat=self.dim)])

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class Polytope(ConvexSet):
    """``{w : C w <= e}``; emptiness is rejected at construction."""

    def __init__(self, C, e):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.e = _as_vec(e)
        if self.C.shape[0] != self.e.size:
            raise ValueError("polytope rows and rhs differ in length")
        self.dim = self.C.shape[1]
        res = lp_solve(LpProblem(np.zeros(self.dim), self.C, self.e))
        if res.status == "infeasible":
            raise InfeasibleError("polytope is empty")

    def support(self, direction):
        d = _as_vec(direction)
        res = lp_solve(LpProblem(d, self.C, self.e), lex=list(np.eye(self.dim)))
        if res.status == "unbounded":
            return SupportResult(ExtReal.inf(), None)
        if res.status == "infeasible":  # excluded at construction
            raise InfeasibleError("polytope became empty")
        return SupportResult(ExtReal.of(float(d @ res.x)), res.x)

    def violation(self, point):
        p = _as_vec(point)
        return float(np.max(self.C @ p - self.e, initial=0.0))

    def halfspaces(self):
        return self.C, self.e

    def sample(self, rng, max_tries=10_000):
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i in range(self.dim):
            up = self.support(np.eye(self.dim)[i])
            dn = self.support(-np.eye(self.dim)[i])
            if up.value.infinite or dn.value.infinite:
                raise CapabilityError("cannot sample uniformly from an unbounded polytope")
            hi[i], lo[i] = up.value.value, -dn.value.value
        for _ in range(max_tries):
            w = rng.uniform(lo, hi)
            if self.contains(w, tol=0.0):
                return w
        raise CapabilityError("rejection sampling from polytope failed")

    def to_dict(self):
        return {"type": "polytope", "C": self.C.tolist(), "e": self.e.tolist()}

    def __repr__(self):
        return f"Polytope(C={self.C.tolist()}, e={self.e.tolist()})"


class Singleton(ConvexSet):
    def __init__(self, point):
        self.point = _as_vec(point)
        self.dim = self.point.size

    def support(self, direction):
        return SupportResult(ExtReal.of(float(_as_vec(direction) @ self.point)),
                             self.point.copy())

    def support_many(self, directions):
        return np.broadcast_to(self.point, directions.shape).copy()

    def violation(self, point):
        return float(np.max(np.abs(_as_vec(point) - self.point)))

    def halfspaces(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.point, -self.point])

    def project(self, point):
        return self.point.copy()

    def sample(self, rng):
        return self.point.copy()

    def to_dict(self):
        return {"type": "singleton", "point": self.point.tolist()}

    def __repr__(self):
        return f"Singleton({self.point.tolist()})"


class FiniteSet(ConvexSet):
    """A finite point set; its support function is that of the convex hull."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("finite set must be nonempty")
        for i in range(len(pts)):
            for j in range(i):
                if np.max(np.abs(pts[i] - pts[j])) <= 1e-12:
                    raise ValueError(f"duplicate points {i} and {j} in finite set")
        self.points = pts
        self.dim = pts.shape[1]

    def support(self, direction):
        vals = self.points @ _as_vec(direction)
        i = int(np.argmax(vals))  # first maximizer
        return SupportResult(ExtReal.of(float(vals[i])), self.points[i].copy())

    def support_many(self, directions):
        vals = directions @ self.points.T
        return self.points[np.argmax(vals, axis=-1)]

    def violation(self, point):
        p = _as_vec(point)
        return float(np.min(np.max(np.abs(self.points - p), axis=1)))

    def sample(self, rng):
        return self.points[rng.integers(len(self.points))].copy()

    def to_dict(self):
        return {"type": "finite", "points": self.points.tolist()}

    def __repr__(self):
        return f"FiniteSet({self.points.tolist()})"


def support(s: ConvexSet, direction) -> SupportResult:
    """Support function value and a maximizer of ``s`` in ``direction``."""
    d = _as_vec(direction)
    if d.size != s.dim:
        raise ValueError(f"direction has dimension {d.size}, set has {s.dim}")
    if not np.all(np.isfinite(d)):
        raise ValueError("direction must be finite")
    return s.support(d)


def project(s: ConvexSet, point) -> np.ndarray:
    """Euclidean projection onto a box or a singleton."""
    if isinstance(s, (Box, Singleton)):
        return s.project(point)
    raise CapabilityError(f"projection onto {type(s).__name__} is not supported")


def set_from_dict(d: dict) -> ConvexSet:
    kind = d.get("type")
    if kind == "box":
        return Box(d["lower"], d["upper"])
    if kind == "polytope":
        return Polytope(d["C"], d["e"])
    if kind == "singleton":
        return Singleton(d["point"])
    if kind == "finite":
        return FiniteSet(d["points"])
    raise ValueError(f"unknown set type {kind!r}")
