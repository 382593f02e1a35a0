"""Convex integrands ``g(u, x, y, t)`` and the discrete cost functional.

The cost of a grid function is the Riemann sum ``sum delta*sigma*h * g``
over every grid point except the two spatial corners ``(0, 0)`` and
``(L, S)`` (at every time level).
"""

from __future__ import annotations

import math

import numpy as np

from .convex import lp_feasible_nonneg
from .grid import Field, GridSpec

PSD_TOL = 1e-10
ACTIVE_TOL = 1e-9


class Objective:
    """Base class.  ``values`` and ``gradient`` work on whole ``(nt, ny, nx, n)`` arrays."""

    differentiable = True

    def values(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """A subgradient selection at every point (the gradient when smooth)."""
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def subdiff_generators(self, u_pt, p):
        """``(base, G)`` with ``dg(u) = base + conv(rows of G)``; ``G`` is ``None`` if smooth."""
        raise NotImplementedError

    def subgradient_distance(self, u_pt, p, s) -> float:
        """Inf-norm distance bound from ``s`` to ``dg(u)`` at grid point ``p``; zero iff member."""
        base, G = self.subdiff_generators(u_pt, p)
        if G is None:
            return float(np.max(np.abs(np.asarray(s) - base)))
        M = np.vstack([G.T, np.ones((1, G.shape[0]))])
        rhs = np.concatenate([np.asarray(s) - base, [1.0]])
        res = lp_feasible_nonneg(M, rhs)
        return 0.0 if res.status == "feasible" else float(res.residual)


class Linear(Objective):
    """``g(u) = <c, u>`` with ``c`` constant (shape ``(n,)``) or per point (``(nt, ny, nx, n)``)."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)
        if self.c.ndim not in (1, 4):
            raise ValueError(f"c must have shape (n,) or (nt, ny, nx, n), got {self.c.shape}")

    def _c_at(self, p):
        if self.c.ndim == 1:
            return self.c
        ix, iy, it = p
        return self.c[it, iy, ix]

    def values(self, u):
        return np.sum(u * self.c, axis=-1)

    def gradient(self, u):
        return np.broadcast_to(self.c, u.shape).copy()

    def is_zero(self):
        return not np.any(self.c)

    def subdiff_generators(self, u_pt, p):
        return self._c_at(p), None

    def to_dict(self):
        return {"variant": "linear", "c": self.c.tolist()}


class Quadratic(Objective):
    """``g(u) = u^T Q u / 2 + <c, u>`` with symmetric positive semidefinite ``Q``."""

    def __init__(self, Q, c=None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n = self.Q.shape[0]
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        if self.Q.shape != (n, n) or self.c.shape != (n,):
            raise ValueError(f"bad shapes Q {self.Q.shape}, c {self.c.shape}")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > PSD_TOL:
            raise ValueError("Q is not symmetric")
        if np.min(np.linalg.eigvalsh(self.Q)) < -PSD_TOL:
            raise ValueError("Q is not positive semidefinite")

    def values(self, u):
        return 0.5 * np.einsum("...i,ij,...j->...", u, self.Q, u) + u @ self.c

    def gradient(self, u):
        return u @ self.Q + self.c

    def is_zero(self):
        return not (np.any(self.Q) or np.any(self.c))

    def subdiff_generators(self, u_pt, p):
        return self.Q @ np.asarray(u_pt) + self.c, None

    def to_dict(self):
        return {"variant": "quadratic", "Q": self.Q.tolist(), "c": self.c.tolist()}


class PolyhedralMax(Objective):
    """``g(u) = max_i <a_i, u> + b_i``; rows of ``a`` are the slopes."""

    differentiable = False

    def __init__(self, a, b):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.a.shape[0] < 1 or self.b.shape != (self.a.shape[0],):
            raise ValueError(f"need >= 1 piece with matching b, got a {self.a.shape}, b {self.b.shape}")

    def values(self, u):
        return np.max(u @ self.a.T + self.b, axis=-1)

    def active(self, u_pt):
        vals = self.a @ np.asarray(u_pt) + self.b
        return np.flatnonzero(vals >= np.max(vals) - ACTIVE_TOL * max(1.0, abs(np.max(vals))))

    def gradient(self, u):
        # lowest-index active piece
        return self.a[np.argmax(u @ self.a.T + self.b, axis=-1)]

    def is_zero(self):
        return not (np.any(self.a) or np.any(self.b))

    def subdiff_generators(self, u_pt, p):
        G = self.a[self.active(u_pt)]
        return np.zeros(self.a.shape[1]), G

    def to_dict(self):
        return {"variant": "polyhedral_max", "a": self.a.tolist(), "b": self.b.tolist()}


def objective_mask(spec: GridSpec) -> np.ndarray:
    """Boolean ``(nt, ny, nx)`` mask of the points entering the Riemann sum."""
    m = np.ones((spec.nt, spec.ny, spec.nx), dtype=bool)
    m[:, 0, 0] = False
    m[:, -1, -1] = False
    return m


def objective_value(g: Objective, u: Field, spec: GridSpec | None = None) -> float:
    """Riemann sum of ``g`` over the grid, summed exactly (order independent)."""
    spec = spec or u.spec
    vals = g.values(u.values)[objective_mask(spec)]
    return spec.cell_volume * math.fsum(vals.ravel().tolist())


def objective_from_dict(d: dict) -> Objective:
    kind = d.get("variant")
    if kind == "linear":
        return Linear(d["c"])
    if kind == "quadratic":
        return Quadratic(d["Q"], d.get("c"))
    if kind == "polyhedral_max":
        return PolyhedralMax(d["a"], d["b"])
    raise ValueError(f"unknown objective variant {kind!r}")
