"""Explicit time marching of the discrete parabolic inclusion.

Given boundary data and a control (or a velocity selection) at every interior
point of the levels ``0 .. nt-2``, the state is advanced by::

    u(t + h) = u(t) + h * (A1 u + A2 u + v(u, w))

with ``v = A u + B w`` for :class:`LinearControl` maps and ``v = w`` otherwise.
The lateral faces are rewritten from the boundary data at every level.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .convex import Box, Singleton
from .errors import FeasibilityError, ParseError, ShapeError
from .grid import (BoundaryData, Field, GridSpec, _write_rows, boundary_mismatch,
                   laplacian_interior, read_grid_table, velocity, write_boundary)
from .maps import InclusionMap, LinearControl
from .report import VerifyReport, worst_interior

FEAS_TOL = 1e-9


class CflWarning(RuntimeWarning):
    """The explicit step violates ``h * (2/delta^2 + 2/sigma^2) <= 1``."""


@dataclass
class ControlField:
    """Controls ``w(x, y, t)`` in R^r at interior points of levels ``0 .. nt-2``.

    ``values`` has shape ``(nt - 1, ny - 2, nx - 2, r)``.  For polyhedral and
    constant maps the "control" is the velocity selection itself (``r = n``).
    """

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        s = self.spec
        expected = (s.nt - 1, s.ny - 2, s.nx - 2)
        if self.values.ndim != 4 or self.values.shape[:3] != expected:
            raise ShapeError(f"control values have shape {self.values.shape}, "
                             f"expected {expected + ('r',)}")

    @property
    def r(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, spec: GridSpec, value) -> "ControlField":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        shape = (spec.nt - 1, spec.ny - 2, spec.nx - 2, value.size)
        return cls(spec, np.broadcast_to(value, shape).copy())

    @classmethod
    def zeros(cls, spec: GridSpec, r: int) -> "ControlField":
        return cls.constant(spec, np.zeros(r))

    @classmethod
    def from_function(cls, spec: GridSpec, fn, r: int) -> "ControlField":
        """Sample ``fn(x, y, t) -> R^r`` at the control points."""
        v = np.empty((spec.nt - 1, spec.ny - 2, spec.nx - 2, r))
        for k in range(spec.nt - 1):
            for iy in range(1, spec.ny - 1):
                for ix in range(1, spec.nx - 1):
                    v[k, iy - 1, ix - 1] = fn(*spec.coords((ix, iy, k)))
        return cls(spec, v)

    def __getitem__(self, p):
        ix, iy, it = p
        return self.values[it, iy - 1, ix - 1]

    def copy(self) -> "ControlField":
        return ControlField(self.spec, self.values.copy())

    def to_csv(self, prefix: str = "w") -> str:
        s = self.spec
        header = ["x", "y", "t"] + [f"{prefix}_{i + 1}" for i in range(self.r)]
        rows = ((ix * s.delta, iy * s.sigma, k * s.h, *self.values[k, iy - 1, ix - 1])
                for (ix, iy, k) in s.interior_points(range(s.nt - 1)))
        buf = io.StringIO()
        _write_rows(buf, header, rows)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, spec: GridSpec, r: int) -> "ControlField":
        table = read_grid_table(text, spec, r)
        v = np.full((spec.nt - 1, spec.ny - 2, spec.nx - 2, r), np.nan)
        for (ix, iy, it), vec in table.items():
            if not (1 <= ix <= spec.nx - 2 and 1 <= iy <= spec.ny - 2 and it <= spec.nt - 2):
                raise ParseError(f"control given at non-control point {(ix, iy, it)}")
            v[it, iy - 1, ix - 1] = vec
        if np.isnan(v).any():
            k, iy, ix = (int(i) for i in np.argwhere(np.isnan(v[..., 0]))[0])
            raise ParseError(f"control missing at point {(ix + 1, iy + 1, k)}")
        return cls(spec, v)


def cfl_margin(spec: GridSpec) -> float:
    """``1 - h (2/delta^2 + 2/sigma^2)``; the explicit step is stable when nonnegative."""
    return 1.0 - spec.h * (2.0 / spec.delta**2 + 2.0 / spec.sigma**2)


def control_violation(F: InclusionMap, w: ControlField) -> np.ndarray:
    """Per-point violation ``(nt-1, ny-2, nx-2)`` of ``w in U`` for control-set maps."""
    U = F.U
    if isinstance(U, Box):
        viol = np.maximum(U.lower - w.values, w.values - U.upper)
        return np.maximum(np.max(viol, axis=-1), 0.0)
    if isinstance(U, Singleton):
        return np.max(np.abs(w.values - U.point), axis=-1)
    flat = w.values.reshape(-1, w.r)
    return np.array([U.violation(p) for p in flat]).reshape(w.values.shape[:3])


def _raise_first(viol, what, level_offset=0):
    worst = np.argwhere(~(viol <= FEAS_TOL))
    if len(worst):
        k, iy, ix = (int(i) for i in worst[0])
        p = (ix + 1, iy + 1, k + level_offset)
        raise FeasibilityError(f"{what} infeasible at grid point {p} "
                               f"(violation {viol[k, iy, ix]:.3e})", p)


def simulate(F: InclusionMap, b: BoundaryData, w: ControlField,
             spec: GridSpec | None = None) -> Field:
    """March the state forward from the initial face; see the module docstring."""
    spec = spec or w.spec
    b.check_shapes(spec)
    if cfl_margin(spec) < 0:
        warnings.warn(f"CFL margin {cfl_margin(spec):.6g} < 0: explicit step is unstable",
                      CflWarning, stacklevel=2)
    uses_control_set = hasattr(F, "U")
    if uses_control_set:
        _raise_first(control_violation(F, w), "control")
    expected_r = F.r if isinstance(F, LinearControl) else spec.n
    if w.r != expected_r:
        raise ShapeError(f"control has {w.r} components, map expects {expected_r}")

    u = np.zeros(spec.shape)
    write_boundary(u, b)
    for k in range(spec.nt - 1):
        level = u[k:k + 1]
        inner = level[0, 1:-1, 1:-1]
        lap = laplacian_interior(level, spec.delta, spec.sigma)[0]
        if isinstance(F, LinearControl):
            vel = F.velocity(inner, w.values[k])
        else:
            vel = w.values[k]
            if not uses_control_set:
                viol = F.residuals(inner, vel)
                _raise_first(viol[None], "velocity", k)
        u[k + 1, 1:-1, 1:-1] = inner + spec.h * (lap + vel)
    return Field(spec, u)


def inclusion_residuals(F: InclusionMap, u: Field) -> np.ndarray:
    """``dist(B u - A1 u - A2 u, F(u))`` bounds at control points, shape ``(nt-1, ny-2, nx-2)``."""
    return F.residuals(u.values[:-1, 1:-1, 1:-1], velocity(u))


def check_feasible(F: InclusionMap, b: BoundaryData, u: Field, tol: float = 1e-10) -> VerifyReport:
    """Boundary mismatch and inclusion residual of a candidate state."""
    rep = VerifyReport()
    bmax, bpt = boundary_mismatch(u, b)
    rep.add("boundary", bmax, bpt, tol)
    imax, ipt = worst_interior(inclusion_residuals(F, u))
    rep.add("inclusion", imax, ipt, tol)
    return rep


def simulate_batch(F: InclusionMap, b: BoundaryData, W: np.ndarray, spec: GridSpec):
    """Vectorized :func:`simulate` over a leading batch axis.

    ``W`` has shape ``(batch, nt-1, ny-2, nx-2, r)``.  Returns the states
    ``(batch, nt, ny, nx, n)`` and a boolean ``(batch,)`` mask of the members
    whose velocity selection stayed inside ``F`` (always true for
    control-set maps, whose controls are assumed admissible).
    """
    nb = W.shape[0]
    u = np.zeros((nb,) + spec.shape)
    for i in range(nb):
        write_boundary(u[i], b)
    ok = np.ones(nb, dtype=bool)
    for k in range(spec.nt - 1):
        inner = u[:, k, 1:-1, 1:-1]
        lap = laplacian_interior(u[:, k], spec.delta, spec.sigma)
        if isinstance(F, LinearControl):
            vel = F.velocity(inner, W[:, k])
        else:
            vel = W[:, k]
            if not hasattr(F, "U"):
                viol = F.residuals(inner, vel)
                ok &= np.max(viol.reshape(nb, -1), axis=1) <= FEAS_TOL
        u[:, k + 1, 1:-1, 1:-1] = inner + spec.h * (lap + vel)
    return u, ok
