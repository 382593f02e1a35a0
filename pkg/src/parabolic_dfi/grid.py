"""Uniform space-time grids, grid functions and three-point difference operators.

Grid functions are stored as dense arrays of shape ``(nt, ny, nx, n)`` so that a
whole time level ``values[k]`` is contiguous.  Grid points are addressed by
index triples ``(ix, iy, it)`` with physical coordinates
``(ix * delta, iy * sigma, it * h)``.

The operators follow the usual second-difference stencils::

    A1 f = (f(x+delta) - 2 f(x) + f(x-delta)) / delta**2
    A2 f = (f(y+sigma) - 2 f(y) + f(y-sigma)) / sigma**2
    B  f = (f(t+h) - f(t)) / h
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridError, ParseError, ShapeError

#: Relative mismatch allowed between an extent and ``(count - 1) * step``.
DIVISIBILITY_RTOL = 1e-9

#: Edge compatibility tolerance between boundary faces.
EDGE_TOL = 1e-12


def _axis_count(extent: float, step: float, name: str) -> int:
    if not (extent > 0 and step > 0):
        raise GridError(f"{name}: extent and step must be positive, got {extent}, {step}")
    intervals = int(round(extent / step))
    if intervals < 1 or abs(intervals * step - extent) > DIVISIBILITY_RTOL * extent:
        raise GridError(f"{name}: extent {extent!r} is not a multiple of step {step!r}")
    count = intervals + 1
    if count < 3:
        raise GridError(f"{name}: need at least 3 grid points, got {count}")
    return count


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[0, L] x [0, S] x [0, T]`` carrying ``n``-vectors.

    ``nx``, ``ny`` and ``nt`` count grid *points* (boundary included), so
    ``(nx - 1) * delta == L``.
    """

    L: float
    S: float
    T: float
    delta: float
    sigma: float
    h: float
    n: int = 1
    nx: int = field(init=False)
    ny: int = field(init=False)
    nt: int = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GridError(f"state dimension must be a positive integer, got {self.n}")
        object.__setattr__(self, "nx", _axis_count(self.L, self.delta, "x"))
        object.__setattr__(self, "ny", _axis_count(self.S, self.sigma, "y"))
        object.__setattr__(self, "nt", _axis_count(self.T, self.h, "t"))
        object.__setattr__(self, "theta", self.delta / self.sigma)

    @classmethod
    def from_counts(cls, L, S, T, nx, ny, nt, n=1):
        """Build a grid from point counts instead of steps."""
        return cls(L, S, T, L / (nx - 1), S / (ny - 1), T / (nt - 1), n)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.nt, self.ny, self.nx, self.n)

    @property
    def cell_volume(self) -> float:
        return self.delta * self.sigma * self.h

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.delta

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.sigma

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt) * self.h

    @property
    def interior_shape(self) -> tuple[int, int]:
        """Spatial shape ``(ny - 2, nx - 2)`` of the interior point set."""
        return (self.ny - 2, self.nx - 2)

    def coords(self, p) -> tuple[float, float, float]:
        ix, iy, it = p
        return (ix * self.delta, iy * self.sigma, it * self.h)

    def check_point(self, p, *, x_interior=False, y_interior=False, t_forward=False,
                    t_backward=False):
        ix, iy, it = p
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= it < self.nt):
            raise GridError(f"grid index {p} outside grid {self.nx}x{self.ny}x{self.nt}")
        if x_interior and not 1 <= ix <= self.nx - 2:
            raise GridError(f"x index {ix} has no x-neighbours")
        if y_interior and not 1 <= iy <= self.ny - 2:
            raise GridError(f"y index {iy} has no y-neighbours")
        if t_forward and it > self.nt - 2:
            raise GridError(f"t index {it} has no successor level")
        if t_backward and it < 1:
            raise GridError(f"t index {it} has no predecessor level")

    def interior_points(self, levels=None):
        """Yield interior ``(ix, iy, it)`` triples in lexicographic ``(t, y, x)`` order."""
        if levels is None:
            levels = range(self.nt)
        for it in levels:
            for iy in range(1, self.ny - 1):
                for ix in range(1, self.nx - 1):
                    yield (ix, iy, it)


@dataclass
class Field:
    """A grid function with values in R^n on the closed grid."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ShapeError(f"field shape {self.values.shape} != grid shape {self.spec.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("field contains non-finite entries")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "Field":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable) -> "Field":
        """Sample ``fn(x, y, t)`` (broadcasting, returning ``(..., n)`` or scalar)."""
        t, y, x = np.meshgrid(spec.t, spec.y, spec.x, indexing="ij")
        vals = np.asarray(fn(x, y, t), dtype=float)
        if vals.shape == t.shape:
            vals = vals[..., None]
        return cls(spec, np.broadcast_to(vals, spec.shape).copy())

    def copy(self) -> "Field":
        return Field(self.spec, self.values.copy())

    def __getitem__(self, p) -> np.ndarray:
        ix, iy, it = p
        self.spec.check_point(p)
        return self.values[it, iy, ix]

    def interior(self) -> np.ndarray:
        """View of values at spatially interior points, all levels."""
        return self.values[:, 1:-1, 1:-1, :]


# ---------------------------------------------------------------------------
# pointwise operators


def a1_apply(f: Field, p) -> np.ndarray:
    """Second difference in x at grid index ``p``."""
    f.spec.check_point(p, x_interior=True)
    ix, iy, it = p
    v = f.values[it, iy]
    return (v[ix + 1] - 2.0 * v[ix] + v[ix - 1]) / f.spec.delta**2


def a2_apply(f: Field, p) -> np.ndarray:
    """Second difference in y at grid index ``p``."""
    f.spec.check_point(p, y_interior=True)
    ix, iy, it = p
    v = f.values[it, :, ix]
    return (v[iy + 1] - 2.0 * v[iy] + v[iy - 1]) / f.spec.sigma**2


def b_apply(f: Field, p) -> np.ndarray:
    """Forward difference in t at grid index ``p``; undefined on the last level."""
    f.spec.check_point(p, t_forward=True)
    ix, iy, it = p
    return (f.values[it + 1, iy, ix] - f.values[it, iy, ix]) / f.spec.h


def laplacian5(f: Field, p) -> np.ndarray:
    """Five-point Laplacian ``A1 f + A2 f`` at ``p``."""
    return a1_apply(f, p) + a2_apply(f, p)


# ---------------------------------------------------------------------------
# whole-array operators on (nt, ny, nx, n) arrays, restricted to where defined


def a1_interior(values: np.ndarray, delta: float) -> np.ndarray:
    """``A1`` at every point with x-neighbours; shape ``(nt, ny, nx-2, n)``."""
    return (values[:, :, 2:] - 2.0 * values[:, :, 1:-1] + values[:, :, :-2]) / delta**2


def a2_interior(values: np.ndarray, sigma: float) -> np.ndarray:
    """``A2`` at every point with y-neighbours; shape ``(nt, ny-2, nx, n)``."""
    return (values[:, 2:] - 2.0 * values[:, 1:-1] + values[:, :-2]) / sigma**2


def laplacian_interior(values: np.ndarray, delta: float, sigma: float) -> np.ndarray:
    """Five-point Laplacian at spatially interior points; shape ``(nt, ny-2, nx-2, n)``."""
    return a1_interior(values, delta)[:, 1:-1] + a2_interior(values, sigma)[:, :, 1:-1]


def forward_difference_t(values: np.ndarray, h: float) -> np.ndarray:
    """``B`` on levels ``0 .. nt-2``; shape ``(nt-1, ...)``."""
    return (values[1:] - values[:-1]) / h


def velocity(u: Field) -> np.ndarray:
    """``B u - A1 u - A2 u`` at interior points on levels ``0 .. nt-2``.

    Shape ``(nt-1, ny-2, nx-2, n)``.
    """
    s = u.spec
    bu = forward_difference_t(u.values, s.h)[:, 1:-1, 1:-1]
    return bu - laplacian_interior(u.values[:-1], s.delta, s.sigma)


# ---------------------------------------------------------------------------
# boundary data


@dataclass
class BoundaryData:
    """Samples of the initial and lateral boundary data.

    ``alpha`` has shape ``(ny, nx, n)`` (face t = 0), ``beta0``/``betaS`` have
    shape ``(nt, nx, n)`` (faces y = 0 and y = S), ``gamma0``/``gammaL`` have
    shape ``(nt, ny, n)`` (faces x = 0 and x = L).
    """

    alpha: np.ndarray
    beta0: np.ndarray
    betaS: np.ndarray
    gamma0: np.ndarray
    gammaL: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta0", "betaS", "gamma0", "gammaL"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "BoundaryData":
        return cls.from_field(Field.zeros(spec))

    @classmethod
    def from_field(cls, f: Field) -> "BoundaryData":
        v = f.values
        return cls(v[0].copy(), v[:, 0].copy(), v[:, -1].copy(),
                   v[:, :, 0].copy(), v[:, :, -1].copy())

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable) -> "BoundaryData":
        """Sample a function ``fn(x, y, t)`` on all five faces (edges agree automatically)."""
        return cls.from_field(Field.from_function(spec, fn))

    def check_shapes(self, spec: GridSpec):
        n = spec.n
        expected = {
            "alpha": (spec.ny, spec.nx, n),
            "beta0": (spec.nt, spec.nx, n),
            "betaS": (spec.nt, spec.nx, n),
            "gamma0": (spec.nt, spec.ny, n),
            "gammaL": (spec.nt, spec.ny, n),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"boundary face {name} has shape {got}, expected {shape}")

    def edge_mismatch(self) -> float:
        """Largest disagreement between faces along shared edges."""
        pairs = [
            (self.alpha[0], self.beta0[0]),
            (self.alpha[-1], self.betaS[0]),
            (self.alpha[:, 0], self.gamma0[0]),
            (self.alpha[:, -1], self.gammaL[0]),
            (self.beta0[:, 0], self.gamma0[:, 0]),
            (self.beta0[:, -1], self.gammaL[:, 0]),
            (self.betaS[:, 0], self.gamma0[:, -1]),
            (self.betaS[:, -1], self.gammaL[:, -1]),
        ]
        return max(float(np.max(np.abs(a - b))) for a, b in pairs)

    def validate(self, spec: GridSpec):
        self.check_shapes(spec)
        mismatch = self.edge_mismatch()
        if mismatch > EDGE_TOL:
            raise ShapeError(f"boundary faces disagree on a shared edge by {mismatch:.3e}")


def apply_boundary(f: Field, b: BoundaryData) -> Field:
    """Return a copy of ``f`` with all five faces overwritten by ``b``.

    Where faces meet, the t = 0 face wins over the y-faces, which win over
    the x-faces.
    """
    b.check_shapes(f.spec)
    v = f.values.copy()
    write_boundary(v, b)
    return Field(f.spec, v)


def write_boundary(v: np.ndarray, b: BoundaryData, level: int | None = None):
    """Overwrite faces of a raw ``(nt, ny, nx, n)`` array in place.

    With ``level`` given only that time level's lateral faces are written (and
    the t = 0 face when ``level == 0``).
    """
    sl = slice(None) if level is None else slice(level, level + 1)
    v[sl, :, 0] = b.gamma0[sl]
    v[sl, :, -1] = b.gammaL[sl]
    v[sl, 0, :] = b.beta0[sl]
    v[sl, -1, :] = b.betaS[sl]
    if level is None or level == 0:
        v[0] = b.alpha


def boundary_mismatch(f: Field, b: BoundaryData):
    """Max-abs difference between ``f`` and ``b`` over all faces, with the worst point."""
    ref = apply_boundary(f, b).values
    diff = np.max(np.abs(f.values - ref), axis=-1)
    idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
    it, iy, ix = (int(i) for i in idx)
    return float(diff[it, iy, ix]), (ix, iy, it)


# ---------------------------------------------------------------------------
# CSV tables


def fmt(x: float) -> str:
    """Round-trippable float formatting used for every numeric output."""
    return format(float(x) + 0.0, ".17g")  # + 0.0 folds -0.0 into 0.0


def _write_rows(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(c) for c in r])


def field_to_csv(f: Field, stream=None, prefix: str = "u") -> str | None:
    """Write a field as CSV with header ``x,y,t,u_1..u_n`` in ``(t, y, x)`` order."""
    s = f.spec
    header = ["x", "y", "t"] + [f"{prefix}_{i + 1}" for i in range(s.n)]

    def rows():
        for it in range(s.nt):
            for iy in range(s.ny):
                for ix in range(s.nx):
                    yield (ix * s.delta, iy * s.sigma, it * s.h, *f.values[it, iy, ix])

    if stream is None:
        buf = io.StringIO()
        _write_rows(buf, header, rows())
        return buf.getvalue()
    _write_rows(stream, header, rows())
    return None


def read_grid_table(text: str, spec: GridSpec, width: int):
    """Parse an ``x,y,t,c_1..c_width`` CSV table into ``{(ix, iy, it): vector}``."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV table") from None
    if [h.strip() for h in header[:3]] != ["x", "y", "t"] or len(header) != 3 + width:
        raise ParseError(f"CSV header {header!r} does not match x,y,t plus {width} columns")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3 + width:
            raise ParseError(f"line {lineno}: expected {3 + width} columns, got {len(row)}")
        try:
            nums = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        ix = int(round(nums[0] / spec.delta))
        iy = int(round(nums[1] / spec.sigma))
        it = int(round(nums[2] / spec.h))
        if not (0 <= ix < spec.nx and 0 <= iy < spec.ny and 0 <= it < spec.nt):
            raise ParseError(f"line {lineno}: point ({nums[0]}, {nums[1]}, {nums[2]}) off grid")
        out[(ix, iy, it)] = np.array(nums[3:])
    return out


def field_from_csv(text: str, spec: GridSpec) -> Field:
    """Inverse of :func:`field_to_csv`; every grid point must be present."""
    table = read_grid_table(text, spec, spec.n)
    if len(table) != spec.nx * spec.ny * spec.nt:
        raise ParseError(f"field CSV has {len(table)} points, grid has "
                         f"{spec.nx * spec.ny * spec.nt}")
    v = np.empty(spec.shape)
    for (ix, iy, it), vec in table.items():
        v[it, iy, ix] = vec
    return Field(spec, v)
