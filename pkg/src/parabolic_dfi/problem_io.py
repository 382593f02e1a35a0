"""Plain-text problem files.

A problem file is an INI-style document with the sections ``[grid]``,
``[map]``, ``[objective]``, ``[boundary]``, ``[solver]`` and ``[tolerances]``.
Matrices and vectors are JSON arrays; boundary faces are ``zero``,
``const:<v1>,<v2>,..`` or an inline CSV table (``x,y,t,v_1..v_n`` header)
written as indented continuation lines.  Unknown sections and keys are
rejected.  Example::

    [grid]
    L = 1
    S = 1
    T = 1
    delta = 0.1
    sigma = 0.1
    h = 0.002

    [map]
    variant = linear_control
    A = [[0]]
    B = [[1]]
    U = box
    U_lower = [-1]
    U_upper = [1]

    [objective]
    variant = linear
    c = [1]
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field

import numpy as np

from .certificate import Tolerances
from .convex import Box, FiniteSet, Polytope, Singleton
from .errors import GridError, ParseError, ShapeError
from .grid import BoundaryData, GridSpec, read_grid_table
from .maps import Constant, LinearControl, Polyhedral
from .objectives import Linear, PolyhedralMax, Quadratic
from .optimizer import Problem

_SET_KEYS = {"U", "U_lower", "U_upper", "U_C", "U_e", "U_point", "U_points"}
_KEYS = {
    "grid": {"L", "S", "T", "delta", "sigma", "h", "n"},
    "map": {"variant", "A", "B", "d"} | _SET_KEYS,
    "objective": {"variant", "c", "c_table", "Q", "a", "b"},
    "boundary": {"alpha", "beta0", "betaS", "gamma0", "gammaL"},
    "solver": {"method", "max_iters", "gap_tol", "alphabet", "seed", "samples"},
    "tolerances": {"inclusion", "boundary", "argmax", "complementarity", "feasibility"},
}
_REQUIRED = ("grid", "map", "objective")
METHODS = ("frank_wolfe", "lp", "brute_force")


@dataclass
class SolverOptions:
    method: str | None = None
    max_iters: int = 500
    gap_tol: float = 1e-6
    alphabet: FiniteSet | None = None
    seed: int = 0
    samples: int = 100


@dataclass
class ProblemFile:
    problem: Problem
    solver: SolverOptions = field(default_factory=SolverOptions)
    tolerances: Tolerances = field(default_factory=Tolerances)
    feasibility_tol: float = 1e-10


def _json(sec, key, raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"[{sec}] {key}: not a JSON value ({exc.msg})") from None


def _float(sec, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"[{sec}] {key}: expected a number, got {raw!r}") from None


def _int(sec, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"[{sec}] {key}: expected an integer, got {raw!r}") from None


def _need(sec: dict, name: str, key: str):
    if key not in sec:
        raise ParseError(f"[{name}] missing required key {key!r}")
    return sec[key]


def _parse_set(sec):
    kind = _need(sec, "map", "U")
    if kind == "box":
        return Box(_json("map", "U_lower", _need(sec, "map", "U_lower")),
                   _json("map", "U_upper", _need(sec, "map", "U_upper")))
    if kind == "polytope":
        return Polytope(_json("map", "U_C", _need(sec, "map", "U_C")),
                        _json("map", "U_e", _need(sec, "map", "U_e")))
    if kind == "singleton":
        return Singleton(_json("map", "U_point", _need(sec, "map", "U_point")))
    if kind == "finite":
        return FiniteSet(_json("map", "U_points", _need(sec, "map", "U_points")))
    raise ParseError(f"[map] U: unknown set kind {kind!r}")


def _parse_map(sec):
    variant = _need(sec, "map", "variant")
    mats = {k: _json("map", k, sec[k]) for k in ("A", "B", "d") if k in sec}
    try:
        if variant == "linear_control":
            return LinearControl(_need(mats, "map", "A"), _need(mats, "map", "B"), _parse_set(sec))
        if variant in ("polyhedral", "polyhedral_ppc"):
            ctor = Polyhedral if variant == "polyhedral" else Polyhedral.from_ppc
            return ctor(_need(mats, "map", "A"), _need(mats, "map", "B"),
                        _need(mats, "map", "d"))
        if variant == "constant":
            return Constant(_parse_set(sec))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"[map] {exc}") from None
    raise ParseError(f"[map] variant: unknown map variant {variant!r}")


def _parse_objective(sec, spec):
    variant = _need(sec, "objective", "variant")
    try:
        if variant == "zero":
            return Linear(np.zeros(spec.n))
        if variant == "linear":
            if "c_table" in sec:
                table = read_grid_table(sec["c_table"].strip(), spec, spec.n)
                c = np.full(spec.shape, np.nan)
                for (ix, iy, it), vec in table.items():
                    c[it, iy, ix] = vec
                if np.isnan(c).any():
                    raise ParseError("[objective] c_table does not cover every grid point")
                return Linear(c)
            return Linear(_json("objective", "c", _need(sec, "objective", "c")))
        if variant == "quadratic":
            c = _json("objective", "c", sec["c"]) if "c" in sec else None
            return Quadratic(_json("objective", "Q", _need(sec, "objective", "Q")), c)
        if variant == "polyhedral_max":
            return PolyhedralMax(_json("objective", "a", _need(sec, "objective", "a")),
                                 _json("objective", "b", _need(sec, "objective", "b")))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"[objective] {exc}") from None
    raise ParseError(f"[objective] variant: unknown objective variant {variant!r}")


_FACE_AXES = {
    # face -> (fixed index predicate, array shape builder, index into face array)
    "alpha": (lambda s, ix, iy, it: it == 0, lambda s: (s.ny, s.nx), lambda ix, iy, it: (iy, ix)),
    "beta0": (lambda s, ix, iy, it: iy == 0, lambda s: (s.nt, s.nx), lambda ix, iy, it: (it, ix)),
    "betaS": (lambda s, ix, iy, it: iy == s.ny - 1, lambda s: (s.nt, s.nx),
              lambda ix, iy, it: (it, ix)),
    "gamma0": (lambda s, ix, iy, it: ix == 0, lambda s: (s.nt, s.ny), lambda ix, iy, it: (it, iy)),
    "gammaL": (lambda s, ix, iy, it: ix == s.nx - 1, lambda s: (s.nt, s.ny),
               lambda ix, iy, it: (it, iy)),
}


def _parse_face(name, raw, spec):
    on_face, shape_of, where = _FACE_AXES[name]
    shape = shape_of(spec) + (spec.n,)
    raw = raw.strip()
    if raw == "zero":
        return np.zeros(shape)
    if raw.startswith("const:"):
        vals = [_float("boundary", name, v) for v in raw[len("const:"):].split(",")]
        if len(vals) not in (1, spec.n):
            raise ParseError(f"[boundary] {name}: const needs 1 or {spec.n} values")
        return np.broadcast_to(np.array(vals), shape).copy()
    try:
        table = read_grid_table(raw, spec, spec.n)
    except ParseError as exc:
        raise ParseError(f"[boundary] {name}: {exc}") from None
    out = np.full(shape, np.nan)
    for (ix, iy, it), vec in table.items():
        if not on_face(spec, ix, iy, it):
            raise ParseError(f"[boundary] {name}: point {(ix, iy, it)} is not on this face")
        out[where(ix, iy, it)] = vec
    if np.isnan(out).any():
        raise ParseError(f"[boundary] {name}: table does not cover the whole face")
    return out


def parse_problem(text: str) -> ProblemFile:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=None, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc).replace("\n", " ")) from None
    for name in cp.sections():
        if name not in _KEYS:
            raise ParseError(f"unknown section [{name}]")
        extra = set(cp[name]) - _KEYS[name]
        if extra:
            raise ParseError(f"[{name}] unknown key(s): {', '.join(sorted(extra))}")
    for name in _REQUIRED:
        if name not in cp:
            raise ParseError(f"missing section [{name}]")
    secs = {name: dict(cp[name]) if name in cp else {} for name in _KEYS}

    g = secs["grid"]
    try:
        spec = GridSpec(*(_float("grid", k, _need(g, "grid", k))
                          for k in ("L", "S", "T", "delta", "sigma", "h")),
                        n=_int("grid", "n", g.get("n", "1")))
    except GridError as exc:
        raise ParseError(f"[grid] {exc}") from None

    F = _parse_map(secs["map"])
    obj = _parse_objective(secs["objective"], spec)
    faces = {name: _parse_face(name, secs["boundary"].get(name, "zero"), spec)
             for name in _FACE_AXES}
    b = BoundaryData(**faces)
    try:
        b.validate(spec)
        problem = Problem(spec, F, obj, b)
    except (ShapeError, ValueError) as exc:
        raise ParseError(f"[boundary] {exc}") from None

    sv = secs["solver"]
    opts = SolverOptions()
    if "method" in sv:
        if sv["method"] not in METHODS:
            raise ParseError(f"[solver] method: expected one of {', '.join(METHODS)}")
        opts.method = sv["method"]
    if "max_iters" in sv:
        opts.max_iters = _int("solver", "max_iters", sv["max_iters"])
    if "gap_tol" in sv:
        opts.gap_tol = _float("solver", "gap_tol", sv["gap_tol"])
    if "alphabet" in sv:
        try:
            opts.alphabet = FiniteSet(_json("solver", "alphabet", sv["alphabet"]))
        except ValueError as exc:
            raise ParseError(f"[solver] alphabet: {exc}") from None
    if "seed" in sv:
        opts.seed = _int("solver", "seed", sv["seed"])
    if "samples" in sv:
        opts.samples = _int("solver", "samples", sv["samples"])

    tv = secs["tolerances"]
    defaults = Tolerances()
    try:
        tols = Tolerances(
            _float("tolerances", "inclusion", tv.get("inclusion", defaults.inclusion_tol)),
            _float("tolerances", "boundary", tv.get("boundary", defaults.boundary_tol)),
            _float("tolerances", "argmax", tv.get("argmax", defaults.argmax_tol)),
            _float("tolerances", "complementarity",
                   tv.get("complementarity", defaults.complementarity_tol)),
        )
    except ValueError as exc:
        raise ParseError(f"[tolerances] {exc}") from None
    feas = _float("tolerances", "feasibility", tv.get("feasibility", 1e-10))
    return ProblemFile(problem, opts, tols, feas)


def load_problem(path) -> ProblemFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_problem(text)
