"""Command-line front end.

Verbs: ``simulate``, ``solve``, ``verify``, ``plot`` and ``oracle``.  Exit
codes: 0 success, 1 verification failure, 2 usage or parse error, 3 numeric or
capability error.  Output files go to ``--out-dir``, else to the directory in
``PARABOLIC_DFI_OUT_DIR``, else to the current directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .certificate import (Certificate, Tolerances, check_adjoint_conditions,
                          check_maximum_principle, check_polyhedral_conditions,
                          sufficiency_sampling)
from .convex import FiniteSet
from .dynamics import CflWarning, ControlField, cfl_margin, check_feasible, simulate
from .errors import (CapabilityError, ConditioningError, DfiError, FeasibilityError,
                     InfeasibleError, ParseError, PreconditionError, ShapeError,
                     UnboundedError)
from .grid import Field, field_from_csv, field_to_csv, fmt
from .maps import LinearControl, Polyhedral
from .optimizer import (start_control, brute_force, solve_frank_wolfe,
                        solve_polyhedral_lp)
from .problem_io import load_problem
from .report import VerifyReport

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
OUT_DIR_ENV = "PARABOLIC_DFI_OUT_DIR"
_TOL_NAMES = {"inclusion": "inclusion_tol", "boundary": "boundary_tol",
              "argmax": "argmax_tol", "complementarity": "complementarity_tol"}


class UsageError(DfiError):
    pass


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def _apply_tol_overrides(tols: Tolerances, overrides) -> Tolerances:
    for item in overrides or []:
        if "=" in item:
            name, _, val = item.partition("=")
            if name not in _TOL_NAMES:
                raise UsageError(f"--tol: unknown tolerance {name!r} "
                                 f"(expected one of {', '.join(_TOL_NAMES)})")
            tols = replace(tols, **{_TOL_NAMES[name]: _as_float(val)})
        else:
            tols = Tolerances.uniform(_as_float(item))
    return tols


def _as_float(s):
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"expected a number, got {s!r}") from None


def _summary(pairs) -> str:
    return "".join(f"{k}={fmt(v) if isinstance(v, float) else v}\n" for k, v in pairs)


def _control_dim(problem):
    return problem.F.r if isinstance(problem.F, LinearControl) else problem.spec.n


# ---------------------------------------------------------------------------
# verbs


def cmd_simulate(args) -> int:
    pf = load_problem(args.problem)
    P = pf.problem
    if args.control:
        w = ControlField.from_csv(_read(args.control), P.spec, _control_dim(P))
    elif hasattr(P.F, "U"):
        w = start_control(P.F.U, P.spec)
    else:
        w = ControlField.zeros(P.spec, P.spec.n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CflWarning)
        state = simulate(P.F, P.b, w, P.spec)
    out = _out_dir(args)
    _write(out / "state.csv", field_to_csv(state))
    rep = check_feasible(P.F, P.b, state, pf.feasibility_tol)
    print(f"cfl_margin={fmt(cfl_margin(P.spec))}")
    print(rep.to_text(), end="")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _choose_method(pf, override):
    method = override or pf.solver.method
    F = pf.problem.F
    if method is None:
        method = "frank_wolfe" if isinstance(F, LinearControl) else \
            "lp" if isinstance(F, Polyhedral) else None
    if method is None:
        raise UsageError(f"no default solver for a {type(F).__name__} map; set [solver] method")
    if method == "frank_wolfe" and not isinstance(F, LinearControl):
        raise UsageError(f"frank_wolfe needs a linear_control map, got {type(F).__name__}")
    if method == "lp" and not isinstance(F, Polyhedral):
        raise UsageError(f"lp needs a polyhedral map, got {type(F).__name__}")
    return method


def _alphabet(pf, raw):
    if raw:
        try:
            return FiniteSet(json.loads(raw))
        except (ValueError, TypeError) as exc:
            raise UsageError(f"--alphabet: {exc}") from None
    if pf.solver.alphabet is not None:
        return pf.solver.alphabet
    r = _control_dim(pf.problem)
    if r != 1:
        raise UsageError("brute force needs an alphabet for controls of dimension > 1")
    return FiniteSet([[-1.0], [0.0], [1.0]])


def _write_solution(out: Path, res, method, spec, extra=()):
    _write(out / "control.csv", res.control.to_csv())
    _write(out / "state.csv", field_to_csv(res.state))
    if res.ustar is not None:
        _write(out / "adjoint.csv", field_to_csv(res.ustar, prefix="ustar"))
    if res.q is not None:
        _write(out / "q.csv", _q_to_csv(res.q, spec))
    pairs = [("method", method), ("objective", res.objective), ("iterations", res.iterations),
             ("gap", res.gap), ("cfl_margin", cfl_margin(spec)), *extra]
    pairs += [("warning", w) for w in res.warnings]
    text = _summary(pairs)
    _write(out / "summary.txt", text)
    print(text, end="")


def _q_to_csv(q, spec) -> str:
    s = replace(spec, n=q.shape[-1]) if q.shape[-1] != spec.n else spec
    return field_to_csv(Field(s, q), prefix="q")


def cmd_solve(args) -> int:
    pf = load_problem(args.problem)
    method = _choose_method(pf, args.method)
    P = pf.problem
    if method == "frank_wolfe":
        iters = args.max_iters if args.max_iters is not None else pf.solver.max_iters
        res = solve_frank_wolfe(P, iters, pf.solver.gap_tol)
        converged = res.gap <= pf.solver.gap_tol
    elif method == "lp":
        res = solve_polyhedral_lp(P)
        converged = True
    else:
        res = brute_force(P, _alphabet(pf, getattr(args, "alphabet", None)))
        converged = True
    _write_solution(_out_dir(args), res, method, P.spec,
                    [("converged", str(converged).lower())])
    return EXIT_OK if converged else EXIT_FAIL


def cmd_oracle(args) -> int:
    pf = load_problem(args.problem)
    res = brute_force(pf.problem, _alphabet(pf, args.alphabet))
    _write_solution(_out_dir(args), res, "brute_force", pf.problem.spec)
    return EXIT_OK


def cmd_verify(args) -> int:
    pf = load_problem(args.problem)
    P = pf.problem
    spec = P.spec
    tols = _apply_tol_overrides(pf.tolerances, args.tol)
    state = field_from_csv(_read(args.state), spec)
    ustar = field_from_csv(_read(args.adjoint), spec)
    q = None
    if args.q:
        if not isinstance(P.F, Polyhedral):
            raise UsageError("--q is only meaningful for polyhedral maps")
        qspec = replace(spec, n=P.F.s)
        q = field_from_csv(_read(args.q), qspec).values
    w = None
    if args.control:
        w = ControlField.from_csv(_read(args.control), spec, _control_dim(P))
    cert = Certificate(state, ustar, q, 1, tols, w)

    rep = VerifyReport()
    rep.extend(check_feasible(P.F, P.b, state, pf.feasibility_tol), prefix="state_")
    if rep.passed:
        rep.extend(check_adjoint_conditions(P.F, P.g, cert, spec))
        if isinstance(P.F, LinearControl):
            try:
                rep.extend(check_maximum_principle(P.F.B, P.F.U, cert, A=P.F.A))
            except ValueError as exc:
                rep.notes.append(f"maximum principle skipped: {exc}")
        if q is not None:
            rep.extend(check_polyhedral_conditions(P.F, P.g, cert, spec))
        samples = args.samples if args.samples is not None else pf.solver.samples
        seed = args.seed if args.seed is not None else pf.solver.seed
        if rep.passed and samples > 0:
            rep.extend(sufficiency_sampling(P, cert, samples, seed))
    else:
        rep.notes.append("state is infeasible; certificate conditions not evaluated")
    out = _out_dir(args)
    _write(out / "report.txt", rep.to_text())
    _write(out / "report.csv", rep.to_records())
    print(rep.to_text(), end="")
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# plotting


def _read_slices(text: str):
    """Parse a field CSV into sorted coordinate axes and a value array ``(nt, ny, nx, n)``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0][:3]] != ["x", "y", "t"] or len(rows[0]) < 4:
        raise ParseError("field CSV must start with an x,y,t,... header")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ParseError(f"field CSV: {exc}") from None
    if data.size == 0:
        raise ParseError("field CSV has no rows")
    axes = [np.unique(data[:, i]) for i in range(3)]
    shape = tuple(len(a) for a in reversed(axes)) + (data.shape[1] - 3,)
    if int(np.prod(shape[:3])) != len(data):
        raise ParseError("field CSV does not describe a full tensor grid")
    vals = np.empty(shape)
    ix = np.searchsorted(axes[0], data[:, 0])
    iy = np.searchsorted(axes[1], data[:, 1])
    it = np.searchsorted(axes[2], data[:, 2])
    vals[it, iy, ix] = data[:, 3:]
    return axes, vals


def _color(frac: float) -> str:
    # white -> dark red
    r = 255 - int(round(frac * (255 - 165)))
    gb = 255 - int(round(frac * 255))
    return f"#{r:02x}{gb:02x}{gb:02x}"


def render_svg(slice2d: np.ndarray, title: str, cell: int = 24) -> str:
    """Heatmap of a ``(ny, nx)`` array; row ``ny-1`` is drawn at the top."""
    ny, nx = slice2d.shape
    lo, hi = float(np.min(slice2d)), float(np.max(slice2d))
    span = hi - lo
    width, height = nx * cell + 20, ny * cell + 60
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="10" y="18" font-size="12">{title}</text>']
    for iy in range(ny):
        for ix in range(nx):
            frac = 0.0 if span == 0 else (float(slice2d[iy, ix]) - lo) / span
            parts.append(f'<rect x="{10 + ix * cell}" y="{26 + (ny - 1 - iy) * cell}" '
                         f'width="{cell}" height="{cell}" fill="{_color(frac)}"/>')
    parts.append(f'<text x="10" y="{height - 12}" font-size="12">min={fmt(lo)} max={fmt(hi)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args) -> int:
    axes, vals = _read_slices(_read(args.field))
    nt, n = vals.shape[0], vals.shape[-1]
    if not 1 <= args.component <= n:
        raise UsageError(f"--component must lie in 1..{n}")
    out = _out_dir(args)
    stem = Path(args.field).stem
    for k in args.t_index:
        if not 0 <= k < nt:
            raise UsageError(f"t index {k} out of range 0..{nt - 1}")
        sl = vals[k, :, :, args.component - 1]
        name = out / f"{stem}_t{k}.svg"
        _write(name, render_svg(sl, f"{stem} t={fmt(axes[2][k])} component {args.component}"))
        print(f"{name} min={fmt(np.min(sl))} max={fmt(np.max(sl))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parabolic-dfi",
                                description="Discrete optimal control of parabolic "
                                            "differential inclusions.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
        return sp

    sp = common(sub.add_parser("simulate", help="march a state from a control table"))
    sp.add_argument("problem")
    sp.add_argument("control", nargs="?", help="control CSV (default: a constant admissible control)")
    sp.set_defaults(fn=cmd_simulate)

    sp = common(sub.add_parser("solve", help="solve the problem and write the solution"))
    sp.add_argument("problem")
    sp.add_argument("--method", choices=("frank_wolfe", "lp", "brute_force"))
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--alphabet", help="JSON list of control letters for brute_force")
    sp.set_defaults(fn=cmd_solve)

    sp = common(sub.add_parser("verify", help="check an optimality certificate"))
    sp.add_argument("problem")
    sp.add_argument("state")
    sp.add_argument("adjoint")
    sp.add_argument("--q", help="multiplier CSV for polyhedral maps")
    sp.add_argument("--control", help="control CSV for the maximum principle check")
    sp.add_argument("--tol", action="append",
                    help="VALUE for all tolerances or NAME=VALUE (repeatable)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int, help="number of sufficiency samples (0 disables)")
    sp.set_defaults(fn=cmd_verify)

    sp = common(sub.add_parser("plot", help="SVG heatmaps of time slices of a field CSV"))
    sp.add_argument("field")
    sp.add_argument("--t-index", type=int, action="append", required=True)
    sp.add_argument("--component", type=int, default=1)
    sp.set_defaults(fn=cmd_plot)

    sp = common(sub.add_parser("oracle", help="exhaustive search over a control alphabet"))
    sp.add_argument("problem")
    sp.add_argument("--alphabet", help="JSON list of control letters")
    sp.set_defaults(fn=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except (ParseError, UsageError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FeasibilityError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except PreconditionError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (CapabilityError, ConditioningError, InfeasibleError, UnboundedError, DfiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
