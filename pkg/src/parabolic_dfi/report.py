"""Pass/fail reports shared by the feasibility, adjoint and certificate checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import fmt


@dataclass
class Condition:
    name: str
    max_violation: float
    worst_point: tuple | None
    passed: bool
    tol: float

    def point_str(self) -> str:
        if self.worst_point is None:
            return "-"
        return "(" + ",".join(str(int(i)) for i in self.worst_point) + ")"


@dataclass
class VerifyReport:
    """Ordered list of checked conditions; overall pass is their conjunction."""

    conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def add(self, name, max_violation, worst_point, tol, passed=None) -> Condition:
        max_violation = float(max_violation)
        if passed is None:
            passed = max_violation <= tol
        c = Condition(name, max_violation, worst_point, bool(passed), float(tol))
        self.conditions.append(c)
        return c

    def extend(self, other: "VerifyReport", prefix: str = ""):
        for c in other.conditions:
            self.conditions.append(Condition(prefix + c.name, c.max_violation, c.worst_point,
                                             c.passed, c.tol))
        self.notes.extend(other.notes)

    def __getitem__(self, name) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return any(c.name == name for c in self.conditions)

    def to_text(self) -> str:
        lines = []
        for c in self.conditions:
            lines.append(f"{c.name}: {'PASS' if c.passed else 'FAIL'} "
                         f"max_violation={fmt(c.max_violation)} worst_point={c.point_str()} "
                         f"tol={fmt(c.tol)}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        """One condition per line: ``name,max_violation,worst_point,pass``."""
        lines = ["name,max_violation,worst_point,pass"]
        for c in self.conditions:
            pt = "" if c.worst_point is None else " ".join(str(int(i)) for i in c.worst_point)
            lines.append(f"{c.name},{fmt(c.max_violation)},{pt},{str(c.passed).lower()}")
        return "\n".join(lines) + "\n"


def worst_interior(values, level_offset=0):
    """Max of a ``(levels, ny-2, nx-2)`` array and its grid index ``(ix, iy, it)``.

    The first maximum in ``(t, y, x)`` order wins.  Returns ``(0.0, None)``
    for an empty array.
    """
    if values.size == 0:
        return 0.0, None
    flat = int(values.argmax())
    k, iy, ix = (int(i) for i in np.unravel_index(flat, values.shape))
    return float(values.flat[flat]), (ix + 1, iy + 1, k + level_offset)

