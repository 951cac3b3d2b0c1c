"""Residual bookkeeping shared by the classification and theorem checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jet import Jet

DEFAULT_TOLERANCE = 1e-7
DEFAULT_FLOOR = 1e-12
NONZERO_THRESHOLD = 1e-4


def max_abs(t) -> float:
    """Largest |entry| of the point value of a jet, array or scalar."""
    if isinstance(t, Jet):
        t = t.value()
    a = np.asarray(t, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class Residual:
    """An absolute residual together with the scale it is judged against.

    ``relative`` divides by the scale, never by less than ``floor``. A residual
    passes at tolerance ``tol`` when it is below ``tol * scale`` or below the
    absolute floor, so exact zeros of vanishing tensors still pass.
    """

    absolute: float
    scale: float
    floor: float = DEFAULT_FLOOR

    @property
    def relative(self) -> float:
        return self.absolute / max(self.scale, self.floor)

    def passes(self, tol: float) -> bool:
        return self.absolute <= self.floor or self.relative <= tol

    def to_data(self) -> dict:
        return {"absolute": self.absolute, "scale": self.scale, "relative": self.relative}


def residual(diff, *scales, floor: float = DEFAULT_FLOOR) -> Residual:
    """Residual of ``diff`` judged against the largest of ``scales``."""
    scale = max((max_abs(s) if not isinstance(s, (int, float)) else float(s)) for s in scales) \
        if scales else 0.0
    return Residual(max_abs(diff), scale, floor)


def all_below(values, floor: float = DEFAULT_FLOOR) -> bool:
    return all(max_abs(v) <= floor for v in values)


PASSING = ("pass", "inconclusive", "vacuous", "hypothesis_not_met")


@dataclass
class CheckResult:
    """Outcome of one identity or theorem check at one point.

    ``status`` is one of pass, fail, inconclusive (every participating tensor
    is below the floor), vacuous (the premise holds trivially) or
    hypothesis_not_met (the check does not apply to this input).
    """

    name: str
    status: str
    residuals: dict
    tolerance: float
    details: dict | None = None

    @property
    def passed(self) -> bool:
        return self.status in PASSING

    @property
    def relative(self) -> float:
        return max((r.relative for r in self.residuals.values()), default=0.0)

    def to_data(self) -> dict:
        out = {"name": self.name, "status": self.status, "tolerance": self.tolerance,
               "relative": self.relative,
               "residuals": {k: r.to_data() for k, r in self.residuals.items()}}
        if self.details:
            out["details"] = self.details
        return out


def judge(name: str, residuals: dict, tol: float, details: dict | None = None,
          status: str | None = None) -> CheckResult:
    """Pass/fail from residuals unless a status is forced; all-zero scales are inconclusive."""
    if status is None:
        if all(r.scale <= r.floor and r.absolute <= r.floor for r in residuals.values()):
            status = "inconclusive"
        else:
            status = "pass" if all(r.passes(tol) for r in residuals.values()) else "fail"
    return CheckResult(name, status, residuals, tol, details)
