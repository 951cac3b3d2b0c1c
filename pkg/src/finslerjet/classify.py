"""Numerical membership tests for the projective classes of Finsler metrics.

Every predicate returns residuals and fitted quantities, never a bare boolean.
Residuals are judged relative to a scale made of the terms the tested tensor
is assembled from (so that e.g. W = 0 on a metric with R = 0 still counts as
strong evidence), with an absolute floor for exact zeros.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .checks import (DEFAULT_FLOOR, DEFAULT_TOLERANCE, NONZERO_THRESHOLD, Residual, max_abs,
                     residual)
from .curvature import CurvatureBundle
from .jet import JetConfig, einsum
from .metrics import MetricSpec
from .sampling import Sampler, sample_points

FLAGS = ("berwald", "weakly_berwald", "isotropic_mean_berwald", "douglas", "weyl",
         "w_quadratic", "weakly_weyl", "gdw", "generalized_weakly_weyl")

IMPLICATIONS = (
    ("berwald", "douglas"),
    ("berwald", "weakly_berwald"),
    ("weyl", "weakly_weyl"),
    ("w_quadratic", "weakly_weyl"),
    ("weakly_weyl", "generalized_weakly_weyl"),
    ("weakly_weyl", "gdw"),
)

WORKERS_ENV = "FINSLERJET_WORKERS"
MIN_SAMPLES = 5


@dataclass(frozen=True)
class Tolerances:
    default: float = DEFAULT_TOLERANCE
    floor: float = DEFAULT_FLOOR
    nonzero: float = NONZERO_THRESHOLD
    component_floor: float = 1e-9
    per_flag: tuple = ()  # ((name, tol), ...) kept hashable

    def for_flag(self, name: str) -> float:
        return dict(self.per_flag).get(name, self.default)

    def with_overrides(self, overrides: dict) -> "Tolerances":
        merged = dict(self.per_flag)
        merged.update(overrides)
        return Tolerances(self.default, self.floor, self.nonzero, self.component_floor,
                          tuple(sorted(merged.items())))

    def to_data(self) -> dict:
        return {"default": self.default, "floor": self.floor, "nonzero": self.nonzero,
                "component_floor": self.component_floor, "per_flag": dict(self.per_flag)}


@dataclass
class FlagResult:
    name: str
    passed: bool
    residuals: dict
    vacuous: bool = False

    @property
    def relative(self) -> float:
        return max((r.relative for r in self.residuals.values()), default=0.0)

    def to_data(self) -> dict:
        return {"passed": self.passed, "vacuous": self.vacuous, "relative": self.relative,
                "residuals": {k: r.to_data() for k, r in self.residuals.items()}}


@dataclass
class PointRecord:
    x: np.ndarray
    y: np.ndarray
    flags: dict
    fitted: dict

    def flag(self, name: str) -> bool:
        return self.flags[name].passed

    def to_data(self) -> dict:
        return {"x": [float(v) for v in self.x], "y": [float(v) for v in self.y],
                "flags": {k: self.flags[k].to_data() for k in FLAGS if k in self.flags},
                "fitted": _plain(self.fitted)}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _flag(name, tols: Tolerances, residuals: dict, vacuous=False) -> FlagResult:
    tol = tols.for_flag(name)
    ok = all(r.passes(tol) for r in residuals.values())
    return FlagResult(name, ok, residuals, vacuous)


# -- scales --------------------------------------------------------------------

def riemann_scale(b: CurvatureBundle) -> float:
    """Largest of the four terms R^i_k is assembled from."""
    return max(max_abs(t) for t in b.R_terms)


# -- fits --------------------------------------------------------------------------

def fit_isotropic_mean_berwald(b: CurvatureBundle):
    """c in E_ij = (n+1)/2 c F^-1 h_ij, by projection of E onto h."""
    E, h, F, n = b.E.value(), b.angular.value(), b.F.value(), b.n
    coef = float(np.sum(E * h) / np.sum(h * h))
    c = coef * 2.0 * F / (n + 1)
    return c, E - coef * h


def extract_omega(b: CurvatureBundle):
    """omega_jkl = Wt_j^i_kl l_i / F as a jet, with the residual tensor Wt - omega y."""
    omega = einsum("jikl,i->jkl", b.Wt, b.ell) / b.F
    resid = b.Wt - einsum("jkl,i->jikl", omega, b.y)
    return omega, resid


def fit_mu(omega0: np.ndarray, Fomega: np.ndarray, component_floor: float):
    """Least-squares mu in omega_|0 + mu F omega = 0, plus componentwise estimates."""
    scale = np.max(np.abs(Fomega)) if Fomega.size else 0.0
    denom = float(np.sum(Fomega * Fomega))
    if scale == 0 or denom == 0:
        return None
    mu = -float(np.sum(omega0 * Fomega)) / denom
    mask = np.abs(Fomega) >= component_floor * scale
    est = -omega0[mask] / Fomega[mask]
    spread = float(np.max(np.abs(est - mu))) if est.size else 0.0
    return {"mu": mu, "spread": spread, "components": int(est.size)}


def fit_gww(Wt0: np.ndarray, FWt: np.ndarray, Wt: np.ndarray, y: np.ndarray):
    """Least-squares (mu, lambda_r) in Wt_|0 + mu F Wt - lambda_r Wt_j^r_kl y^i = 0."""
    n = y.shape[0]
    cols = [FWt.ravel()]
    for r in range(n):
        cols.append(-np.einsum("jkl,i->jikl", Wt[:, r], y).ravel())
    A = np.column_stack(cols)
    sol, _, rank, _ = np.linalg.lstsq(A, -Wt0.ravel(), rcond=None)
    post = (Wt0.ravel() + A @ sol).reshape(Wt0.shape)
    return {"mu": float(sol[0]), "lambda": sol[1:].tolist(), "rank": int(rank)}, post


# -- per-point classification ------------------------------------------------------

def classify_point(b: CurvatureBundle, tolerances: Tolerances | None = None) -> PointRecord:
    tols = tolerances or Tolerances()
    fl = tols.floor
    flags, fitted = {}, {}
    gamma_scale = max_abs(b.Gamma)
    B_scale = max_abs(b.B)

    flags["berwald"] = _flag("berwald", tols, {"B": residual(b.B, gamma_scale, floor=fl)})
    flags["weakly_berwald"] = _flag("weakly_berwald", tols,
                                    {"E": residual(b.E, B_scale, floor=fl)})
    flags["douglas"] = _flag("douglas", tols, {"D": residual(b.D, B_scale, floor=fl)})

    c, off = fit_isotropic_mean_berwald(b)
    fitted["c"] = c
    flags["isotropic_mean_berwald"] = _flag(
        "isotropic_mean_berwald", tols, {"E_off_h": residual(off, b.E, B_scale, floor=fl)})

    # Weyl family
    r_scale = riemann_scale(b)
    W = b.W
    flags["weyl"] = _flag("weyl", tols, {"W": residual(W, r_scale, floor=fl)})

    d3W = W.grad_y().grad_y().grad_y()
    w_scale = max(max_abs(W), r_scale)
    Wt_res = residual(b.Wt, max_abs(b.Wjikl), w_scale, floor=fl)
    flags["w_quadratic"] = _flag("w_quadratic", tols, {
        "third_y_derivative": residual(d3W, w_scale, floor=fl), "Wt": Wt_res})
    Omega = W.grad_y().grad_y().transpose(2, 0, 1, 3) * -0.5  # [l, i, k, m]
    fitted["Omega"] = Omega.value()

    wt_zero = Wt_res.passes(tols.for_flag("weakly_weyl"))
    omega, omega_res = extract_omega(b)
    fitted["omega"] = omega.value()
    ww = {"Wt_minus_omega_y": residual(omega_res, b.Wt, max_abs(b.Wjikl), w_scale, floor=fl)}
    omega0 = b.horizontal_0(omega, "ddd").value()
    Fomega = b.F.value() * omega.value()
    mu = None if wt_zero else fit_mu(omega0, Fomega, tols.component_floor)
    if mu is not None:
        fitted["mu"] = mu
        ww["mu_relation"] = residual(omega0 + mu["mu"] * Fomega, omega0, mu["mu"] * Fomega,
                                     b.horizontal_0_scale(omega, "ddd"), floor=fl)
    flags["weakly_weyl"] = _flag("weakly_weyl", tols, ww, vacuous=mu is None)

    D0 = b.D0
    T = einsum("jmkl,m->jkl", D0, b.ell) / b.F
    fitted["T"] = T.value()
    flags["gdw"] = _flag("gdw", tols, {
        "D0_minus_T_y": residual(D0 - einsum("jkl,i->jikl", T, b.y), D0,
                                 b.horizontal_0_scale(b.D, "dudd"),
                                 b.horizontal_0_scale(b.B, "dudd"), floor=fl)})

    Wt0 = b.Wt0.value()
    FWt = b.F.value() * b.Wt.value()
    if wt_zero:
        flags["generalized_weakly_weyl"] = _flag(
            "generalized_weakly_weyl", tols, {"Wt": Wt_res}, vacuous=True)
    else:
        fit, post = fit_gww(Wt0, FWt, b.Wt.value(), b.y0)
        fitted["gww"] = fit
        flags["generalized_weakly_weyl"] = _flag(
            "generalized_weakly_weyl", tols,
            {"post_fit": residual(post, Wt0, FWt, b.horizontal_0_scale(b.Wt, "dudd"),
                                  floor=fl)})
    return PointRecord(b.x0, b.y0, flags, fitted)


# -- aggregation ---------------------------------------------------------------------

@dataclass
class ClassificationReport:
    metric: dict
    sampler: dict
    tolerances: dict
    records: list = field(default_factory=list)

    def verdict(self, name: str) -> bool:
        return all(r.flag(name) for r in self.records)

    def decisively_fails(self, name: str, threshold: float = NONZERO_THRESHOLD) -> bool:
        """True when some point shows a relative residual above ``threshold``."""
        return any(r.flags[name].relative >= threshold for r in self.records)

    def vacuous(self, name: str) -> bool:
        return all(r.flags[name].vacuous for r in self.records)

    @property
    def verdicts(self) -> dict:
        return {k: self.verdict(k) for k in FLAGS}

    def implications(self) -> list:
        v = self.verdicts
        return [{"if": a, "then": c, "consistent": (not v[a]) or v[c]} for a, c in IMPLICATIONS]

    @property
    def consistent(self) -> bool:
        return all(i["consistent"] for i in self.implications())

    def summary(self) -> dict:
        out = {}
        for k in FLAGS:
            rel = [r.flags[k].relative for r in self.records]
            out[k] = {"verdict": self.verdict(k), "vacuous": self.vacuous(k),
                      "decisive_failure": self.decisively_fails(k),
                      "min": min(rel), "max": max(rel), "mean": float(np.mean(rel))}
        return out

    def to_data(self) -> dict:
        return {"metric": self.metric, "sampler": self.sampler, "tolerances": self.tolerances,
                "summary": self.summary(), "implications": self.implications(),
                "consistent": self.consistent,
                "points": [r.to_data() for r in self.records]}


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Order-preserving map, in a process pool when more than one worker is configured."""
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _classify_job(args):
    spec, x, y, config, tols = args
    return classify_point(CurvatureBundle.from_metric(spec, x, y, config), tols)


def classify_metric(spec: MetricSpec, sampler: Sampler | None = None,
                    tolerances: Tolerances | None = None, config: JetConfig | None = None,
                    minimum: int = MIN_SAMPLES, workers: int | None = None
                    ) -> ClassificationReport:
    sampler = sampler or Sampler()
    tols = tolerances or Tolerances()
    points = sample_points(spec, sampler, minimum=minimum)
    jobs = [(spec, x, y, config, tols) for x, y in points]
    records = parallel_map(_classify_job, jobs, workers)
    return ClassificationReport(spec.to_data(), sampler.to_data(), tols.to_data(), records)
