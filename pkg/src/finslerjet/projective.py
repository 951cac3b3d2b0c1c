"""Projective changes G -> G + P y and the transformation laws they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .checks import CheckResult, judge, max_abs, residual
from .classify import Tolerances, classify_point, extract_omega, fit_gww, fit_mu, riemann_scale
from .curvature import CurvatureBundle, Spray
from .jet import Jet, SingularEvaluationError, einsum
from .metrics import MetricSpec, metric_from_data

HOMOGENEITY_FACTORS = (0.5, 2.0)


class ProjectiveFactorError(ValueError):
    pass


class ProjectiveFactor:
    """A positively 1-homogeneous function P(x, y)."""

    kind = "expr"

    def jet(self, spray: Spray) -> Jet:
        raise NotImplementedError

    def value(self, x, y) -> float:
        raise NotImplementedError

    def validate(self, dim: int, seed: int = 0, trials: int = 4):
        """Check P(x, t y) = t P(x, y) for t in {0.5, 2} at a few probe points."""
        rng = np.random.default_rng(seed)
        checked = 0
        for _ in range(trials * 5):
            x = rng.uniform(-0.3, 0.3, dim)
            y = rng.normal(size=dim)
            try:
                p = self.value(x, y)
                for t in HOMOGENEITY_FACTORS:
                    pt = self.value(x, t * y)
                    if abs(pt - t * p) > 1e-10 * max(abs(t * p), 1e-12):
                        raise ProjectiveFactorError(
                            f"P is not positively 1-homogeneous in y: P(x, {t} y) = {pt!r} "
                            f"but {t} P(x, y) = {t * p!r}")
            except SingularEvaluationError:
                continue
            checked += 1
            if checked >= trials:
                return self
        raise ProjectiveFactorError("could not evaluate P at any probe point")


@dataclass
class ExprFactor(ProjectiveFactor):
    expr: ex.Expr
    dim: int

    kind = "expr"

    def __post_init__(self):
        self.expr = ex.from_data(self.expr)
        if self.expr.max_index() > self.dim:
            raise ProjectiveFactorError(f"P mentions coordinates beyond dimension {self.dim}")
        self.validate(self.dim)

    def jet(self, spray: Spray) -> Jet:
        n = spray.x.shape[0]
        xs = [spray.x[k] for k in range(n)]
        ys = [spray.y[k] for k in range(n)]
        out = self.expr.evaluate(ex.coordinate_env(xs, ys))
        if not isinstance(out, Jet):
            out = Jet.constant(spray.x.config, out)
        return out

    def value(self, x, y) -> float:
        return float(self.expr.evaluate(ex.coordinate_env(list(map(float, x)),
                                                          list(map(float, y)))))

    def to_data(self) -> dict:
        return {"kind": "expr", "P": self.expr.to_data()}


class LinearForm(ExprFactor):
    """P = b_i(x) y^i."""

    kind = "linear_form"

    def __init__(self, b, params=None):
        self.b = [ex.from_data(e, params) for e in b]
        for e in self.b:
            if any(s[0] == "y" or s in ("u", "s", "v") for s in e.symbols()):
                raise ProjectiveFactorError("linear-form coefficients must depend on x only")
        total = self.b[0] * ex.Expr.sym("y1")
        for k in range(1, len(self.b)):
            total = total + self.b[k] * ex.Expr.sym(f"y{k + 1}")
        super().__init__(total, len(self.b))

    def to_data(self) -> dict:
        return {"kind": "linear_form", "b": [e.to_data() for e in self.b]}


@dataclass
class ScaledF(ProjectiveFactor):
    """P = c F for a metric F."""

    c: float
    spec: MetricSpec

    kind = "scaled_f"

    def __post_init__(self):
        self.validate(self.spec.dim)

    def jet(self, spray: Spray) -> Jet:
        cfg = spray.x.config
        return self.spec.eval_F(spray.x.value(), spray.y.value(), cfg) * self.c

    def value(self, x, y) -> float:
        return self.c * self.spec.F_value(np.asarray(x, float), np.asarray(y, float))

    def to_data(self) -> dict:
        return {"kind": "scaled_f", "c": self.c, "metric": self.spec.to_data()}


def factor_from_data(data: dict, spec: MetricSpec | None = None) -> ProjectiveFactor:
    """Build a factor from {"kind": "linear_form", "b": [...]}, {"kind": "scaled_f",
    "c": ..., "metric": {...}} (defaulting to ``spec``) or {"kind": "expr", "P": ...}."""
    kind = data.get("kind")
    params = data.get("params")
    if kind == "linear_form":
        return LinearForm(data["b"], params)
    if kind == "scaled_f":
        target = metric_from_data(data["metric"]) if "metric" in data else spec
        if target is None:
            raise ProjectiveFactorError("scaled_f needs a metric")
        return ScaledF(float(data["c"]), target)
    if kind == "expr":
        return ExprFactor(ex.from_data(data["P"], params), int(data.get("dim", spec.dim)))
    raise ProjectiveFactorError(f"unknown projective factor kind {kind!r}")


def zero_factor(dim: int) -> LinearForm:
    return LinearForm([0.0] * dim)


# -- spray-level change ------------------------------------------------------------

def apply_projective_change(spray: Spray, factor, rel_tol: float = 1e-10) -> Spray:
    """The spray G + P y; its 2-homogeneity is asserted."""
    P = factor if isinstance(factor, Jet) else factor.jet(spray)
    out = spray.shifted(P)
    euler = einsum("im,m->i", out.G.grad_y(), out.y)
    err = max_abs(euler - out.G * 2.0)
    if err > rel_tol * max(max_abs(out.G), 1e-12):
        raise ProjectiveFactorError(f"changed spray is not 2-homogeneous (Euler defect {err:.3g})")
    return out


def changed_bundle(bundle: CurvatureBundle, factor) -> tuple:
    """(P jet, bundle of the projectively changed spray)."""
    P = factor if isinstance(factor, Jet) else factor.jet(bundle.spray)
    return P, CurvatureBundle(apply_projective_change(bundle.spray, P))


# -- checks ----------------------------------------------------------------------------

def check_riemann_relation(bundle: CurvatureBundle, factor, connection: str = "base",
                           tol: float = 1e-8) -> CheckResult:
    """R_bar = R + Xi delta + tau y with Xi = P^2 - P_|m y^m and
    tau_k = 3 (P_|k - P P_.k) + Xi_.k.

    ``connection`` selects whose Berwald connection defines P_|k: "base" (the
    spray before the change, which makes the relation an identity) or "changed".
    """
    if connection not in ("base", "changed"):
        raise ValueError("connection must be 'base' or 'changed'")
    P, bar = changed_bundle(bundle, factor)
    src = bundle if connection == "base" else bar
    Pk = src.horizontal_full(P, "")
    Xi = P * P - einsum("k,k->", Pk, bundle.y)
    tau = (Pk - P * P.grad_y()) * 3.0 + Xi.grad_y()
    pred = bundle.R + einsum(",ik->ik", Xi, bundle.delta) + einsum("k,i->ik", tau, bundle.y)
    res = residual(bar.R - pred, bar.R, bundle.R, riemann_scale(bar), riemann_scale(bundle))
    return judge("riemann_relation", {"R_bar": res}, tol,
                 {"connection": connection, "Xi": float(Xi.value())})


def check_invariants_under_change(bundle: CurvatureBundle, factor,
                                  tol: float = 1e-8) -> CheckResult:
    """W, W_j^i_kl, the weakly-Weyl tensor and D are unchanged by G -> G + P y."""
    _, bar = changed_bundle(bundle, factor)
    rs = max(riemann_scale(bundle), riemann_scale(bar))
    bs = max(max_abs(bundle.B), max_abs(bar.B))
    res = {
        "W": residual(bar.W - bundle.W, bar.W, bundle.W, rs),
        "Wjikl": residual(bar.Wjikl - bundle.Wjikl, bar.Wjikl, bundle.Wjikl, rs),
        "Wt": residual(bar.Wt - bundle.Wt, bar.Wt, bundle.Wt, bundle.Wjikl, rs),
        "D": residual(bar.D - bundle.D, bar.D, bundle.D, bs),
    }
    return judge("projective_invariants", res, tol)


def _weyl_scale(bundle: CurvatureBundle) -> float:
    """Scale of the tensors the weakly-Weyl tensor is built from."""
    return max(max_abs(bundle.Wjikl), max_abs(bundle.W), riemann_scale(bundle))


def check_weakly_weyl_closure(bundle: CurvatureBundle, factor, tol: float = 1e-7,
                              tolerances: Tolerances | None = None) -> CheckResult:
    """omega_||0 = omega_|0 - P omega, and mu_bar F_bar = mu F + P for the fits.

    The derivative relation is reported whatever the metric; the status is
    vacuous when omega vanishes and hypothesis_not_met when the metric is not
    weakly-Weyl at this point.
    """
    tols = tolerances or Tolerances()
    P, bar = changed_bundle(bundle, factor)
    omega, _ = extract_omega(bundle)
    om0 = bundle.horizontal_0(omega, "ddd")
    om00 = bar.horizontal_0(omega, "ddd")
    scale = max(bundle.horizontal_0_scale(omega, "ddd"), bar.horizontal_0_scale(omega, "ddd"),
                _weyl_scale(bundle))
    res = {"derivative_relation": residual(om00 - (om0 - P * omega), om00, om0, scale)}
    rec = classify_point(bundle, tols)
    ww = rec.flags["weakly_weyl"]
    details = {}
    status = None
    if ww.vacuous:
        status = "vacuous"
    elif not ww.passed:
        status = "hypothesis_not_met"
    else:
        Pv = float(P.value())
        fit = fit_mu(om0.value(), omega.value(), tols.component_floor)
        fit_bar = fit_mu(om00.value(), omega.value(), tols.component_floor)
        muF, muF_bar = fit["mu"], fit_bar["mu"]
        spread = fit["spread"] + fit_bar["spread"]
        details = {"muF": muF, "muF_bar": muF_bar, "P": Pv, "combined_spread": spread}
        res["mu_law"] = residual(max(abs(muF_bar - muF - Pv) - spread, 0.0), muF_bar, muF, Pv)
    out = judge("weakly_weyl_closure", res, tol, details)
    if status is not None and out.status != "fail":
        out.status = status
    return out


def gww_expansion_terms(bundle: CurvatureBundle, bar: CurvatureBundle, P: Jet) -> dict:
    """Both sides of the ||0 expansion of the weakly-Weyl tensor."""
    Wt = bundle.Wt
    Pd = P.grad_y()
    displayed = (bundle.Wt0 + einsum("r,jrkl,i->jikl", Pd, Wt, bundle.y) - Wt * P * 2.0)
    dropped = (einsum("j,rikl,r->jikl", Pd, Wt, bundle.y)
               + einsum("k,jirl,r->jikl", Pd, Wt, bundle.y)
               + einsum("l,jikr,r->jikl", Pd, Wt, bundle.y))
    return {"lhs": bar.horizontal_0(Wt, "dudd"), "displayed": displayed,
            "full": displayed - dropped}


def check_gww_closure(bundle: CurvatureBundle, factor, tol: float = 1e-7,
                      tolerances: Tolerances | None = None) -> CheckResult:
    """Wt_||0 = Wt_|0 + P_.r Wt_j^r_kl y^i - 2 P Wt, and the transformation of (mu, lambda).

    The residual of the expansion exactly as displayed and of the complete
    connection expansion (which also carries P_.j, P_.k, P_.l terms contracted
    with Wt y) are both reported.
    """
    tols = tolerances or Tolerances()
    P, bar = changed_bundle(bundle, factor)
    t = gww_expansion_terms(bundle, bar, P)
    scale = max(bundle.horizontal_0_scale(bundle.Wt, "dudd"),
                bar.horizontal_0_scale(bundle.Wt, "dudd"), _weyl_scale(bundle))
    res = {"displayed": residual(t["lhs"] - t["displayed"], t["lhs"], scale),
           "full": residual(t["lhs"] - t["full"], t["lhs"], scale)}
    rec = classify_point(bundle, tols)
    gww = rec.flags["generalized_weakly_weyl"]
    details, status = {}, None
    if gww.vacuous:
        status = "vacuous"
    elif not gww.passed:
        status = "hypothesis_not_met"
    else:
        Wt = bundle.Wt.value()
        fit, _ = fit_gww(bundle.Wt0.value(), Wt, Wt, bundle.y0)
        fit_bar, _ = fit_gww(t["lhs"].value(), Wt, Wt, bundle.y0)
        Pv = float(P.value())
        Pd = P.grad_y().value()
        details = {"muF": fit["mu"], "muF_bar": fit_bar["mu"], "P": Pv,
                   "lambda": fit["lambda"], "lambda_bar": fit_bar["lambda"], "rank": fit["rank"]}
        if fit["rank"] == Wt.shape[0] + 1:
            res["mu_law"] = residual(fit_bar["mu"] - fit["mu"] - 2.0 * Pv, fit["mu"], Pv)
            res["lambda_law"] = residual(np.asarray(fit_bar["lambda"]) - fit["lambda"] - Pd,
                                         np.asarray(fit["lambda"]), Pd)
    out = judge("gww_closure", res, tol, details)
    if status is not None and out.status != "fail":
        out.status = status
    return out


# -- searches and compositions ----------------------------------------------------------------

def compose(spray: Spray, *factors) -> Spray:
    out = spray
    for f in factors:
        out = apply_projective_change(out, f.jet(spray) if not isinstance(f, Jet) else f)
    return out


def search_weakly_weyl_fixture(seed: int = 0, trials: int = 8, dim: int = 3,
                               tolerances: Tolerances | None = None) -> dict:
    """Randomized search for a metric with Wt = omega y, omega != 0.

    Candidates are Randers metrics with a Euclidean alpha and random quadratic
    one-forms, evaluated at one random point each. Returns the best candidate
    found (smallest relative residual of Wt - omega y among nonvanishing Wt)
    and whether it qualifies.
    """
    from .classify import classify_point as _classify
    tols = tolerances or Tolerances()
    rng = np.random.default_rng(seed)
    best = None
    for trial in range(trials):
        c = rng.uniform(-0.3, 0.3, size=(dim, 1 + dim + dim))
        b = []
        for i in range(dim):
            terms = [repr(float(c[i, 0]))]
            terms += [f"{float(c[i, 1 + k])!r}*x{k + 1}" for k in range(dim)]
            terms += [f"{float(c[i, 1 + dim + k])!r}*x{k + 1}**2" for k in range(dim)]
            b.append(" + ".join(terms))
        spec = metric_from_data({"kind": "randers", "dim": dim,
                                 "a": [[1.0 if i == j else 0.0 for j in range(dim)]
                                       for i in range(dim)], "b": b})
        x = rng.uniform(-0.3, 0.3, dim)
        y = rng.normal(size=dim)
        if spec.domain_error(x):
            continue
        rec = _classify(CurvatureBundle.from_metric(spec, x, y), tols)
        ww = rec.flags["weakly_weyl"]
        if ww.vacuous:
            continue
        rel = ww.residuals["Wt_minus_omega_y"].relative
        if best is None or rel < best["relative"]:
            best = {"trial": trial, "metric": spec.to_data(), "x": x.tolist(), "y": y.tolist(),
                    "relative": rel}
    found = best is not None and best["relative"] <= tols.for_flag("weakly_weyl")
    return {"found": found, "trials": trials, "seed": seed, "best": best}
