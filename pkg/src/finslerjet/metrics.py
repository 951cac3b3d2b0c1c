"""Metric zoo: jet evaluation of F and F^2, Finsler-axiom validation, P/Q extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from . import expr as ex
from .jet import Jet, JetConfig, SingularEvaluationError, seed_point, sqrt


class DomainError(ValueError):
    """The point lies outside the region on which the metric is defined."""


class DegenerateConfigurationError(ValueError):
    pass


def _dot(a, b):
    out = a[0] * b[0]
    for k in range(1, len(a)):
        out = out + a[k] * b[k]
    return out


class MetricSpec:
    """Base class; subclasses implement ``_F`` (and optionally ``_F2``) over
    sequences of floats or jets."""

    kind = "abstract"
    dim: int

    def domain_error(self, x) -> str | None:
        return None

    def _F(self, xs, ys):
        raise NotImplementedError

    def _F2(self, xs, ys):
        f = self._F(xs, ys)
        return f * f

    def _check(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise ValueError(f"{self.kind} expects {self.dim}-vectors")
        if not np.any(y):
            raise SingularEvaluationError("y = 0 is excluded", value=0.0)
        msg = self.domain_error(x)
        if msg:
            raise DomainError(msg)
        return x, y

    def F_value(self, x, y) -> float:
        x, y = self._check(x, y)
        return float(self._F(list(x), list(y)))

    def F2_value(self, x, y) -> float:
        x, y = self._check(x, y)
        return float(self._F2(list(x), list(y)))

    def eval_F(self, x, y, config: JetConfig) -> Jet:
        x, y = self._check(x, y)
        xs, ys = seed_point(x, y, config)
        return self._F(xs, ys)

    def eval_F2(self, x, y, config: JetConfig) -> Jet:
        x, y = self._check(x, y)
        xs, ys = seed_point(x, y, config)
        return self._F2(xs, ys)

    def to_data(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(MetricSpec):
    dim: int = 3
    kind = "euclidean"

    def _F2(self, xs, ys):
        return _dot(ys, ys)

    def _F(self, xs, ys):
        return sqrt(self._F2(xs, ys))

    def to_data(self):
        return {"kind": self.kind, "dim": self.dim}


def _matrix_exprs(rows, params=None):
    return tuple(tuple(ex.from_data(e, params) for e in row) for row in rows)


@dataclass(frozen=True)
class Riemannian(MetricSpec):
    """F^2 = g_ij(x) y^i y^j with g given as a matrix of expressions in x."""

    dim: int
    g: tuple
    kind = "riemannian"

    def __post_init__(self):
        object.__setattr__(self, "g", _matrix_exprs(self.g))
        if len(self.g) != self.dim or any(len(r) != self.dim for r in self.g):
            raise ValueError("g must be an n x n matrix")
        for i in range(self.dim):
            for j in range(i):
                if str(self.g[i][j]) != str(self.g[j][i]):
                    raise ValueError("g must be symmetric")
        if any(s[0] in "yursv" for row in self.g for e in row for s in e.symbols()):
            raise ValueError("Riemannian g may depend on x only")

    def _F2(self, xs, ys):
        env = ex.coordinate_env(xs, ys)
        total = None
        for i in range(self.dim):
            for j in range(self.dim):
                gij = self.g[i][j].evaluate(env)
                term = gij * ys[i] * ys[j]
                total = term if total is None else total + term
        return total

    def _F(self, xs, ys):
        return sqrt(self._F2(xs, ys))

    def to_data(self):
        return {"kind": self.kind, "dim": self.dim,
                "g": [[str(e) for e in row] for row in self.g]}


@dataclass(frozen=True)
class Randers(MetricSpec):
    """F = sqrt(a_ij y^i y^j) + b_i y^i with a, b expressions in x."""

    dim: int
    a: tuple
    b: tuple
    kind = "randers"

    def __post_init__(self):
        object.__setattr__(self, "a", _matrix_exprs(self.a))
        object.__setattr__(self, "b", tuple(ex.from_data(e) for e in self.b))
        if len(self.a) != self.dim or len(self.b) != self.dim:
            raise ValueError("a must be n x n and b an n-vector")

    def _F(self, xs, ys):
        env = ex.coordinate_env(xs, ys)
        q = None
        for i in range(self.dim):
            for j in range(self.dim):
                t = self.a[i][j].evaluate(env) * ys[i] * ys[j]
                q = t if q is None else q + t
        beta = _dot([bi.evaluate(env) for bi in self.b], ys)
        return sqrt(q) + beta

    def to_data(self):
        return {"kind": self.kind, "dim": self.dim,
                "a": [[str(e) for e in row] for row in self.a],
                "b": [str(e) for e in self.b]}


@dataclass(frozen=True)
class FunkBall3(MetricSpec):
    """Zero-flag-curvature Randers metric on the unit 3-ball with a rotational
    wind; alpha and beta written out in coordinates p = (x, y, z), y = (u, v, w)."""

    dim: int = 3
    kind = "funk_ball3"

    def domain_error(self, x):
        if float(np.dot(x, x)) >= 1.0:
            return f"|x|^2 = {float(np.dot(x, x)):.6g} >= 1 (outside the unit ball)"
        return None

    def _F(self, xs, ys):
        p, q, _ = xs
        u, v, w = ys
        lam = 1.0 - p * p - q * q
        rot = -q * u + p * v
        alpha = sqrt(rot * rot + (u * u + v * v + w * w) * lam) / lam
        beta = rot / lam
        return alpha + beta

    def to_data(self):
        return {"kind": self.kind, "dim": 3}


@dataclass(frozen=True)
class SphericallySymmetric(MetricSpec):
    """F = |y| phi(|x|, <x,y>/|y|) on the ball of radius ``domain_radius``."""

    dim: int
    phi: ex.Expr
    domain_radius: float = 1.0
    kind = "spherically_symmetric"

    def __post_init__(self):
        object.__setattr__(self, "phi", ex.from_data(self.phi))
        bad = self.phi.symbols() - {"r", "s"}
        if bad:
            raise ValueError(f"phi may depend on r and s only, found {sorted(bad)}")

    def domain_error(self, x):
        r = float(np.linalg.norm(x))
        if r >= self.domain_radius:
            return f"r = {r:.6g} >= domain radius {self.domain_radius}"
        if r == 0.0 and "r" in self.phi.symbols():
            return "r = 0: phi(r, s) is not smooth at the origin in these coordinates"
        return None

    def _F(self, xs, ys):
        env = ex.coordinate_env(xs, ys)
        return env["u"] * self.phi.evaluate(env)

    def to_data(self):
        return {"kind": self.kind, "dim": self.dim, "phi": str(self.phi),
                "domain_radius": self.domain_radius}


@dataclass(frozen=True)
class SphSymFamily42(MetricSpec):
    """phi(r, s) = s h(r) - f (s/s0 - 1) / (a + b r^2)^lam  (constant f).

    Equivalently F = f |y| (a + b r^2)^(-lam) + (h(r) - f / (s0 (a + b r^2)^lam)) <x, y>.
    """

    dim: int = 3
    a: float = 1.0
    b: float = 1.0
    lam: float = 2.0
    s0: float = 1.0
    h: ex.Expr = field(default_factory=lambda: ex.Expr.const(0.0))
    f_const: float = 1.0
    domain_radius: float = 1.0
    kind = "sphsym_family42"

    def __post_init__(self):
        object.__setattr__(self, "h", ex.from_data(self.h))
        if self.h.symbols() - {"r"}:
            raise ValueError("h may depend on r only")
        if self.s0 == 0:
            raise ValueError("s0 must be nonzero")

    def phi(self) -> ex.Expr:
        r, s = ex.Expr.sym("r"), ex.Expr.sym("s")
        return s * self.h - self.f_const * (s / self.s0 - 1.0) / (self.a + self.b * r ** 2) ** self.lam

    def domain_error(self, x):
        rr = float(np.dot(x, x))
        if self.a + self.b * rr <= 0:
            return f"a + b r^2 = {self.a + self.b * rr:.6g} <= 0"
        if np.sqrt(rr) >= self.domain_radius:
            return f"r = {np.sqrt(rr):.6g} >= domain radius {self.domain_radius}"
        if rr == 0.0 and "r" in self.h.symbols():
            return "r = 0: h(r) is evaluated through |x|"
        return None

    def _F(self, xs, ys):
        env = ex.coordinate_env(xs, ys)
        u, v = env["u"], env["v"]
        rr = _dot(xs, xs)
        conf = (rr * self.b + self.a) ** (-self.lam) if isinstance(rr, Jet) \
            else (self.a + self.b * rr) ** (-self.lam)
        hval = self.h.evaluate(env)
        return v * hval - (v / self.s0 - u) * conf * self.f_const

    def to_data(self):
        return {"kind": self.kind, "dim": self.dim, "a": self.a, "b": self.b,
                "lambda": self.lam, "s0": self.s0, "h": str(self.h),
                "f_const": self.f_const, "domain_radius": self.domain_radius}


def metric_from_data(data: dict) -> MetricSpec:
    """Build a metric from a nested key-value document."""
    data = dict(data)
    kind = data.pop("kind", None)
    params = data.pop("params", None)
    try:
        if kind == "euclidean":
            return Euclidean(dim=int(data.get("dim", 3)))
        if kind == "riemannian":
            return Riemannian(int(data["dim"]), _matrix_exprs(data["g"], params))
        if kind == "randers":
            return Randers(int(data["dim"]), _matrix_exprs(data["a"], params),
                           tuple(ex.from_data(e, params) for e in data["b"]))
        if kind == "funk_ball3":
            return FunkBall3()
        if kind == "spherically_symmetric":
            return SphericallySymmetric(int(data["dim"]), ex.from_data(data["phi"], params),
                                        float(data.get("domain_radius", 1.0)))
        if kind == "sphsym_family42":
            base = default_family42_parameters() if data.pop("defaults", False) else {}
            base.update(data)
            return SphSymFamily42(
                dim=int(base.get("dim", 3)), a=float(base["a"]), b=float(base["b"]),
                lam=float(base.get("lambda", base.get("lam"))), s0=float(base["s0"]),
                h=ex.from_data(base.get("h", 0.0), params),
                f_const=float(base.get("f_const", 1.0)),
                domain_radius=float(base.get("domain_radius", 1.0)))
    except KeyError as exc:
        raise ValueError(f"metric '{kind}' is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown metric kind {kind!r}")


# -- fundamental tensor ------------------------------------------------------------------

def fundamental_tensor(F2: Jet):
    """g_ij = 1/2 d^2 F^2 / dy^i dy^j and its inverse, both jet-valued."""
    g = F2.grad_y().grad_y() * 0.5
    return g, inverse(g)


def inverse(A: Jet) -> Jet:
    """Gauss-Jordan inverse over the jet ring, pivoting on constant terms."""
    n = A.shape[0]
    eye = Jet.constant(A.config, np.eye(n))
    return solve(A, eye)


def solve(A: Jet, B) -> Jet:
    """Solve A X = B for jet-valued A (m x m) and B (m x k)."""
    m = A.shape[0]
    if not isinstance(B, Jet):
        B = Jet.constant(A.config, np.asarray(B, dtype=float))
    cfg = A.config.meet(B.config)
    M = np.concatenate([A.truncate(cfg).coeffs, B.truncate(cfg).coeffs], axis=1)
    scale = np.max(np.abs(A.coeffs[..., 0])) or 1.0
    for k in range(m):
        p = k + int(np.argmax(np.abs(M[k:, k, 0])))
        if abs(M[p, k, 0]) <= 1e-14 * scale:
            raise np.linalg.LinAlgError("singular constant part in jet linear solve")
        if p != k:
            M[[k, p]] = M[[p, k]]
        rows = Jet(cfg, M)
        pivot = rows[k, k].reciprocal()
        row_k = rows[k] * pivot
        factors = rows[:, k]
        update = rows - factors.expand(1) * row_k.expand(0)
        M = update.coeffs.copy()
        M[k] = row_k.coeffs
    return Jet(cfg, M[:, m:])


# -- validation --------------------------------------------------------------------------

HOMOGENEITY_FACTORS = (0.5, 2.0, 3.0)


@dataclass
class PointValidation:
    x: list
    y: list
    status: str  # "ok" | "outside_domain" | "not_finsler"
    messages: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class ValidationReport:
    metric: str
    points: list

    @property
    def all_ok(self):
        return all(p.ok for p in self.points)

    @property
    def valid_fraction(self):
        return sum(p.ok for p in self.points) / len(self.points)

    def failures(self):
        return [p for p in self.points if not p.ok]


def validate_point(spec: MetricSpec, x, y, rel_tol: float = 1e-10) -> PointValidation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rec = PointValidation(list(map(float, x)), list(map(float, y)), "ok")
    msg = spec.domain_error(x)
    if msg:
        rec.status, rec.messages = "outside_domain", [msg]
        return rec
    try:
        F = spec.F_value(x, y)
        problems = []
        if not F > 0:
            problems.append(f"F = {F:.6g} is not positive")
        for lam in HOMOGENEITY_FACTORS:
            Fl = spec.F_value(x, lam * y)
            if abs(Fl - lam * F) > rel_tol * max(abs(lam * F), 1e-300):
                problems.append(f"F(x, {lam} y) != {lam} F(x, y)")
        g = 0.5 * spec.eval_F2(x, y, JetConfig(spec.dim, 0, 2)).grad_y().grad_y().value()
        minors = [np.linalg.det(g[:k, :k]) for k in range(1, spec.dim + 1)]
        if min(minors) <= 0:
            problems.append("fundamental tensor not positive definite "
                            f"(leading minors {[float(f'{m:.3g}') for m in minors]})")
    except SingularEvaluationError as exc:
        problems = [f"singular evaluation: {exc}"]
    if problems:
        rec.status, rec.messages = "not_finsler", problems
    return rec


def validate(spec: MetricSpec, points: Sequence) -> ValidationReport:
    points = list(points)
    if not points:
        raise ValueError("validation needs at least one sample point")
    return ValidationReport(spec.kind, [validate_point(spec, x, y) for x, y in points])


# -- spherically symmetric spray scalars -------------------------------------------------

@dataclass
class PQPair:
    P: float
    Q: float
    residual: float
    relative_residual: float


def extract_PQ(G, x, y) -> PQPair:
    """Fit G^i = u P y^i + u^2 Q x^i; residual is the part of G outside span{x, y}."""
    G = G.value() if isinstance(G, Jet) else np.asarray(G, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = float(np.linalg.norm(y))
    basis = np.column_stack([u * y, u * u * x])
    sv = np.linalg.svd(basis, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateConfigurationError("x and y are parallel; P and Q are not identifiable")
    coef, *_ = np.linalg.lstsq(basis, G, rcond=None)
    resid = float(np.linalg.norm(G - basis @ coef))
    scale = float(np.linalg.norm(G))
    return PQPair(float(coef[0]), float(coef[1]), resid, resid / scale if scale > 0 else 0.0)


# -- default spherical family instance ---------------------------------------------------

FIXTURE = "family42_default.json"


def family42_convexity_ratio(params: dict, r):
    """|b|_alpha for the Randers form of the family: |sigma| r / rho."""
    conf = (params["a"] + params["b"] * np.asarray(r) ** 2) ** (-params["lambda"])
    rho = params["f_const"] * conf
    sigma = params["h"] - params["f_const"] * conf / params["s0"]
    return np.abs(sigma) * np.asarray(r) / rho


def search_family42_parameters(seed: int = 7, count: int = 64, r_range=(0.1, 0.7),
                               h_grid=(-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 5.0),
                               s0_grid=(0.5, 1.0, 2.0, 4.0), a=1.0, b=1.0, lam=2.0):
    """Grid search for a convex constant-h instance of the family.

    Candidates are ranked by the fraction of sampled points passing ``validate``;
    ties prefer the most non-Riemannian instance whose Randers norm stays <= 0.8.
    """
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(count):
        d = rng.normal(size=3)
        x = d / np.linalg.norm(d) * rng.uniform(*r_range)
        y = rng.normal(size=3)
        pts.append((x, y / np.linalg.norm(y)))
    best, best_key = None, None
    for h in h_grid:
        for s0 in s0_grid:
            params = {"dim": 3, "a": a, "b": b, "lambda": lam, "s0": s0, "h": h,
                      "f_const": 1.0, "domain_radius": r_range[1]}
            spec = metric_from_data({"kind": "sphsym_family42", **params})
            frac = validate(spec, pts).valid_fraction
            ratio = float(np.max(family42_convexity_ratio(params, np.linspace(*r_range, 50))))
            key = (frac, ratio if ratio <= 0.8 else -ratio, -abs(h), s0)
            if best_key is None or key > best_key:
                best, best_key = dict(params, valid_fraction=frac, max_randers_norm=ratio), key
    return best


def default_family42_parameters() -> dict:
    text = resources.files("finslerjet").joinpath("data", FIXTURE).read_text()
    data = json.loads(text)
    return {k: data[k] for k in ("dim", "a", "b", "lambda", "s0", "h", "f_const",
                                 "domain_radius")}


def default_family42(**overrides) -> SphSymFamily42:
    params = default_family42_parameters()
    if "lam" in overrides:
        overrides["lambda"] = overrides.pop("lam")
    params.update(overrides)
    return metric_from_data({"kind": "sphsym_family42", **params})
