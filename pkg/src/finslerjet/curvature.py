"""Spray, Berwald-connection and curvature tensors as jets.

Storage convention: tensors are jet arrays indexed as written with the upper
index in its printed slot, e.g. ``B[j, i, k, l]`` for B_j^i_kl, ``R[i, k]``
for R^i_k and ``Gamma[i, j, k]`` for G^i_{.j.k}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .jet import Jet, JetConfig, TruncationError, einsum, seed_vectors
from .metrics import MetricSpec, fundamental_tensor

# (x, y) derivative depth of each quantity below F^2; |0 costs (1, 1)
DEPTH = {
    "F": (0, 0), "g": (0, 2), "G": (1, 2), "N": (1, 3), "Gamma": (1, 4),
    "R": (2, 4), "Rikl": (2, 5), "Rjikl": (2, 6),
    "B": (1, 5), "E": (1, 5), "H": (2, 6), "D": (1, 6), "D|0": (2, 7), "D|0|0": (3, 8),
    "W": (2, 5), "Wjikl": (2, 7), "Wt": (2, 8), "Wt|0": (3, 9),
    "theta": (2, 7), "theta|0": (3, 8),
}

STANDARD_CONFIG = (3, 10)
DEEP_CONFIG = (3, 10)


def required_orders(tensors, headroom: int = 1) -> tuple:
    """F^2 orders needed for the point values of ``tensors`` plus ``headroom``
    extra y-orders (for homogeneity and vertical-derivative checks)."""
    x = max(DEPTH[t][0] for t in tensors)
    y = max(DEPTH[t][1] for t in tensors) + headroom
    return x, y


def check_budget(config: JetConfig, tensors, headroom: int = 1):
    x, y = required_orders(tensors, headroom)
    if config.x_order < x or config.y_order < y:
        raise TruncationError(
            f"requested {sorted(tensors)} need F^2 at x_order>={x}, y_order>={y}; "
            f"got x_order={config.x_order}, y_order={config.y_order}")


def _swap(T: Jet, a: int, b: int) -> Jet:
    axes = list(range(T.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return T.transpose(axes)


def _apply_on_axis(T: Jet, M: Jet, axis: int, upper: bool) -> Jet:
    """Sum_r M[i, r] T[.., r, ..] (upper) or Sum_r M[r, j] T[.., r, ..] (lower)."""
    letters = "abcdefgh"[:T.ndim]
    tin = letters[:axis] + "r" + letters[axis + 1:]
    m = f"{letters[axis]}r" if upper else f"r{letters[axis]}"
    return einsum(f"{m},{tin}->{letters}", M, T)


@dataclass
class Spray:
    """Jet-valued spray coefficients G^i with the coordinate seeds they live on.

    ``F`` (optional) is the companion metric used for metric-dependent terms.
    """

    G: Jet
    x: Jet
    y: Jet
    F: Jet | None = None
    label: str = "spray"

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @cached_property
    def N(self) -> Jet:
        return self.G.grad_y()

    @cached_property
    def Gamma(self) -> Jet:
        return self.N.grad_y()

    def shifted(self, P: Jet, label: str = "projective change") -> "Spray":
        """The projectively changed spray G + P y."""
        return Spray(self.G + P * self.y, self.x, self.y, self.F, label)


def compute_spray(F2: Jet, g_inv: Jet, y: Jet) -> Jet:
    """G^i = 1/4 g^{il} (d^2F^2/dx^k dy^l y^k - dF^2/dx^l)."""
    Fy = F2.grad_y()
    mixed = einsum("lk,k->l", Fy.grad_x(), y)
    return einsum("il,l->i", g_inv, mixed - F2.grad_x()) * 0.25


def metric_spray(spec: MetricSpec, x, y, config: JetConfig) -> Spray:
    xs, ys = seed_vectors(x, y, config)
    F2 = spec.eval_F2(x, y, config)
    F = spec.eval_F(x, y, config)
    _, ginv = fundamental_tensor(F2)
    return Spray(compute_spray(F2, ginv, ys), xs, ys, F, spec.kind)


class CurvatureBundle:
    """All curvature tensors at one base point, computed lazily from a spray."""

    def __init__(self, spray: Spray, F2: Jet | None = None):
        self.spray = spray
        self._F2 = F2
        self.n = spray.x.shape[0]
        self.spec = None

    @classmethod
    def from_metric(cls, spec: MetricSpec, x, y, config: JetConfig | None = None):
        if config is None:
            config = JetConfig(spec.dim, *STANDARD_CONFIG)
        xs, ys = seed_vectors(x, y, config)
        F2 = spec.eval_F2(x, y, config)
        F = spec.eval_F(x, y, config)
        bundle = cls(Spray(None, xs, ys, F, spec.kind), F2)
        g, ginv = fundamental_tensor(F2)
        bundle.__dict__["g"], bundle.__dict__["g_inv"] = g, ginv
        bundle.spray.G = compute_spray(F2, ginv, ys)
        bundle.spec = spec
        return bundle

    # -- base point --------------------------------------------------------------
    @property
    def x0(self) -> np.ndarray:
        return self.spray.x.value()

    @property
    def y0(self) -> np.ndarray:
        return self.spray.y.value()

    @property
    def y(self) -> Jet:
        return self.spray.y

    @property
    def delta(self) -> np.ndarray:
        return np.eye(self.n)

    # -- metric data -----------------------------------------------------------------
    @property
    def F(self) -> Jet:
        if self.spray.F is None:
            raise ValueError("this spray carries no companion metric F")
        return self.spray.F

    @cached_property
    def F2(self) -> Jet:
        return self._F2 if self._F2 is not None else self.F * self.F

    @cached_property
    def g(self) -> Jet:
        return self.F2.grad_y().grad_y() * 0.5

    @cached_property
    def g_inv(self) -> Jet:
        return fundamental_tensor(self.F2)[1]

    @cached_property
    def ell(self) -> Jet:
        """l_i = dF/dy^i."""
        return self.F.grad_y()

    @cached_property
    def angular(self) -> Jet:
        """h_ij = g_ij - l_i l_j."""
        return self.g - einsum("i,j->ij", self.ell, self.ell)

    # -- spray and connection ----------------------------------------------------
    @property
    def G(self) -> Jet:
        return self.spray.G

    @property
    def N(self) -> Jet:
        return self.spray.N

    @property
    def Gamma(self) -> Jet:
        return self.spray.Gamma

    # -- horizontal derivatives ------------------------------------------------------
    def horizontal_0_terms(self, T: Jet, variance: str) -> list:
        """The separate terms whose sum is T_{|0}: T_{;m}y^m, -2G^r T_{.r} and one
        connection term per index (signed)."""
        if len(variance) != T.ndim or set(variance) - {"u", "d"}:
            raise ValueError(f"variance {variance!r} does not describe a rank-{T.ndim} tensor")
        letters = "abcdefgh"[:T.ndim]
        terms = [einsum(f"{letters}m,m->{letters}", T.grad_x(), self.y),
                 -2.0 * einsum(f"r,{letters}r->{letters}", self.G, T.grad_y())]
        for axis, v in enumerate(variance):
            terms.append((1.0 if v == "u" else -1.0) * _apply_on_axis(T, self.N, axis, v == "u"))
        return terms

    def horizontal_0(self, T: Jet, variance: str) -> Jet:
        """T_{|0}: Berwald covariant derivative along the geodesic flow.

        ``variance`` lists 'u'/'d' for each tensor axis of T.
        """
        terms = self.horizontal_0_terms(T, variance)
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out

    def horizontal_0_scale(self, T: Jet, variance: str) -> float:
        """Largest point value among the terms of T_{|0} (a cancellation-aware scale)."""
        return max(float(np.max(np.abs(t.value()))) for t in self.horizontal_0_terms(T, variance))

    def horizontal_full(self, T: Jet, variance: str) -> Jet:
        """T_{|m} with the derivative direction m appended as the last axis."""
        if len(variance) != T.ndim or set(variance) - {"u", "d"}:
            raise ValueError(f"variance {variance!r} does not describe a rank-{T.ndim} tensor")
        letters = "abcdefgh"[:T.ndim]
        out = T.grad_x() - einsum(f"rm,{letters}r->{letters}m", self.N, T.grad_y())
        for axis, v in enumerate(variance):
            tin = letters[:axis] + "r" + letters[axis + 1:]
            if v == "u":
                term = einsum(f"{letters[axis]}rm,{tin}->{letters}m", self.Gamma, T)
                out = out + term
            else:
                term = einsum(f"r{letters[axis]}m,{tin}->{letters}m", self.Gamma, T)
                out = out - term
        return out

    # -- Riemann curvature --------------------------------------------------------
    @cached_property
    def R_terms(self) -> tuple:
        G, N = self.G, self.N
        return (G.grad_x() * 2.0,
                einsum("ikm,m->ik", N.grad_x(), self.y),
                einsum("m,imk->ik", G, self.Gamma) * 2.0,
                einsum("im,mk->ik", N, N))

    @cached_property
    def R(self) -> Jet:
        """R^i_k."""
        a, b, c, d = self.R_terms
        return a - b + c - d

    @cached_property
    def Rikl(self) -> Jet:
        dR = self.R.grad_y()
        return (dR - _swap(dR, 1, 2)) * (1.0 / 3.0)

    @cached_property
    def Rjikl(self) -> Jet:
        """R_j^i_kl = R^i_{kl.j}, stored [j, i, k, l]."""
        return self.Rikl.grad_y().transpose(3, 0, 1, 2)

    # -- Berwald family -------------------------------------------------------------
    @cached_property
    def B(self) -> Jet:
        """B_j^i_kl = G^i_{.j.k.l}, stored [j, i, k, l]."""
        return self.Gamma.grad_y().transpose(1, 0, 2, 3)

    @cached_property
    def E(self) -> Jet:
        B = self.B
        return sum(B[:, m, :, m] for m in range(self.n)) * 0.5

    @cached_property
    def H(self) -> Jet:
        return self.horizontal_0(self.E, "dd")

    @cached_property
    def D(self) -> Jet:
        """Douglas tensor from B and E, stored [j, i, k, l]."""
        E, d, n = self.E, self.delta, self.n
        dE = E.grad_y()  # [j, k, l]
        corr = (einsum("jk,il->jikl", E, d) + einsum("jl,ik->jikl", E, d)
                + einsum("kl,ij->jikl", E, d) + einsum("jkl,i->jikl", dE, self.y))
        return self.B - corr * (2.0 / (n + 1))

    @cached_property
    def D_direct(self) -> Jet:
        """Douglas tensor as B - 1/(n+1) d^3(G^m_{.m} y^i)/dy^j dy^k dy^l."""
        trace = sum(self.N[m, m] for m in range(self.n))
        q = einsum(",i->i", trace, self.y)
        d3 = q.grad_y().grad_y().grad_y()  # [i, j, k, l]
        return self.B - d3.transpose(1, 0, 2, 3) * (1.0 / (self.n + 1))

    @cached_property
    def D0(self) -> Jet:
        return self.horizontal_0(self.D, "dudd")

    # -- Weyl family ------------------------------------------------------------------
    def _require_weyl_dim(self):
        if self.n < 3:
            raise ValueError("the Weyl family is only defined here for n >= 3")

    @cached_property
    def R_scalar(self) -> Jet:
        return sum(self.R[m, m] for m in range(self.n)) * (1.0 / (self.n - 1))

    @cached_property
    def A(self) -> Jet:
        self._require_weyl_dim()
        return self.R - einsum(",ik->ik", self.R_scalar, self.delta)

    @cached_property
    def W(self) -> Jet:
        """Weyl curvature W^i_k."""
        dA = self.A.grad_y()  # [m, k, m']
        tr = sum(dA[m, :, m] for m in range(self.n))
        return self.A - einsum("k,i->ik", tr, self.y) * (1.0 / (self.n + 1))

    @cached_property
    def Wikl(self) -> Jet:
        dW = self.W.grad_y()
        return (dW - _swap(dW, 1, 2)) * (1.0 / 3.0)

    @cached_property
    def Wjikl(self) -> Jet:
        """W_j^i_kl = 1/3 (W^i_{k.l} - W^i_{l.k})_{.j}, stored [j, i, k, l]."""
        return self.Wikl.grad_y().transpose(3, 0, 1, 2)

    @cached_property
    def Wt(self) -> Jet:
        """Weakly-Weyl curvature W_j^i_{pl.k} y^p, stored [j, i, k, l]."""
        dW = self.Wjikl.grad_y()  # [j, i, p, l, k]
        return einsum("jiplk,p->jikl", dW, self.y)

    @cached_property
    def Wt0(self) -> Jet:
        return self.horizontal_0(self.Wt, "dudd")

    # -- Weyl/Douglas identity ingredients -------------------------------------------------
    @cached_property
    def E_full(self) -> Jet:
        """E_{jk|l}, stored [j, k, l]."""
        return self.horizontal_full(self.E, "dd")

    @cached_property
    def theta_parts(self) -> tuple:
        """(2 E_{jk|l}, 1/3 (R^s_{l.s} - (n+2) R_{.l})_{.j.k}) both stored [j, k, l]."""
        n = self.n
        dR = self.R.grad_y()  # [s, l, s']
        div = sum(dR[s, :, s] for s in range(n))
        v = div - self.R_scalar.grad_y() * (n + 2.0)  # [l]
        second = v.grad_y().grad_y().transpose(1, 2, 0) * (1.0 / 3.0)
        return self.E_full * 2.0, second

    @cached_property
    def theta(self) -> Jet:
        a, b = self.theta_parts
        return a - b

    @cached_property
    def theta0(self) -> Jet:
        return self.horizontal_0(self.theta, "ddd")

    @cached_property
    def D00(self) -> Jet:
        return self.horizontal_0(self.D0, "dudd")


def compute_riemann(source) -> tuple:
    b = _bundle(source)
    return b.R, b.Rikl, b.Rjikl


def compute_berwald_family(source) -> tuple:
    b = _bundle(source)
    return b.B, b.E, b.H


def compute_douglas(source) -> Jet:
    return _bundle(source).D


def compute_weyl_family(source) -> tuple:
    b = _bundle(source)
    b._require_weyl_dim()
    return b.R_scalar, b.A, b.W, b.Wjikl, b.Wt


def _bundle(source) -> CurvatureBundle:
    if isinstance(source, CurvatureBundle):
        return source
    if isinstance(source, Spray):
        return CurvatureBundle(source)
    raise TypeError("expected a Spray or CurvatureBundle")
