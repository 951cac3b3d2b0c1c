"""Truncated multivariate Taylor polynomials ("jets") in the 2n variables (x, y).

A jet stores Taylor coefficients ``d^a_x d^b_y f / (a! b!)`` at a base point.
A monomial ``x^a y^b`` is retained iff ``|a| <= x_order`` and ``|b| <= y_order``.
Any downward closed index set is closed under truncated multiplication, so
every result is exact up to the orders of the configuration it lives in.

Jets may carry leading tensor axes: ``coeffs`` has shape ``(*shape, N)`` and
all arithmetic broadcasts over the leading axes like numpy arrays do.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 4
MAX_X_ORDER = 4
MAX_Y_ORDER = 12

# leading-axis batch * table size above which multiplication is chunked
_CHUNK_ELEMENTS = 8_000_000


class JetError(Exception):
    pass


class TruncationError(JetError):
    """A derivative or coefficient that the configuration does not track."""


class ConfigMismatchError(JetError):
    pass


class SingularEvaluationError(JetError, ValueError):
    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


@dataclass(frozen=True, order=True)
class JetConfig:
    dim: int
    x_order: int
    y_order: int

    def __post_init__(self):
        if not 2 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must lie in [2, {MAX_DIM}], got {self.dim}")
        if not 0 <= self.x_order <= MAX_X_ORDER:
            raise TruncationError(f"x_order {self.x_order} outside [0, {MAX_X_ORDER}]")
        if not 0 <= self.y_order <= MAX_Y_ORDER:
            raise TruncationError(f"y_order {self.y_order} outside [0, {MAX_Y_ORDER}]")

    def meet(self, other: "JetConfig") -> "JetConfig":
        if self.dim != other.dim:
            raise ConfigMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self == other:
            return self
        return JetConfig(self.dim, min(self.x_order, other.x_order),
                         min(self.y_order, other.y_order))

    def lowered(self, dx: int = 0, dy: int = 0) -> "JetConfig":
        """Configuration after ``dx`` x-derivatives and ``dy`` y-derivatives."""
        if self.x_order < dx:
            raise TruncationError(
                f"x-derivative of order {dx} not tracked (x_order={self.x_order})")
        if self.y_order < dy:
            raise TruncationError(
                f"y-derivative of order {dy} not tracked (y_order={self.y_order})")
        return JetConfig(self.dim, self.x_order - dx, self.y_order - dy)

    @property
    def size(self) -> int:
        return layout(self).size


@dataclass(frozen=True)
class MultiIndex:
    x_part: tuple
    y_part: tuple

    def __post_init__(self):
        object.__setattr__(self, "x_part", tuple(int(v) for v in self.x_part))
        object.__setattr__(self, "y_part", tuple(int(v) for v in self.y_part))
        if len(self.x_part) != len(self.y_part):
            raise ValueError("x_part and y_part must have the same length")
        if min(self.x_part + self.y_part) < 0:
            raise ValueError("multi-index entries must be non-negative")

    @classmethod
    def zero(cls, n):
        return cls((0,) * n, (0,) * n)

    @classmethod
    def of(cls, n, x=(), y=()):
        """Build from lists of variable positions, e.g. ``of(3, y=[0, 0])`` is d^2/dy1^2."""
        xp, yp = [0] * n, [0] * n
        for k in x:
            xp[k] += 1
        for k in y:
            yp[k] += 1
        return cls(xp, yp)

    @property
    def order(self) -> int:
        return sum(self.x_part) + sum(self.y_part)

    def factorial(self) -> int:
        return math.prod(math.factorial(v) for v in self.x_part + self.y_part)


def _monomials(n: int, d: int) -> np.ndarray:
    mons = [e for e in itertools.product(range(d + 1), repeat=n) if sum(e) <= d]
    mons.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return np.array(mons, dtype=np.int64).reshape(len(mons), n)


def _pair_table(mons: np.ndarray, d: int):
    """All (i, j, k) with mon_i + mon_j = mon_k and total degree <= d."""
    n = mons.shape[1]
    base = (d + 1) ** np.arange(n)
    keys = mons @ base
    order = np.argsort(keys)
    sorted_keys = keys[order]
    deg = mons.sum(axis=1)
    i, j = np.nonzero(deg[:, None] + deg[None, :] <= d)
    k = order[np.searchsorted(sorted_keys, keys[i] + keys[j])]
    return i, j, k


class _Layout:
    """Index bookkeeping for one configuration."""

    def __init__(self, config: JetConfig):
        n = config.dim
        self.config = config
        self.xmon = _monomials(n, config.x_order)
        self.ymon = _monomials(n, config.y_order)
        self.nx, self.ny = len(self.xmon), len(self.ymon)
        self.size = self.nx * self.ny
        self._xindex = {tuple(m): i for i, m in enumerate(self.xmon)}
        self._yindex = {tuple(m): i for i, m in enumerate(self.ymon)}
        fx = np.array([math.prod(math.factorial(v) for v in m) for m in self.xmon], float)
        fy = np.array([math.prod(math.factorial(v) for v in m) for m in self.ymon], float)
        self.factorials = (fx[:, None] * fy[None, :]).ravel()
        self._mul = None

    def index(self, m: MultiIndex) -> int:
        try:
            return self._xindex[m.x_part] * self.ny + self._yindex[m.y_part]
        except KeyError:
            raise TruncationError(
                f"multi-index {m} outside caps x<={self.config.x_order}, "
                f"y<={self.config.y_order}") from None

    @property
    def mul_table(self):
        if self._mul is None:
            ix, jx, kx = _pair_table(self.xmon, self.config.x_order)
            iy, jy, ky = _pair_table(self.ymon, self.config.y_order)
            ny = self.ny
            I = (ix[:, None] * ny + iy[None, :]).ravel()
            J = (jx[:, None] * ny + jy[None, :]).ravel()
            K = (kx[:, None] * ny + ky[None, :]).ravel()
            order = np.argsort(K, kind="stable")
            I, J, K = I[order], J[order], K[order]
            starts = np.flatnonzero(np.r_[True, K[1:] != K[:-1]])
            assert len(starts) == self.size
            self._mul = (I.astype(np.intp), J.astype(np.intp), starts)
        return self._mul


@lru_cache(maxsize=None)
def layout(config: JetConfig) -> _Layout:
    return _Layout(config)


@lru_cache(maxsize=None)
def _restriction(src: JetConfig, dst: JetConfig) -> np.ndarray:
    """Positions in ``src`` of every coefficient of ``dst`` (dst must be a sub-box)."""
    ls, ld = layout(src), layout(dst)
    xi = np.array([ls._xindex[tuple(m)] for m in ld.xmon])
    yi = np.array([ls._yindex[tuple(m)] for m in ld.ymon])
    return (xi[:, None] * ls.ny + yi[None, :]).ravel()


@lru_cache(maxsize=None)
def _derivative_map(config: JetConfig, group: str, k: int):
    """Gather indices and factors for d/dx^k (group 'x') or d/dy^k (group 'y')."""
    out = config.lowered(dx=1) if group == "x" else config.lowered(dy=1)
    ls, lo = layout(config), layout(out)
    xmon, ymon = lo.xmon.copy(), lo.ymon.copy()
    if group == "x":
        fac = xmon[:, k] + 1.0
        xmon[:, k] += 1
        xi = np.array([ls._xindex[tuple(m)] for m in xmon])
        yi = np.arange(lo.ny)
        factors = np.repeat(fac, lo.ny)
    else:
        fac = ymon[:, k] + 1.0
        ymon[:, k] += 1
        xi = np.arange(lo.nx)
        yi = np.array([ls._yindex[tuple(m)] for m in ymon])
        factors = np.tile(fac, lo.nx)
    src = (xi[:, None] * ls.ny + yi[None, :]).ravel()
    return out, src, factors


def _is_const(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating, np.ndarray))


class Jet:
    """Truncated Taylor polynomial (optionally tensor-valued) at a base point."""

    __slots__ = ("config", "coeffs")
    __array_ufunc__ = None  # numpy defers binary operators to Jet

    def __init__(self, config: JetConfig, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1:] != (layout(config).size,):
            raise ValueError(
                f"coefficient axis has length {coeffs.shape[-1:]}, "
                f"expected {layout(config).size} for {config}")
        self.config = config
        self.coeffs = coeffs

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, config: JetConfig, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (layout(config).size,))
        c[..., 0] = value
        return cls(config, c)

    @classmethod
    def zeros(cls, config: JetConfig, shape=()) -> "Jet":
        return cls(config, np.zeros(tuple(shape) + (layout(config).size,)))

    @classmethod
    def stack(cls, jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        cfg = jets[0].config
        for j in jets[1:]:
            cfg = cfg.meet(j.config)
        arrays = [j.truncate(cfg).coeffs for j in jets]
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        arrays = [np.broadcast_to(a, shape) for a in arrays]
        ndim = len(shape) - 1
        if axis < 0:
            axis += ndim + 1
        return cls(cfg, np.stack(arrays, axis=axis))

    # -- shape handling -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.config, self.coeffs[key + (slice(None),)])

    def _axis(self, axis):
        if axis is None:
            return tuple(range(self.ndim))
        if isinstance(axis, int):
            axis = (axis,)
        return tuple(a + self.ndim if a < 0 else a for a in axis)

    def sum(self, axis=None) -> "Jet":
        return Jet(self.config, self.coeffs.sum(axis=self._axis(axis)))

    def transpose(self, *axes) -> "Jet":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Jet(self.config, self.coeffs.transpose(tuple(axes) + (self.ndim,)))

    def moveaxis(self, src, dst) -> "Jet":
        s, d = self._axis(src), self._axis(dst)
        return Jet(self.config, np.moveaxis(self.coeffs, s, d))

    def expand(self, axis) -> "Jet":
        return Jet(self.config, np.expand_dims(self.coeffs, axis if axis >= 0 else axis - 1))

    def value(self) -> np.ndarray | float:
        """Constant term (the quantity's value at the base point)."""
        v = self.coeffs[..., 0]
        return float(v) if v.ndim == 0 else v.copy()

    def max_abs(self) -> float:
        """Max-abs of the point values."""
        return float(np.max(np.abs(self.coeffs[..., 0]))) if self.coeffs.size else 0.0

    # -- truncation / derivatives --------------------------------------------
    def truncate(self, config: JetConfig) -> "Jet":
        if config == self.config:
            return self
        if config.dim != self.config.dim:
            raise ConfigMismatchError(f"dimension mismatch: {self.config.dim} vs {config.dim}")
        if config.x_order > self.config.x_order or config.y_order > self.config.y_order:
            raise TruncationError(f"cannot raise {self.config} to {config}")
        return Jet(config, self.coeffs[..., _restriction(self.config, config)])

    def dx(self, k: int) -> "Jet":
        out, src, fac = _derivative_map(self.config, "x", k)
        return Jet(out, self.coeffs[..., src] * fac)

    def dy(self, k: int) -> "Jet":
        out, src, fac = _derivative_map(self.config, "y", k)
        return Jet(out, self.coeffs[..., src] * fac)

    def grad_x(self) -> "Jet":
        """Coordinate gradient appended as a trailing axis (T_{;m})."""
        return Jet.stack([self.dx(k) for k in range(self.config.dim)], axis=-1)

    def grad_y(self) -> "Jet":
        """Vertical gradient appended as a trailing axis (T_{.m})."""
        return Jet.stack([self.dy(k) for k in range(self.config.dim)], axis=-1)

    def partial(self, m: MultiIndex):
        """True mixed partial derivative d^a_x d^b_y at the base point."""
        lay = layout(self.config)
        idx = lay.index(m)
        v = self.coeffs[..., idx] * lay.factorials[idx]
        return float(v) if np.ndim(v) == 0 else v

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            cfg = self.config.meet(other.config)
            return self.truncate(cfg), other.truncate(cfg)
        return None

    def __neg__(self):
        return Jet(self.config, -self.coeffs)

    def __pos__(self):
        return self

    def __add__(self, other):
        pair = self._coerce(other)
        if pair is not None:
            a, b = pair
            return Jet(a.config, a.coeffs + b.coeffs)
        if not _is_const(other):
            return NotImplemented
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.array(np.broadcast_to(self.coeffs, shape + self.coeffs.shape[-1:]))
        c[..., 0] += other
        return Jet(self.config, c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet) or _is_const(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.config, _convolve(a.config, a.coeffs, b.coeffs))
        if not _is_const(other):
            return NotImplemented
        return Jet(self.config, self.coeffs * np.asarray(other, dtype=float)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if not _is_const(other):
            return NotImplemented
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and 0 <= p <= 4:
            out = Jet.constant(self.config, np.ones(self.shape))
            for _ in range(int(p)):
                out = out * self
            return out
        return self.power(float(p))

    # -- elementary functions via Taylor composition ------------------------
    def _compose(self, taylor: Callable[[np.ndarray, int], np.ndarray]) -> "Jet":
        """f(self) where taylor(c, K)[k] = f^(k)(c)/k! for k = 0..K."""
        c = self.coeffs[..., 0]
        K = self.config.x_order + self.config.y_order
        d = taylor(c, K)
        h = Jet(self.config, self.coeffs.copy())
        h.coeffs[..., 0] = 0.0
        out = Jet.constant(self.config, d[K])
        for k in range(K - 1, -1, -1):
            out = out * h + d[k]
        return out

    def reciprocal(self) -> "Jet":
        c = self.coeffs[..., 0]
        if np.any(c == 0.0):
            raise SingularEvaluationError("reciprocal of a jet with zero constant term",
                                          value=float(np.min(np.abs(c))))

        def taylor(c, K):
            return np.array([(-1.0) ** k / c ** (k + 1) for k in range(K + 1)])

        return self._compose(taylor)

    def power(self, p: float) -> "Jet":
        c = self.coeffs[..., 0]
        integral = float(p).is_integer()
        if integral and p >= 0:
            pass
        elif integral:
            if np.any(c == 0.0):
                raise SingularEvaluationError(
                    f"power {p} of a jet with zero constant term", value=0.0)
        elif np.any(c <= 0.0):
            raise SingularEvaluationError(
                f"power {p} needs a positive constant term", value=float(np.min(c)))

        def taylor(c, K):
            out, coef = [], 1.0
            for k in range(K + 1):
                if k:
                    coef *= (p - k + 1) / k
                if coef == 0.0:
                    out.append(np.zeros_like(c))
                else:
                    out.append(coef * c ** (p - k))
            return np.array(out)

        return self._compose(taylor)

    def sqrt(self) -> "Jet":
        c = self.coeffs[..., 0]
        if np.any(c <= 0.0):
            raise SingularEvaluationError("sqrt needs a strictly positive constant term",
                                          value=float(np.min(c)))
        return self.power(0.5)

    def __repr__(self):
        cfg = self.config
        return (f"Jet(dim={cfg.dim}, x_order={cfg.x_order}, y_order={cfg.y_order}, "
                f"shape={self.shape}, value={self.value()!r})")


def _convolve(config: JetConfig, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    I, J, starts = layout(config).mul_table
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    batch = math.prod(shape)
    if batch * len(I) <= _CHUNK_ELEMENTS:
        return np.add.reduceat(a[..., I] * b[..., J], starts, axis=-1)
    n = a.shape[-1]
    a = np.broadcast_to(a, shape + (n,)).reshape(batch, n)
    b = np.broadcast_to(b, shape + (n,)).reshape(batch, n)
    step = max(1, _CHUNK_ELEMENTS // len(I))
    out = np.empty((batch, n))
    for s in range(0, batch, step):
        out[s:s + step] = np.add.reduceat(a[s:s + step, I] * b[s:s + step, J], starts, axis=-1)
    return out.reshape(shape + (n,))


# -- functional API ----------------------------------------------------------

def seed_point(x, y, config: JetConfig):
    """Coordinate jets for x^1..x^n and y^1..y^n at the base point (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = config.dim
    if x.shape != (n,) or y.shape != (n,):
        raise ValueError(f"x and y must be {n}-vectors")
    if not np.any(y):
        raise SingularEvaluationError("y = 0 lies outside the slit tangent bundle", value=0.0)
    lay = layout(config)
    xs, ys = [], []
    for k in range(n):
        e = [0] * n
        e[k] = 1
        cx = np.zeros(lay.size)
        cx[0] = x[k]
        if config.x_order >= 1:
            cx[lay.index(MultiIndex(e, [0] * n))] = 1.0
        cy = np.zeros(lay.size)
        cy[0] = y[k]
        if config.y_order >= 1:
            cy[lay.index(MultiIndex([0] * n, e))] = 1.0
        xs.append(Jet(config, cx))
        ys.append(Jet(config, cy))
    return xs, ys


def seed_vectors(x, y, config: JetConfig):
    """Seeded coordinates as two vector-valued jets of shape (n,)."""
    xs, ys = seed_point(x, y, config)
    return Jet.stack(xs), Jet.stack(ys)


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def scale(a: Jet, c) -> Jet:
    return a * c


def reciprocal(a: Jet) -> Jet:
    return a.reciprocal()


def sqrt(a):
    if isinstance(a, Jet):
        return a.sqrt()
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise SingularEvaluationError("sqrt of a negative value", value=float(np.min(a)))
    return np.sqrt(a)


def pow(a, p):  # noqa: A001 - mirrors the arithmetic vocabulary of the module
    if isinstance(a, Jet):
        return a ** p
    return np.asarray(a, dtype=float) ** p


def partial(a: Jet, m: MultiIndex):
    return a.partial(m)


# -- contraction helper ------------------------------------------------------

def einsum(subscripts: str, *operands):
    """Minimal einsum over jets and constant arrays.

    Only explicit-output subscripts are supported (``'ij,jk->ik'``). Jets are
    multiplied by truncated convolution; ndarray operands act as constants.
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    labels = inputs.split(",")
    if len(labels) != len(operands):
        raise ValueError("operand count does not match subscripts")
    terms = list(zip(labels, operands))
    lab, acc = terms[0]
    for i, (lb, op) in enumerate(terms[1:], start=1):
        later = set(output).union(*(set(l) for l, _ in terms[i + 1:]))
        lab, acc = _contract_pair(lab, acc, lb, op, later)
    # sum leftover letters and order the output
    extra = [c for c in lab if c not in output]
    if extra:
        acc = acc.sum(axis=tuple(lab.index(c) for c in extra))
        lab = "".join(c for c in lab if c in output)
    perm = tuple(lab.index(c) for c in output)
    if isinstance(acc, Jet):
        return acc.transpose(perm) if perm != tuple(range(len(perm))) else acc
    return np.transpose(acc, perm)


def _align(label: str, op, target: str):
    present = [c for c in target if c in label]
    perm = tuple(label.index(c) for c in present)
    if isinstance(op, Jet):
        dims = dict(zip(label, op.shape))
        c = op.coeffs.transpose(perm + (op.ndim,))
        shape = tuple(dims[c_] if c_ in label else 1 for c_ in target)
        return Jet(op.config, c.reshape(shape + c.shape[-1:]))
    op = np.asarray(op, dtype=float)
    dims = dict(zip(label, op.shape))
    shape = tuple(dims[c_] if c_ in label else 1 for c_ in target)
    return op.transpose(perm).reshape(shape)


def _contract_pair(la, a, lb, b, keep: set):
    union = la + "".join(c for c in lb if c not in la)
    prod = _align(la, a, union) * _align(lb, b, union)
    summed = [c for c in union if c not in keep]
    if summed:
        axes = tuple(union.index(c) for c in summed)
        prod = prod.sum(axis=axes)
        union = "".join(c for c in union if c not in summed)
    return union, prod


# -- finite-difference oracle -------------------------------------------------

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def fd_oracle(f: Callable, x, y, m: MultiIndex, step: float = 1e-3) -> float:
    """Central-difference estimate of a mixed partial of f(x, y), order <= 3.

    Nested per-variable central stencils with step ``step * (|coord| + 1)``
    and one level of Richardson extrapolation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if m.order > 3:
        raise ValueError("finite differences are limited to total order <= 3")
    if not (np.isfinite(step) and 1e-7 <= step <= 0.1):
        raise ValueError(f"step {step} outside the guarded range [1e-7, 0.1]")
    if m.order == 0:
        return float(f(x, y))
    point = np.concatenate([x, y])
    orders = list(m.x_part) + list(m.y_part)
    active = [(v, k) for v, k in enumerate(orders) if k]

    def estimate(h0):
        hs = {v: h0 * (abs(point[v]) + 1.0) for v, _ in active}
        total = 0.0
        for combo in itertools.product(*(_STENCILS[k] for _, k in active)):
            p = point.copy()
            w = 1.0
            for (v, k), (off, wt) in zip(active, combo):
                p[v] += off * hs[v]
                w *= wt / hs[v] ** k
            total += w * f(p[:n], p[n:])
        return total

    coarse, fine = estimate(step), estimate(step / 2)
    return float((4.0 * fine - coarse) / 3.0)
