"""Expression trees for metric ingredients.

Expressions are built over the coordinate symbols ``x1..xn``, ``y1..yn`` and
the spherically symmetric shorthands ``u = |y|``, ``r = |x|``, ``v = <x, y>``
and ``s = v / u``. The shorthands are expanded into coordinate expressions at
evaluation time, so derivatives of ``phi(r, s)`` follow from the chain rule
inside the jet arithmetic.

Two text forms are accepted: infix strings (``"s*h - (s/s0 - 1)/(a + b*r**2)**2"``)
and nested operator objects (``{"op": "add", "args": [...]}``).
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import jet as _jet

BINARY = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
SHORTHANDS = ("u", "r", "s", "v")
_SYMBOL = re.compile(r"^(?:[xy][1-9]|[urvs])$")


class ExprError(ValueError):
    pass


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple = ()
    value: float | str | None = None

    # -- builders -----------------------------------------------------------
    @staticmethod
    def const(c: float) -> "Expr":
        return Expr("const", value=float(c))

    @staticmethod
    def sym(name: str) -> "Expr":
        if not _SYMBOL.match(name):
            raise ExprError(f"unknown symbol {name!r}")
        return Expr("sym", value=name)

    def __add__(self, o):
        return Expr("add", (self, _wrap(o)))

    def __radd__(self, o):
        return Expr("add", (_wrap(o), self))

    def __sub__(self, o):
        return Expr("sub", (self, _wrap(o)))

    def __rsub__(self, o):
        return Expr("sub", (_wrap(o), self))

    def __mul__(self, o):
        return Expr("mul", (self, _wrap(o)))

    def __rmul__(self, o):
        return Expr("mul", (_wrap(o), self))

    def __truediv__(self, o):
        return Expr("div", (self, _wrap(o)))

    def __rtruediv__(self, o):
        return Expr("div", (_wrap(o), self))

    def __neg__(self):
        return Expr("neg", (self,))

    def __pow__(self, p):
        return Expr("pow", (self,), value=float(p))

    # -- inspection ---------------------------------------------------------
    def symbols(self) -> set:
        if self.op == "sym":
            return {self.value}
        out = set()
        for a in self.args:
            out |= a.symbols()
        return out

    def max_index(self) -> int:
        idx = [int(s[1:]) for s in self.symbols() if len(s) > 1]
        return max(idx, default=0)

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, env: Mapping[str, object]):
        """Evaluate with symbol values taken from ``env`` (floats or jets)."""
        op = self.op
        if op == "const":
            return self.value
        if op == "sym":
            try:
                return env[self.value]
            except KeyError:
                raise ExprError(f"symbol {self.value!r} not bound") from None
        vals = [a.evaluate(env) for a in self.args]
        if op == "add":
            return vals[0] + vals[1]
        if op == "sub":
            return vals[0] - vals[1]
        if op == "mul":
            return vals[0] * vals[1]
        if op == "div":
            d = vals[1]
            if not isinstance(d, _jet.Jet) and np.any(np.asarray(d) == 0):
                raise _jet.SingularEvaluationError("division by zero", value=0.0)
            return vals[0] / d
        if op == "neg":
            return -vals[0]
        if op == "sqrt":
            return _jet.sqrt(vals[0])
        if op == "pow":
            return _pow(vals[0], self.value)
        raise ExprError(f"unknown operator {op!r}")

    # -- serialization ------------------------------------------------------
    def to_data(self):
        if self.op == "const":
            return self.value
        if self.op == "sym":
            return self.value
        d = {"op": self.op, "args": [a.to_data() for a in self.args]}
        if self.op == "pow":
            d["exponent"] = self.value
        return d

    def __str__(self):
        return _print(self)


def _pow(base, p: float):
    if isinstance(base, _jet.Jet):
        if float(p).is_integer() and 0 <= p <= 4:
            return base ** int(p)
        return base.power(p)
    base = np.asarray(base, dtype=float)
    if not float(p).is_integer() and np.any(base <= 0):
        raise _jet.SingularEvaluationError(f"non-integer power {p} of a non-positive value",
                                           value=float(np.min(base)))
    return base ** p


def _wrap(o) -> Expr:
    if isinstance(o, Expr):
        return o
    return Expr.const(o)


def sqrt(e) -> Expr:
    return Expr("sqrt", (_wrap(e),))


def _print(e: Expr, parent: int = 0) -> str:
    if e.op == "const":
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if e.op == "sym":
        return e.value
    if e.op == "sqrt":
        return f"sqrt({_print(e.args[0])})"
    prec = _PRECEDENCE[e.op]
    if e.op == "neg":
        text = f"-{_print(e.args[0], prec)}"
    elif e.op == "pow":
        text = f"{_print(e.args[0], prec + 1)}**{e.value!r}"
    else:
        # right operand of - and / binds tighter to keep the tree shape
        right = prec + 1 if e.op in ("sub", "div") else prec
        text = f"{_print(e.args[0], prec)} {BINARY[e.op]} {_print(e.args[1], right)}"
    return f"({text})" if prec < parent else text


# -- parsing -------------------------------------------------------------------

_AST_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}


def parse(text: str, params: Mapping[str, float] | None = None) -> Expr:
    """Parse an infix expression; names in ``params`` become constants."""
    params = dict(params or {})
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {text!r}: {exc.msg}") from None
    return _from_ast(tree.body, params)


def _from_ast(node, params) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return Expr.const(node.value)
    if isinstance(node, ast.Name):
        if node.id in params:
            return Expr.const(params[node.id])
        return Expr.sym(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _from_ast(node.operand, params)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            exp = _from_ast(node.right, params)
            if exp.op == "neg" and exp.args[0].op == "const":
                exp = Expr.const(-exp.args[0].value)
            if exp.op != "const":
                raise ExprError("exponents must be numeric constants")
            return _from_ast(node.left, params) ** exp.value
        op = _AST_BINOPS.get(type(node.op))
        if op is None:
            raise ExprError(f"operator {type(node.op).__name__} not supported")
        return Expr(op, (_from_ast(node.left, params), _from_ast(node.right, params)))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt":
        if len(node.args) != 1 or node.keywords:
            raise ExprError("sqrt takes exactly one argument")
        return sqrt(_from_ast(node.args[0], params))
    raise ExprError(f"unsupported syntax: {ast.dump(node)[:60]}")


def from_data(data, params: Mapping[str, float] | None = None) -> Expr:
    """Build an expression from nested operator objects, numbers or infix strings."""
    if isinstance(data, Expr):
        return data
    if isinstance(data, bool):
        raise ExprError("booleans are not expressions")
    if isinstance(data, (int, float)):
        return Expr.const(data)
    if isinstance(data, str):
        return parse(data, params)
    if isinstance(data, Mapping):
        op = data.get("op")
        args = [from_data(a, params) for a in data.get("args", [])]
        if op in BINARY:
            if len(args) != 2:
                raise ExprError(f"{op} takes two arguments")
            return Expr(op, tuple(args))
        if op in ("neg", "sqrt"):
            if len(args) != 1:
                raise ExprError(f"{op} takes one argument")
            return Expr(op, tuple(args))
        if op == "pow":
            if len(args) != 1 or "exponent" not in data:
                raise ExprError("pow takes one argument and a numeric 'exponent'")
            return args[0] ** float(data["exponent"])
        raise ExprError(f"unknown operator {op!r}")
    raise ExprError(f"cannot interpret {data!r} as an expression")


def coordinate_env(x, y) -> dict:
    """Bind x1..xn, y1..yn and lazily derived u, r, v, s for float or jet inputs."""
    n = len(x)
    env = {}
    for k in range(n):
        env[f"x{k + 1}"] = x[k]
        env[f"y{k + 1}"] = y[k]
    return _LazyEnv(env, x, y)


class _LazyEnv(dict):
    def __init__(self, base, x, y):
        super().__init__(base)
        self._x, self._y = x, y

    def __missing__(self, key):
        x, y = self._x, self._y
        if key == "u":
            val = _jet.sqrt(_dot(y, y))
        elif key == "r":
            val = _jet.sqrt(_dot(x, x))
        elif key == "v":
            val = _dot(x, y)
        elif key == "s":
            val = self["v"] / self["u"]
        else:
            raise KeyError(key)
        self[key] = val
        return val


def _dot(a, b):
    out = a[0] * b[0]
    for k in range(1, len(a)):
        out = out + a[k] * b[k]
    return out
