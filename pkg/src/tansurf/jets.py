"""Truncated Taylor-series (jet) arithmetic.

A `Jet` holds coefficients c[0..n] of sum_i c[i] (t - t0)^i.  Arithmetic,
composition with sin/cos/exp, division, and integer powers follow the
standard recurrences, so evaluating an expression DAG in jet arithmetic
yields every t-derivative at t0 up to order n in one pass, to machine
precision — no symbolic expansion, no finite-difference noise.

Operations on jets of different orders truncate to the smaller order
(the result is only trustworthy that far).
"""

from __future__ import annotations

import math

import numpy as np

from .expr import (
    Add,
    Const,
    Cos,
    Div,
    EvaluationError,
    Exp,
    Expression,
    Mul,
    Neg,
    Pow,
    Sin,
    Sub,
    Var,
)

__all__ = ["Jet", "jet_eval"]


class Jet:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)
        if self.c.ndim != 1 or len(self.c) == 0:
            raise ValueError("jet coefficients must be a non-empty 1-d array")

    @staticmethod
    def constant(value: float, order: int) -> "Jet":
        c = np.zeros(order + 1)
        c[0] = value
        return Jet(c)

    @staticmethod
    def variable(value: float, order: int) -> "Jet":
        """The jet of t itself expanded at t0 = value: c = [value, 1, 0, ...]."""
        c = np.zeros(order + 1)
        c[0] = value
        if order >= 1:
            c[1] = 1.0
        return Jet(c)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    @property
    def value(self) -> float:
        return float(self.c[0])

    def derivative_value(self, k: int) -> float:
        """d^k/dt^k at the expansion point (k! c_k)."""
        if k > self.order:
            raise ValueError(f"jet of order {self.order} has no derivative {k}")
        return float(self.c[k]) * math.factorial(k)

    def deriv(self) -> "Jet":
        """Jet of the t-derivative; order drops by one."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        n = self.order
        return Jet(self.c[1:] * np.arange(1, n + 1, dtype=float))

    # -- helpers ------------------------------------------------------------

    def _pair(self, other):
        if isinstance(other, Jet):
            n = min(len(self.c), len(other.c))
            return self.c[:n], other.c[:n]
        if isinstance(other, (int, float)):
            b = np.zeros(len(self.c))
            b[0] = float(other)
            return self.c, b
        return None, None

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(a - b)

    def __rsub__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(b - a)

    def __neg__(self):
        return Jet(-self.c)

    def __mul__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(np.convolve(a, b)[: len(a)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(_div(a, b))

    def __rtruediv__(self, other):
        a, b = self._pair(other)
        if a is None:
            return NotImplemented
        return Jet(_div(b, a))

    def powi(self, p: int) -> "Jet":
        if p == 0:
            return Jet.constant(1.0, self.order)
        if p < 0:
            one = np.zeros(len(self.c))
            one[0] = 1.0
            return Jet(_div(one, self.powi(-p).c))
        result = None
        base = self
        n = p
        while n:
            if n & 1:
                result = base if result is None else result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # -- analytic functions --------------------------------------------------

    def exp(self) -> "Jet":
        a = self.c
        n = len(a)
        arg = a[0]
        if arg > 700.0:
            raise EvaluationError("exp overflow in jet arithmetic")
        e = np.zeros(n)
        e[0] = math.exp(arg)
        j = np.arange(n, dtype=float)
        for k in range(1, n):
            e[k] = np.dot(j[1 : k + 1] * a[1 : k + 1], e[k - 1 :: -1][:k]) / k
        return Jet(e)

    def sincos(self) -> tuple["Jet", "Jet"]:
        a = self.c
        n = len(a)
        s = np.zeros(n)
        co = np.zeros(n)
        s[0] = math.sin(a[0])
        co[0] = math.cos(a[0])
        j = np.arange(n, dtype=float)
        for k in range(1, n):
            ja = j[1 : k + 1] * a[1 : k + 1]
            s[k] = np.dot(ja, co[k - 1 :: -1][:k]) / k
            co[k] = -np.dot(ja, s[k - 1 :: -1][:k]) / k
        return Jet(s), Jet(co)

    def sin(self) -> "Jet":
        return self.sincos()[0]

    def cos(self) -> "Jet":
        return self.sincos()[1]

    def __repr__(self):
        return f"Jet({np.array2string(self.c, precision=6)})"


def _div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = min(len(a), len(b))
    a = a[:n]
    b = b[:n]
    if b[0] == 0.0:
        raise EvaluationError("division by a jet with zero constant term")
    q = np.zeros(n)
    q[0] = a[0] / b[0]
    for k in range(1, n):
        q[k] = (a[k] - np.dot(b[1 : k + 1], q[k - 1 :: -1][:k])) / b[0]
    return q


def jet_eval(expr: Expression, env: dict[str, "Jet | float"], order: int | None = None) -> Jet:
    """Evaluate an expression in jet arithmetic.

    env maps variable names to jets (or plain floats, lifted to constant
    jets).  All jets in env should share an order; pass `order` explicitly
    if env contains no jets.
    """
    if order is None:
        orders = [v.order for v in env.values() if isinstance(v, Jet)]
        if not orders:
            raise ValueError("no jets in env; pass order explicitly")
        order = min(orders)
    memo: dict[int, Jet] = {}

    def rec(node: Expression) -> Jet:
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Const):
            out = Jet.constant(node.value, order)
        elif isinstance(node, Var):
            try:
                raw = env[node.name]
            except KeyError:
                raise EvaluationError(f"unbound variable '{node.name}'") from None
            out = raw if isinstance(raw, Jet) else Jet.constant(float(raw), order)
        elif isinstance(node, Neg):
            out = -rec(node.arg)
        elif isinstance(node, Sin):
            out = rec(node.arg).sin()
        elif isinstance(node, Cos):
            out = rec(node.arg).cos()
        elif isinstance(node, Exp):
            out = rec(node.arg).exp()
        elif isinstance(node, Add):
            out = rec(node.left) + rec(node.right)
        elif isinstance(node, Sub):
            out = rec(node.left) - rec(node.right)
        elif isinstance(node, Mul):
            out = rec(node.left) * rec(node.right)
        elif isinstance(node, Div):
            out = rec(node.left) / rec(node.right)
        elif isinstance(node, Pow):
            out = rec(node.base).powi(node.exponent)
        else:  # pragma: no cover
            raise TypeError(f"unknown expression node {type(node).__name__}")
        memo[id(node)] = out
        return out

    result = rec(expr)
    if not np.isfinite(result.c).all():
        raise EvaluationError("non-finite value in jet arithmetic")
    return result
