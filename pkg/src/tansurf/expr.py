"""Symbolic scalar expressions in a curve parameter ``t`` and coordinates ``x1..xm``.

A tiny expression language backs every user-facing input of the package:
connection coefficient tables, curve components, frames and scale factors.
The grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-')? atom ('^' integer)?
    atom   := number | ident | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp'
    ident  := 't' | 'x' digit+

``^`` binds tighter than unary minus, which binds tighter than ``*``/``/``,
which bind tighter than ``+``/``-``; binary operators are left-associative
and exponents are integers only.  Trees are immutable; differentiation and
substitution return new trees and are DAG-aware so that shared subtrees stay
shared instead of being copied exponentially.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping


class ExpressionError(Exception):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    """Syntax or identifier error, carrying the byte offset into the source text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EvaluationError(ExpressionError, ArithmeticError):
    """Runtime evaluation failure: unbound variable, division by zero, 0^negative."""


class Expression:
    """Base node.  Subclasses define `_eval`, `_diff`, `_subst` and printing."""

    __slots__ = ()

    # -- public API ------------------------------------------------------

    def evaluate(self, env: Mapping[str, float]) -> float:
        """Evaluate with variable bindings from `env` (name -> float)."""
        return _memo_eval(self, env, {})

    def diff(self, var: str) -> "Expression":
        """Partial derivative with respect to `var`, as a new tree."""
        return self._diff(var, {})

    def substitute(self, mapping: Mapping[str, "Expression"]) -> "Expression":
        """Replace variables by subexpressions (simultaneous substitution)."""
        return self._subst(mapping, {})

    def _diff(self, var: str, memo: dict) -> "Expression":
        key = id(self)
        hit = memo.get(key)
        if hit is None:
            hit = _dispatch_diff(self, var, memo)
            memo[key] = hit
        return hit

    def _subst(self, mapping, memo: dict) -> "Expression":
        key = id(self)
        hit = memo.get(key)
        if hit is None:
            hit = _dispatch_subst(self, mapping, memo)
            memo[key] = hit
        return hit

    def variables(self) -> frozenset[str]:
        out: set[str] = set()
        _collect_vars(self, out, set())
        return frozenset(out)

    def node_count(self) -> int:
        """Number of distinct nodes reachable from this tree (DAG count)."""
        seen: set[int] = set()
        _count_nodes(self, seen)
        return len(seen)

    # -- operator sugar, used heavily when building trees in code ---------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return powi(self, n)

    def __repr__(self):
        return f"{type(self).__name__}({self})"

    # precedence for printing: +- =1, */ =2, unary- =3, ^ =4, atom =5
    _prec = 5


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {value!r} in an expression")


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"-{abs(self.value)!r}"

    _prec = 5  # printed bare; negative constants are parenthesized by parents as needed


class Var(Expression):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __str__(self):
        return self.name


class _Unary(Expression):
    __slots__ = ("arg",)

    def __init__(self, arg: Expression):
        self.arg = arg


class Neg(_Unary):
    _prec = 3

    def __str__(self):
        return "-" + _wrap(self.arg, 4)


class Sin(_Unary):
    def __str__(self):
        return f"sin({self.arg})"


class Cos(_Unary):
    def __str__(self):
        return f"cos({self.arg})"


class Exp(_Unary):
    def __str__(self):
        return f"exp({self.arg})"


class _Binary(Expression):
    __slots__ = ("left", "right")

    def __init__(self, left: Expression, right: Expression):
        self.left = left
        self.right = right


class Add(_Binary):
    _prec = 1

    def __str__(self):
        return f"{_wrap(self.left, 1)} + {_wrap(self.right, 2)}"


class Sub(_Binary):
    _prec = 1

    def __str__(self):
        return f"{_wrap(self.left, 1)} - {_wrap(self.right, 2)}"


class Mul(_Binary):
    _prec = 2

    def __str__(self):
        return f"{_wrap(self.left, 2)} * {_wrap(self.right, 3)}"


class Div(_Binary):
    _prec = 2

    def __str__(self):
        return f"{_wrap(self.left, 2)} / {_wrap(self.right, 3)}"


class Pow(Expression):
    """Integer power of an atom; the exponent is a plain int, not a subtree."""

    __slots__ = ("base", "exponent")
    _prec = 4

    def __init__(self, base: Expression, exponent: int):
        self.base = base
        self.exponent = int(exponent)

    def __str__(self):
        base = str(self.base)
        if not _is_bare_atom(self.base):
            base = f"({base})"
        return f"{base}^{self.exponent}"


def _is_bare_atom(e: Expression) -> bool:
    return isinstance(e, (Var, Sin, Cos, Exp)) or (isinstance(e, Const) and e.value >= 0)


def _wrap(e: Expression, min_prec: int) -> str:
    text = str(e)
    prec = e._prec
    if isinstance(e, Const) and e.value < 0:
        prec = 3  # prints with a leading minus
    return f"({text})" if prec < min_prec else text


# ---------------------------------------------------------------------------
# smart constructors (the optional constant-folding pass, applied on build)
# ---------------------------------------------------------------------------


def _is_const(e: Expression, v: float | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


ZERO = Const(0.0)
ONE = Const(1.0)


def add(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a: Expression) -> Expression:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def powi(base: Expression, exponent: int) -> Expression:
    exponent = int(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if _is_const(base) and not (base.value == 0.0 and exponent < 0):
        return Const(base.value**exponent)
    return Pow(base, exponent)


# ---------------------------------------------------------------------------
# evaluation / differentiation / substitution (DAG-aware)
# ---------------------------------------------------------------------------


def _memo_eval(e: Expression, env: Mapping[str, float], memo: dict[int, float]) -> float:
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        v = e.value
    elif isinstance(e, Var):
        try:
            v = float(env[e.name])
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    elif isinstance(e, Neg):
        v = -_memo_eval(e.arg, env, memo)
    elif isinstance(e, Sin):
        v = math.sin(_memo_eval(e.arg, env, memo))
    elif isinstance(e, Cos):
        v = math.cos(_memo_eval(e.arg, env, memo))
    elif isinstance(e, Exp):
        try:
            v = math.exp(_memo_eval(e.arg, env, memo))
        except OverflowError:
            raise EvaluationError("exp overflow") from None
    elif isinstance(e, Add):
        v = _memo_eval(e.left, env, memo) + _memo_eval(e.right, env, memo)
    elif isinstance(e, Sub):
        v = _memo_eval(e.left, env, memo) - _memo_eval(e.right, env, memo)
    elif isinstance(e, Mul):
        v = _memo_eval(e.left, env, memo) * _memo_eval(e.right, env, memo)
    elif isinstance(e, Div):
        denom = _memo_eval(e.right, env, memo)
        if denom == 0.0:
            raise EvaluationError("division by zero")
        v = _memo_eval(e.left, env, memo) / denom
    elif isinstance(e, Pow):
        b = _memo_eval(e.base, env, memo)
        if b == 0.0 and e.exponent < 0:
            raise EvaluationError("zero raised to a negative power")
        try:
            v = b**e.exponent
        except OverflowError:
            raise EvaluationError("power overflow") from None
    else:  # pragma: no cover - sealed hierarchy
        raise TypeError(f"unknown node {type(e)}")
    memo[key] = v
    return v


def _dispatch_diff(e: Expression, var: str, memo) -> Expression:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(e.arg._diff(var, memo))
    if isinstance(e, Sin):
        return mul(Cos(e.arg), e.arg._diff(var, memo))
    if isinstance(e, Cos):
        return neg(mul(Sin(e.arg), e.arg._diff(var, memo)))
    if isinstance(e, Exp):
        return mul(Exp(e.arg), e.arg._diff(var, memo))
    if isinstance(e, Add):
        return add(e.left._diff(var, memo), e.right._diff(var, memo))
    if isinstance(e, Sub):
        return sub(e.left._diff(var, memo), e.right._diff(var, memo))
    if isinstance(e, Mul):
        return add(
            mul(e.left._diff(var, memo), e.right),
            mul(e.left, e.right._diff(var, memo)),
        )
    if isinstance(e, Div):
        # (u/v)' = u'/v - u v'/v^2
        return sub(
            div(e.left._diff(var, memo), e.right),
            div(mul(e.left, e.right._diff(var, memo)), powi(e.right, 2)),
        )
    if isinstance(e, Pow):
        return mul(
            mul(Const(e.exponent), powi(e.base, e.exponent - 1)),
            e.base._diff(var, memo),
        )
    raise TypeError(f"unknown node {type(e)}")  # pragma: no cover


def _dispatch_subst(e: Expression, mapping, memo: dict[int, Expression]) -> Expression:
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return neg(e.arg._subst(mapping, memo))
    if isinstance(e, Sin):
        return Sin(e.arg._subst(mapping, memo))
    if isinstance(e, Cos):
        return Cos(e.arg._subst(mapping, memo))
    if isinstance(e, Exp):
        return Exp(e.arg._subst(mapping, memo))
    if isinstance(e, Add):
        return add(e.left._subst(mapping, memo), e.right._subst(mapping, memo))
    if isinstance(e, Sub):
        return sub(e.left._subst(mapping, memo), e.right._subst(mapping, memo))
    if isinstance(e, Mul):
        return mul(e.left._subst(mapping, memo), e.right._subst(mapping, memo))
    if isinstance(e, Div):
        return div(e.left._subst(mapping, memo), e.right._subst(mapping, memo))
    if isinstance(e, Pow):
        return powi(e.base._subst(mapping, memo), e.exponent)
    raise TypeError(f"unknown node {type(e)}")  # pragma: no cover


def _collect_vars(e: Expression, out: set[str], seen: set[int]) -> None:
    if id(e) in seen:
        return
    seen.add(id(e))
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, _Unary):
        _collect_vars(e.arg, out, seen)
    elif isinstance(e, _Binary):
        _collect_vars(e.left, out, seen)
        _collect_vars(e.right, out, seen)
    elif isinstance(e, Pow):
        _collect_vars(e.base, out, seen)


def _count_nodes(e: Expression, seen: set[int]) -> None:
    if id(e) in seen:
        return
    seen.add(id(e))
    if isinstance(e, _Unary):
        _count_nodes(e.arg, seen)
    elif isinstance(e, _Binary):
        _count_nodes(e.left, seen)
        _count_nodes(e.right, seen)
    elif isinstance(e, Pow):
        _count_nodes(e.base, seen)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCS: dict[str, Callable[[Expression], Expression]] = {
    "sin": Sin,
    "cos": Cos,
    "exp": Exp,
}

_IDENT_RE = re.compile(r"^(t|s|x[0-9]+)$")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tok: str | None = None
        self.kind = "eof"
        self.tok_offset = 0
        self.advance()

    def advance(self) -> None:
        text, pos = self.text, self.pos
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            self.tok, self.kind, self.tok_offset, self.pos = None, "eof", pos, pos
            return
        m = _TOKEN_RE.match(text, pos)
        if not m or m.start() != pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        self.tok_offset = m.start(m.lastgroup)  # type: ignore[arg-type]
        self.tok = m.group(m.lastgroup)  # type: ignore[arg-type]
        self.kind = m.lastgroup or "eof"
        self.pos = m.end()

    def expect_op(self, op: str) -> None:
        if self.kind != "op" or self.tok != op:
            raise ParseError(f"expected {op!r}", self.tok_offset)
        self.advance()


def parse(text: str, dim: int | None = None) -> Expression:
    """Parse an expression string.

    `dim`, when given, restricts coordinate variables to x1..x`dim` (the
    parameter `t` is always accepted); violations raise :class:`ParseError`
    with the byte offset of the offending identifier.
    """
    tz = _Tokenizer(text)
    e = _parse_sum(tz, dim)
    if tz.kind != "eof":
        raise ParseError(f"unexpected trailing input {tz.tok!r}", tz.tok_offset)
    return e


def _parse_sum(tz: _Tokenizer, dim) -> Expression:
    e = _parse_term(tz, dim)
    while tz.kind == "op" and tz.tok in "+-":
        op = tz.tok
        tz.advance()
        rhs = _parse_term(tz, dim)
        e = add(e, rhs) if op == "+" else sub(e, rhs)
    return e


def _parse_term(tz: _Tokenizer, dim) -> Expression:
    e = _parse_factor(tz, dim)
    while tz.kind == "op" and tz.tok in "*/":
        op = tz.tok
        tz.advance()
        rhs = _parse_factor(tz, dim)
        e = mul(e, rhs) if op == "*" else div(e, rhs)
    return e


def _parse_factor(tz: _Tokenizer, dim) -> Expression:
    negate = False
    if tz.kind == "op" and tz.tok == "-":
        negate = True
        tz.advance()
    e = _parse_atom(tz, dim)
    if tz.kind == "op" and tz.tok == "^":
        tz.advance()
        e = powi(e, _parse_int_exponent(tz))
    return neg(e) if negate else e


def _parse_int_exponent(tz: _Tokenizer) -> int:
    sign = 1
    if tz.kind == "op" and tz.tok == "-":
        sign = -1
        tz.advance()
    if tz.kind != "number":
        raise ParseError("expected integer exponent", tz.tok_offset)
    raw = tz.tok or ""
    if not raw.isdigit():
        raise ParseError(f"exponent must be an integer, got {raw!r}", tz.tok_offset)
    tz.advance()
    return sign * int(raw)


def _parse_atom(tz: _Tokenizer, dim) -> Expression:
    if tz.kind == "number":
        value = float(tz.tok or "")
        tz.advance()
        return Const(value)
    if tz.kind == "ident":
        name = tz.tok or ""
        offset = tz.tok_offset
        tz.advance()
        if name in _FUNCS:
            tz.expect_op("(")
            arg = _parse_sum(tz, dim)
            tz.expect_op(")")
            return _FUNCS[name](arg)
        if not _IDENT_RE.match(name):
            raise ParseError(f"unknown identifier {name!r}", offset)
        if name not in ("t", "s"):
            index = int(name[1:])
            if index < 1:
                raise ParseError(f"unknown identifier {name!r} (indices start at x1)", offset)
            if dim is not None and index > dim:
                raise ParseError(
                    f"unknown identifier {name!r} (coordinates are x1..x{dim})", offset
                )
        return Var(name)
    if tz.kind == "op" and tz.tok == "(":
        tz.advance()
        e = _parse_sum(tz, dim)
        tz.expect_op(")")
        return e
    raise ParseError("expected a number, identifier or parenthesized expression", tz.tok_offset)


# ---------------------------------------------------------------------------
# module-level helpers mirroring the public operation names
# ---------------------------------------------------------------------------


def differentiate(e: Expression, var: str) -> Expression:
    return e.diff(var)


def evaluate(e: Expression, env: Mapping[str, float]) -> float:
    return e.evaluate(env)


def as_expression(value) -> Expression:
    """Accept an Expression, a number, or a source string."""
    if isinstance(value, str):
        return parse(value)
    return _coerce(value)


def poly_coefficients(e: Expression, var: str = "t", max_degree: int = 64) -> list[float] | None:
    """Coefficient list [c0, c1, ...] when `e` is a polynomial in `var`, else None.

    Only structural polynomials are recognized (no sin/cos/exp of the variable,
    no division by a non-constant); other variables may appear only if absent,
    since coefficients are plain floats.
    """

    def walk(node: Expression) -> list[float] | None:
        if isinstance(node, Const):
            return [node.value]
        if isinstance(node, Var):
            if node.name == var:
                return [0.0, 1.0]
            return None
        if isinstance(node, Neg):
            c = walk(node.arg)
            return None if c is None else [-v for v in c]
        if isinstance(node, (Sin, Cos, Exp)):
            a = walk(node.arg)
            if a is not None and len(a) == 1:
                f = {Sin: math.sin, Cos: math.cos, Exp: math.exp}[type(node)]
                return [f(a[0])]
            return None
        if isinstance(node, Add) or isinstance(node, Sub):
            a, b = walk(node.left), walk(node.right)
            if a is None or b is None:
                return None
            n = max(len(a), len(b))
            a = a + [0.0] * (n - len(a))
            b = b + [0.0] * (n - len(b))
            sgn = 1.0 if isinstance(node, Add) else -1.0
            return [ai + sgn * bi for ai, bi in zip(a, b)]
        if isinstance(node, Mul):
            a, b = walk(node.left), walk(node.right)
            if a is None or b is None or len(a) + len(b) - 1 > max_degree + 1:
                return None
            out = [0.0] * (len(a) + len(b) - 1)
            for i, ai in enumerate(a):
                if ai != 0.0:
                    for j, bj in enumerate(b):
                        out[i + j] += ai * bj
            return out
        if isinstance(node, Div):
            a, b = walk(node.left), walk(node.right)
            if a is None or b is None or len(b) != 1 or b[0] == 0.0:
                return None
            return [ai / b[0] for ai in a]
        if isinstance(node, Pow):
            if node.exponent < 0:
                base = walk(node.base)
                if base is not None and len(base) == 1 and base[0] != 0.0:
                    return [base[0] ** node.exponent]
                return None
            base = walk(node.base)
            if base is None:
                return None
            out = [1.0]
            for _ in range(node.exponent):
                if len(out) + len(base) - 1 > max_degree + 1:
                    return None
                nxt = [0.0] * (len(out) + len(base) - 1)
                for i, ai in enumerate(out):
                    if ai != 0.0:
                        for j, bj in enumerate(base):
                            nxt[i + j] += ai * bj
                out = nxt
            return out
        return None

    coeffs = walk(e)
    if coeffs is None:
        return None
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    return coeffs


def poly_expression(coeffs: Iterable[float], var: str = "t", shift: float = 0.0) -> Expression:
    """Build sum(c_k * (var - shift)^k) in Horner form."""
    coeffs = [float(c) for c in coeffs]
    base: Expression = Var(var) if shift == 0.0 else sub(Var(var), Const(shift))
    acc: Expression = Const(coeffs[-1]) if coeffs else ZERO
    for c in reversed(coeffs[:-1]):
        acc = add(Const(c), mul(base, acc))
    return acc
