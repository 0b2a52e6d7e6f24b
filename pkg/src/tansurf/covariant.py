"""Covariant-derivative towers along curves and their rank signatures.

For a curve g(t) in R^m carrying a connection, the covariant derivative of a
vector field v(t) along g is

    (D v)^l = dv^l/dt + Gamma^l_{mu nu}(g(t)) g'(t)^mu v(t)^nu,

and the tower D g' =: D g, D^2 g, ... measures how the curve bends with
respect to the connection.  The *type signature* (a_1, ..., a_m) records the
first tower depth at which each rank 1..m is attained.

Towers are built three ways, matched against each other in the test suite:
symbolically (expressions in t, with a node-count cap), through truncated
Taylor-series arithmetic (exact numerics, the default evaluation path), and
through nested finite differences (the only option for callback-backed
connections; accuracy degrades with depth and is documented as such).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from weakref import WeakKeyDictionary

import numpy as np

from . import expr as ex
from .connection import Connection
from .jets import Jet, jet_eval

__all__ = [
    "CurveSpec",
    "DirectedCurveSpec",
    "TypeSignature",
    "TowerOverflow",
    "covariant_derive_along",
    "curve_tower",
    "curve_tower_values",
    "frame_tower_values",
    "nabla_type",
    "frame_type",
    "directed_frame",
]

RANK_TOL = 1e-8
TOWER_NODE_CAP = 200_000
FD_STEP = 1e-5
PROBE_COUNT = 101
FRAME_MATCH_TOL = 1e-10
FRAME_MIN_NORM = 1e-8


class TowerOverflow(RuntimeError):
    """A symbolic tower row exceeded the expression node cap."""


def _as_component_tuple(components, what: str) -> tuple[ex.Expression, ...]:
    comps = tuple(ex.as_expression(c) for c in components)
    for i, c in enumerate(comps):
        bad = c.variables() - {"t"}
        if bad:
            raise ValueError(
                f"{what} component {i + 1} uses {sorted(bad)}; only t is allowed"
            )
    return comps


@dataclass(frozen=True)
class CurveSpec:
    """A curve given by m expressions in t on an evaluation interval."""

    components: tuple[ex.Expression, ...]
    interval: tuple[float, float] = (-1.0, 1.0)
    _velocity: tuple[ex.Expression, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = _as_component_tuple(self.components, "curve")
        if len(comps) < 2:
            raise ValueError("a curve needs at least 2 components")
        lo, hi = float(self.interval[0]), float(self.interval[1])
        if not lo < hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "interval", (lo, hi))
        object.__setattr__(self, "_velocity", tuple(c.diff("t") for c in comps))
        for t in np.linspace(lo, hi, PROBE_COUNT):
            vals = self.value(float(t))  # raises EvaluationError on poles
            if not np.isfinite(vals).all():
                raise ValueError(f"curve is not finite at t={t}")

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def velocity_components(self) -> tuple[ex.Expression, ...]:
        return self._velocity

    def value(self, t: float) -> np.ndarray:
        env = {"t": float(t)}
        return np.array([c.evaluate(env) for c in self.components])

    def velocity(self, t: float) -> np.ndarray:
        env = {"t": float(t)}
        return np.array([c.evaluate(env) for c in self._velocity])

    def component_jets(self, t0: float, order: int) -> list[Jet]:
        tj = Jet.variable(float(t0), order)
        return [jet_eval(c, {"t": tj}) for c in self.components]

    def derivative_values(self, t0: float, k_max: int) -> np.ndarray:
        """Rows g(t0), g'(t0), ..., g^(k_max)(t0); shape (k_max+1, m)."""
        jets = self.component_jets(t0, k_max)
        return np.array(
            [[j.derivative_value(k) for j in jets] for k in range(k_max + 1)]
        )


@dataclass(frozen=True)
class DirectedCurveSpec:
    """A curve with a nonvanishing frame u and factor c, c(t) u(t) = g'(t)."""

    curve: CurveSpec
    frame: tuple[ex.Expression, ...]
    factor: ex.Expression

    def __post_init__(self):
        frame = _as_component_tuple(self.frame, "frame")
        factor = ex.as_expression(self.factor)
        bad = factor.variables() - {"t"}
        if bad:
            raise ValueError(f"factor uses {sorted(bad)}; only t is allowed")
        if len(frame) != self.curve.m:
            raise ValueError("frame component count must match the curve")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "factor", factor)
        lo, hi = self.curve.interval
        worst_match = 0.0
        min_norm = math.inf
        for t in np.linspace(lo, hi, PROBE_COUNT):
            env = {"t": float(t)}
            u = np.array([c.evaluate(env) for c in frame])
            cval = factor.evaluate(env)
            gp = self.curve.velocity(float(t))
            worst_match = max(worst_match, float(np.abs(cval * u - gp).max()))
            min_norm = min(min_norm, float(np.linalg.norm(u)))
        if worst_match > FRAME_MATCH_TOL:
            raise ValueError(
                f"c(t) u(t) deviates from the curve velocity by {worst_match:.3e} "
                f"(allowed {FRAME_MATCH_TOL:.0e})"
            )
        if min_norm <= FRAME_MIN_NORM:
            raise ValueError(
                f"frame norm drops to {min_norm:.3e} on the interval "
                f"(must stay above {FRAME_MIN_NORM:.0e})"
            )

    @classmethod
    def immersed(cls, curve: CurveSpec) -> "DirectedCurveSpec":
        """The canonical direction of an immersed curve: u = g', c = 1."""
        return cls(curve, curve.velocity_components, ex.ONE)

    @property
    def m(self) -> int:
        return self.curve.m

    def frame_value(self, t: float) -> np.ndarray:
        env = {"t": float(t)}
        return np.array([c.evaluate(env) for c in self.frame])

    def factor_value(self, t: float) -> float:
        return float(self.factor.evaluate({"t": float(t)}))


@dataclass(frozen=True)
class TypeSignature:
    """First tower depths attaining each rank; possibly cut off at k_max."""

    orders: tuple[int, ...]
    m: int
    k_max: int

    @property
    def complete(self) -> bool:
        return len(self.orders) == self.m

    def as_tuple(self) -> tuple[int, ...]:
        return self.orders

    def __str__(self):
        inner = ", ".join(str(a) for a in self.orders)
        if self.complete:
            return f"({inner})"
        return f"({inner}; ranks beyond {len(self.orders)} undetermined at depth {self.k_max})"


# ---------------------------------------------------------------------------
# symbolic tower
# ---------------------------------------------------------------------------

_GAMMA_SUB_CACHE: "WeakKeyDictionary[Connection, WeakKeyDictionary]" = WeakKeyDictionary()


def _gamma_along(conn: Connection, curve: CurveSpec) -> dict:
    """Connection coefficients with x substituted by the curve: exprs in t."""
    per_conn = _GAMMA_SUB_CACHE.setdefault(conn, WeakKeyDictionary())
    got = per_conn.get(curve)
    if got is not None:
        return got
    subs = {f"x{i + 1}": comp for i, comp in enumerate(curve.components)}
    table = {key: e.substitute(subs) for key, e in conn.table.items()}
    per_conn[curve] = table
    return table


def covariant_derive_along(
    conn: Connection, curve: CurveSpec, v: tuple[ex.Expression, ...]
) -> tuple[ex.Expression, ...]:
    """Symbolic covariant derivative of a field v(t) along the curve."""
    if not conn.is_symbolic:
        raise TypeError(
            "callback-backed connections have no symbolic coefficients; "
            "use the numeric tower evaluators instead"
        )
    v = _as_component_tuple(v, "field")
    if len(v) != curve.m:
        raise ValueError("field component count must match the curve")
    gamma = _gamma_along(conn, curve)
    rows = [v[lam].diff("t") for lam in range(curve.m)]
    for (lam, mu, nu), coeff in gamma.items():
        term = ex.mul(coeff, ex.mul(curve.velocity_components[mu], v[nu]))
        rows[lam] = ex.add(rows[lam], term)
    return tuple(rows)


def curve_tower(
    conn: Connection, curve: CurveSpec, k_max: int
) -> list[tuple[ex.Expression, ...]]:
    """Symbolic rows [Dg, D^2 g, ..., D^{k_max} g] (Dg = g')."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    rows = [curve.velocity_components]
    for _ in range(k_max - 1):
        nxt = covariant_derive_along(conn, curve, rows[-1])
        size = sum(c.node_count() for c in nxt)
        if size > TOWER_NODE_CAP:
            raise TowerOverflow(
                f"tower row exceeds {TOWER_NODE_CAP} expression nodes ({size}); "
                "use the numeric evaluators"
            )
        rows.append(nxt)
    return rows


# ---------------------------------------------------------------------------
# numeric towers (series arithmetic; finite-difference fallback)
# ---------------------------------------------------------------------------


def _field_tower_jets(conn, curve, field_exprs, t0, n_rows) -> np.ndarray:
    order = n_rows + 1
    tj = Jet.variable(float(t0), order)
    env_t = {"t": tj}
    gamma_jets = {}
    if conn.table:
        x_env = {
            f"x{i + 1}": jet_eval(c, env_t) for i, c in enumerate(curve.components)
        }
        gamma_jets = {key: jet_eval(e, x_env) for key, e in conn.table.items()}
    vel_jets = [jet_eval(c, env_t) for c in curve.velocity_components]
    current = [jet_eval(f, env_t) for f in field_exprs]
    out = np.empty((n_rows, curve.m))
    out[0] = [j.value for j in current]
    for row in range(1, n_rows):
        nxt = [j.deriv() for j in current]
        for (lam, mu, nu), gj in gamma_jets.items():
            nxt[lam] = nxt[lam] + gj * vel_jets[mu] * current[nu]
        current = nxt
        out[row] = [j.value for j in current]
    return out


def _field_tower_numeric(conn, curve, field_exprs, t0, n_rows, step=FD_STEP):
    """Nested five-point finite differences: the fallback path when the
    connection offers only pointwise values.  Noise grows roughly like
    eps/step^(k-1) with tower depth k."""
    caches = [dict() for _ in range(n_rows)]

    def field_at(t):
        env = {"t": t}
        return np.array([c.evaluate(env) for c in field_exprs])

    def row_at(k, t):
        got = caches[k].get(t)
        if got is not None:
            return got
        if k == 0:
            val = field_at(t)
        else:
            d = (
                row_at(k - 1, t - 2 * step)
                - 8.0 * row_at(k - 1, t - step)
                + 8.0 * row_at(k - 1, t + step)
                - row_at(k - 1, t + 2 * step)
            ) / (12.0 * step)
            g = conn.christoffel_values(curve.value(t))
            val = d + np.einsum("lmn,m,n->l", g, curve.velocity(t), row_at(k - 1, t))
        caches[k][t] = val
        return val

    t0 = float(t0)
    return np.array([row_at(k, t0) for k in range(n_rows)])


def _field_tower_values(conn, curve, field_exprs, t0, n_rows) -> np.ndarray:
    if conn.is_symbolic:
        return _field_tower_jets(conn, curve, field_exprs, t0, n_rows)
    return _field_tower_numeric(conn, curve, field_exprs, t0, n_rows)


def curve_tower_values(conn: Connection, curve: CurveSpec, t0: float, k_max: int):
    """Rows [Dg, ..., D^{k_max} g] evaluated at t0; shape (k_max, m)."""
    return _field_tower_values(conn, curve, curve.velocity_components, t0, k_max)


def frame_tower_values(conn: Connection, d: DirectedCurveSpec, t0: float, k_max: int):
    """Rows [u, Du, ..., D^{k_max-1} u] evaluated at t0; shape (k_max, m)."""
    return _field_tower_values(conn, d.curve, d.frame, t0, k_max)


# ---------------------------------------------------------------------------
# type signatures
# ---------------------------------------------------------------------------


def signature_from_rows(rows: np.ndarray, m: int, k_max: int, tol: float) -> TypeSignature:
    """Ranks of growing column sets [rows[0] | ... | rows[k-1]].

    Columns are normalized by max(1, norm) to tame factorial growth; the
    singular-value threshold is tol * max(largest singular value, 1).
    """
    cols = np.asarray(rows, dtype=float).T.copy()
    norms = np.maximum(1.0, np.linalg.norm(cols, axis=0))
    cols /= norms
    ref = max(float(np.linalg.svd(cols, compute_uv=False)[0]), 1.0)
    orders = []
    prev = 0
    for k in range(1, cols.shape[1] + 1):
        sv = np.linalg.svd(cols[:, :k], compute_uv=False)
        rank = int((sv > tol * ref).sum())
        if rank > prev:
            orders.append(k)
            prev = rank
        if prev == m:
            break
    return TypeSignature(tuple(orders), m, k_max)


def nabla_type(
    conn: Connection,
    curve: CurveSpec,
    t0: float,
    k_max: int | None = None,
    tol: float = RANK_TOL,
) -> TypeSignature:
    """Signature (a_1, ..., a_m): a_r = first k with rank(Dg..D^k g) = r."""
    if k_max is None:
        k_max = curve.m + 2
    rows = curve_tower_values(conn, curve, t0, k_max)
    return signature_from_rows(rows, curve.m, k_max, tol)


def frame_type(
    conn: Connection,
    d: DirectedCurveSpec,
    t0: float,
    k_max: int | None = None,
    tol: float = RANK_TOL,
) -> TypeSignature:
    """Signature (b_1, ..., b_m) of the frame tower [u, Du, ...]; b_1 = 1."""
    if k_max is None:
        k_max = d.m + 2
    rows = frame_tower_values(conn, d, t0, k_max)
    return signature_from_rows(rows, d.m, k_max, tol)


# ---------------------------------------------------------------------------
# directed frames from vanishing velocity
# ---------------------------------------------------------------------------


def _taylor_shift(coeffs: np.ndarray, t0: float) -> np.ndarray:
    """Coefficients of p(t0 + e) in e, given coefficients of p(t) in t."""
    p = np.polynomial.Polynomial(coeffs)
    return p(np.polynomial.Polynomial([t0, 1.0])).coef


def directed_frame(conn: Connection, curve: CurveSpec, t0: float, k: int) -> DirectedCurveSpec:
    """Factor the velocity as g' = c u with c = k (t-t0)^(k-1).

    k is the first tower depth with a nonzero row (a_1).  For k = 1 this is
    u = g', c = 1.  For k >= 2 the velocity components must be polynomials
    in t divisible by (t-t0)^(k-1); otherwise the factorization is not
    representable here and the caller must supply a frame explicitly.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return DirectedCurveSpec(curve, curve.velocity_components, ex.ONE)
    t0 = float(t0)
    frame = []
    for i, comp in enumerate(curve.velocity_components):
        coeffs = ex.poly_coefficients(comp, "t")
        if coeffs is None:
            raise ValueError(
                f"velocity component {i + 1} is not polynomial in t; supply the "
                "frame u explicitly as a DirectedCurveSpec"
            )
        shifted = _taylor_shift(np.asarray(coeffs, dtype=float), t0)
        scale = max(1.0, float(np.abs(shifted).max()))
        head = shifted[: k - 1]
        if len(shifted) < k or np.abs(head).max(initial=0.0) > 1e-9 * scale:
            raise ValueError(
                f"velocity component {i + 1} is not divisible by (t - {t0})^{k - 1}"
            )
        frame.append(ex.poly_expression(shifted[k - 1 :] / k, "t", shift=t0))
    tvar = ex.Var("t")
    factor = ex.mul(ex.Const(float(k)), ex.powi(ex.sub(tvar, ex.Const(t0)), k - 1))
    return DirectedCurveSpec(curve, tuple(frame), factor)
