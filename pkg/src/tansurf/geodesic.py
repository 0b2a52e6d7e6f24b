"""Geodesic integration and second-order jets of the exponential-type map.

The map ``phi(x, v, s)`` follows the geodesic of a connection from position
``x`` with initial velocity ``v`` for parameter length ``s``:

    d2 phi^l / ds2 + Gamma^l_{mu nu}(phi) dphi^mu/ds dphi^nu/ds = 0.

Integration is classical fixed-step RK4 with ``N = max(64, ceil(|s|/0.01))``
steps and a half-step comparison: if the two runs disagree by more than
1e-9 (relative, floored at scale 1), the step count doubles, up to four
times, after which an error is raised.  Trajectories leaving the ball of
radius 1e6 (in position or velocity) are treated as escaped.

Writing ``phi = x + s v + (s^2/2) h(x, v, s)``, the remainder ``h`` and its
first derivatives at ``s = 0`` have closed forms in the connection
coefficients; `jet_coefficients` evaluates them and `series_approx` is the
resulting third-order expansion of ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .connection import Connection
from .expr import EvaluationError

__all__ = [
    "GeodesicEscape",
    "IntegrationError",
    "GeodesicJet",
    "integrate_geodesic",
    "geodesic_states",
    "geodesic_states_batch",
    "jet_coefficients",
    "series_approx",
    "step_count",
]

RICHARDSON_TOL = 1e-9
MAX_HALVINGS = 4
BLOWUP_RADIUS = 1e6


class GeodesicEscape(RuntimeError):
    """The trajectory left the blow-up guard ball or hit a coefficient pole."""

    def __init__(self, message: str, s_failed: float | None = None):
        super().__init__(message)
        self.s_failed = s_failed


class IntegrationError(RuntimeError):
    """Step halving did not reach the required accuracy."""


def step_count(s_max: float) -> int:
    return max(64, int(math.ceil(abs(s_max) / 0.01 - 1e-12)))


# ---------------------------------------------------------------------------
# raw one-sided paths (targets strictly increasing in |s|, uniform sign)
# ---------------------------------------------------------------------------


def _raw_side_batch(conn: Connection, X, V, targets, n_steps: int):
    """One fixed-step batched run; returns (pos (k,B,m), vel, statuses (B,))."""
    if conn.is_symbolic:
        program, lam, mu, nu = conn._kernel_data()
        return _kernels.geodesic_path_batch(
            program, lam, mu, nu, conn.m, X, V, targets, n_steps, BLOWUP_RADIUS
        )
    return _callback_side_batch(conn, X, V, targets, n_steps)


def _callback_side_batch(conn: Connection, X, V, targets, n_steps: int):
    """Python RK4 for callback-backed connections (batched)."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    B, m = X.shape
    k = len(targets)
    out_pos = np.full((k, B, m), np.nan)
    out_vel = np.full((k, B, m), np.nan)
    statuses = np.zeros(B, dtype=np.int64)

    def accel(pos, vel):
        g = conn.christoffel_values_batch(pos)
        return -np.einsum("blmn,bm,bn->bl", g, vel, vel)

    pos = X.copy()
    vel = V.copy()
    total = abs(targets[-1])
    h_base = total / n_steps
    prev = 0.0
    for idx, s_t in enumerate(targets):
        seg = s_t - prev
        nseg = max(1, int(math.ceil(abs(seg) / h_base - 1e-12)))
        h = seg / nseg
        try:
            for _ in range(nseg):
                a1 = accel(pos, vel)
                v2 = vel + 0.5 * h * a1
                a2 = accel(pos + 0.5 * h * vel, v2)
                v3 = vel + 0.5 * h * a2
                a3 = accel(pos + 0.5 * h * v2, v3)
                v4 = vel + h * a3
                a4 = accel(pos + h * v3, v4)
                pos = pos + (h / 6.0) * (vel + 2.0 * (v2 + v3) + v4)
                vel = vel + (h / 6.0) * (a1 + 2.0 * (a2 + a3) + a4)
        except (EvaluationError, ArithmeticError):
            statuses[statuses == 0] = idx + 1
            break
        ok = (
            np.isfinite(pos).all(axis=1)
            & np.isfinite(vel).all(axis=1)
            & (np.abs(pos).max(axis=1) <= BLOWUP_RADIUS)
            & (np.abs(vel).max(axis=1) <= BLOWUP_RADIUS)
        )
        statuses[(~ok) & (statuses == 0)] = idx + 1
        good = statuses == 0
        if not good.any():
            break
        out_pos[idx, good] = pos[good]
        out_vel[idx, good] = vel[good]
        pos[~good] = 0.0
        vel[~good] = 0.0
        prev = s_t
    return out_pos, out_vel, statuses


def _entry_discrepancy(pos_c, vel_c, pos_f, vel_f):
    """Per-(target, row) worst relative mismatch between two runs.

    Entries where either run escaped are nan (no verdict); entries the
    finer run reached but the coarser missed count as unverifiable (inf).
    """
    k, B, _ = pos_f.shape
    disc = np.full((k, B), np.nan)
    fin_c = np.isfinite(pos_c).all(axis=2) & np.isfinite(vel_c).all(axis=2)
    fin_f = np.isfinite(pos_f).all(axis=2) & np.isfinite(vel_f).all(axis=2)
    both = fin_c & fin_f
    dp = np.abs(pos_c - pos_f) / np.maximum(1.0, np.abs(pos_f))
    dv = np.abs(vel_c - vel_f) / np.maximum(1.0, np.abs(vel_f))
    d = np.maximum(dp.max(axis=2), dv.max(axis=2))
    disc[both] = d[both]
    disc[fin_f & ~fin_c] = np.inf
    return disc


def _checked_side_batch(conn, X, V, targets, n_override=None, nonconvergent="raise"):
    """Half-step-verified batched run.

    Returns (pos, vel, statuses, n_accepted).  The whole batch shares one
    step count, so finite differences across batch rows see a matched
    discretization and their integration errors cancel smoothly.

    If accuracy is not reached after MAX_HALVINGS doublings (typically a
    trajectory grazing a coefficient singularity without tripping the
    blow-up guard), either raise IntegrationError (``nonconvergent=
    "raise"``) or mark the offending entries invalid and keep the rest
    (``"invalidate"``).
    """
    targets = np.asarray(targets, dtype=float)
    if n_override is not None:
        pos, vel, st = _raw_side_batch(conn, X, V, targets, n_override)
        return pos, vel, st, n_override
    n = step_count(targets[-1])
    pos_c, vel_c, st_c = _raw_side_batch(conn, X, V, targets, n)
    for _ in range(MAX_HALVINGS + 1):
        pos_f, vel_f, st_f = _raw_side_batch(conn, X, V, targets, 2 * n)
        disc = _entry_discrepancy(pos_c, vel_c, pos_f, vel_f)
        worst = float(np.nanmax(disc)) if np.isfinite(disc).any() else 0.0
        if not (disc > RICHARDSON_TOL).any():
            return pos_f, vel_f, st_f, 2 * n
        n *= 2
        pos_c, vel_c, st_c = pos_f, vel_f, st_f
    if nonconvergent == "invalidate":
        bad = disc > RICHARDSON_TOL
        for b in range(bad.shape[1]):
            hits = np.where(bad[:, b])[0]
            if len(hits) == 0:
                continue
            first = int(hits[0])
            pos_f[first:, b] = np.nan
            vel_f[first:, b] = np.nan
            if st_f[b] == 0 or st_f[b] > first + 1:
                st_f[b] = first + 1
        return pos_f, vel_f, st_f, n
    raise IntegrationError(
        f"geodesic integration did not converge below {RICHARDSON_TOL} after "
        f"{MAX_HALVINGS} step halvings (worst mismatch {worst:.3e}); the "
        "trajectory may pass near a singularity of the connection coefficients"
    )


# ---------------------------------------------------------------------------
# public evaluation: arbitrary target lists, both signs
# ---------------------------------------------------------------------------


def _split_sides(s_values: np.ndarray):
    """Indices and sorted targets for the negative and positive sides."""
    neg_idx = np.where(s_values < 0)[0]
    pos_idx = np.where(s_values > 0)[0]
    neg_sorted = neg_idx[np.argsort(-s_values[neg_idx])]  # increasing |s|
    pos_sorted = pos_idx[np.argsort(s_values[pos_idx])]
    return neg_sorted, pos_sorted


def geodesic_states_batch(
    conn: Connection, X, V, s_values, n_override=None, nonconvergent="raise"
):
    """Positions and velocities at each (row, s) pair.

    X, V: (B, m) initial states; s_values: shared targets (any order/signs).
    Returns (pos (k, B, m), vel (k, B, m), valid (k, B) bool).  Rows keep
    integrating until they escape; invalid entries are nan.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    s_values = np.asarray(s_values, dtype=float)
    B, m = X.shape
    k = len(s_values)
    pos = np.full((k, B, m), np.nan)
    vel = np.full((k, B, m), np.nan)
    valid = np.zeros((k, B), dtype=bool)
    zero_idx = np.where(s_values == 0)[0]
    for i in zero_idx:
        pos[i] = X
        vel[i] = V
        valid[i] = True
    for side in _split_sides(s_values):
        if len(side) == 0:
            continue
        targets = s_values[side]
        p, v, st, _ = _checked_side_batch(conn, X, V, targets, n_override, nonconvergent)
        ok = np.isfinite(p).all(axis=2)
        for j, i in enumerate(side):
            pos[i] = p[j]
            vel[i] = v[j]
            valid[i] = ok[j]
    return pos, vel, valid


def geodesic_states(conn: Connection, x, v, s_values):
    """Single-trajectory variant; raises GeodesicEscape if a target is
    unreachable.  Returns (positions (k, m), velocities (k, m))."""
    s_values = np.asarray(s_values, dtype=float)
    pos, vel, valid = geodesic_states_batch(conn, [x], [v], s_values)
    if not valid.all():
        bad = np.where(~valid[:, 0])[0][0]
        raise GeodesicEscape(
            f"geodesic escaped (or hit a coefficient pole) before s={s_values[bad]}",
            s_failed=float(s_values[bad]),
        )
    return pos[:, 0, :], vel[:, 0, :]


def integrate_geodesic(conn: Connection, x, v, s: float) -> np.ndarray:
    """The point phi(x, v, s)."""
    pos, _ = geodesic_states(conn, x, v, [float(s)])
    return pos[0]


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeodesicJet:
    """Closed-form jet of the remainder h at s = 0:

    h0[l]       = h^l(x, v, 0)            = -Gamma^l_{mu nu} v^mu v^nu
    dh_dx[l,k]  = dh^l/dx^k (x, v, 0)     = -Gamma^l_{mu nu, k} v^mu v^nu
    dh_dv[l,r]  = dh^l/dv^r (x, v, 0)     = -(Gamma^l_{r nu} v^nu + Gamma^l_{mu r} v^mu)
    dh_ds[l]    = dh^l/ds (x, v, 0)
        = (1/3) (-Gamma^l_{mu nu, k} + Gamma^l_{r k} Gamma^r_{mu nu}
                 + Gamma^l_{k r} Gamma^r_{mu nu}) v^mu v^nu v^k
    """

    x: np.ndarray
    v: np.ndarray
    h0: np.ndarray
    dh_dx: np.ndarray
    dh_dv: np.ndarray
    dh_ds: np.ndarray


def jet_coefficients(conn: Connection, x, v) -> GeodesicJet:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    G = conn.christoffel_values(x)
    dG = conn.christoffel_partials(x)
    h0 = -np.einsum("lmn,m,n->l", G, v, v)
    dh_dx = -np.einsum("lmnk,m,n->lk", dG, v, v)
    dh_dv = -(np.einsum("lrn,n->lr", G, v) + np.einsum("lmr,m->lr", G, v))
    dh_ds = (
        -np.einsum("lmnk,m,n,k->l", dG, v, v, v)
        + np.einsum("lrk,rmn,m,n,k->l", G, G, v, v, v)
        + np.einsum("lkr,rmn,m,n,k->l", G, G, v, v, v)
    ) / 3.0
    return GeodesicJet(x=x, v=v, h0=h0, dh_dx=dh_dx, dh_dv=dh_dv, dh_ds=dh_ds)


def series_approx(conn: Connection, x, v, s: float, jet: GeodesicJet | None = None):
    """Third-order expansion x + s v + (s^2/2)(h0 + s dh_ds); error O(s^4)."""
    if jet is None:
        jet = jet_coefficients(conn, x, v)
    s = float(s)
    return jet.x + s * jet.v + 0.5 * s * s * (jet.h0 + s * jet.dh_ds)
