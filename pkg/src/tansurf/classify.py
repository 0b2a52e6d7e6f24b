"""Singularity classification of tangent surfaces at curve points.

Two independent routes decide the class at (t0, 0):

* rank criteria on the covariant tower of the curve (the primary decision
  tree), and
* the characteristic function psi = <coframe, covariant derivative of the
  frame vector along the kernel field>, evaluated with its own frame
  machinery (`classify_via_psi`).

Both must agree whenever both resolve; the test suite enforces this on
random instances.  All "zero / nonzero" decisions go through a tolerance
ladder: a witness counts as nonzero only at >= 10*tol and as zero only at
<= tol/10; anything in the guard band yields Unresolved rather than a
guess.  Torsionful connections are symmetrized before classification
(geodesics, and hence the surface, only see the symmetric part).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .connection import Connection
from .covariant import (
    CurveSpec,
    DirectedCurveSpec,
    TypeSignature,
    curve_tower_values,
    directed_frame,
    frame_tower_values,
    signature_from_rows,
)
from .surface import TangentSurface

__all__ = [
    "SingularityKind",
    "Classification",
    "Characteristic",
    "characteristic_field",
    "characteristic_psi",
    "char_field_formula_immersed",
    "char_field_formula_directed",
    "classify_point",
    "classify_via_psi",
    "torsionless_test",
    "degenerate_diagnostic",
    "scan_curve",
    "ScanResult",
]

DEFAULT_TOL = 1e-8
PSI_FD_STEP = 1e-4
PSI_SELF_CHECK_TOL = 1e-5
CERT_PROBES = 21
CERT_MIN_VALID = 15


class SingularityKind(Enum):
    REGULAR = "regular"
    CUSPIDAL_EDGE = "cuspidal-edge"
    FOLDED_UMBRELLA = "folded-umbrella"
    SWALLOWTAIL = "swallowtail"
    OPEN_SWALLOWTAIL = "open-swallowtail"
    FOLD = "fold"
    DEGENERATE_PSI_ZERO = "degenerate-psi-zero"
    UNRESOLVED = "unresolved"


@dataclass
class Classification:
    kind: SingularityKind
    t0: float
    signature: TypeSignature | None
    witnesses: dict[str, float]
    tolerances: dict[str, float]
    reason: str | None = None
    diagnostics: dict | None = None

    @property
    def resolved(self) -> bool:
        return self.kind is not SingularityKind.UNRESOLVED


@dataclass(frozen=True)
class Characteristic:
    """Frame data at one parameter value: the annihilating coframe rows,
    the characteristic field (second covariant derivative of the frame
    vector), and their pairing psi."""

    t: float
    V1: np.ndarray
    F: np.ndarray
    coframe: np.ndarray  # (m-2, m)
    char_field: np.ndarray
    psi: np.ndarray  # (m-2,)
    second_field: np.ndarray | None = None


def _ladder(value: float, tol: float) -> str:
    if value >= 10.0 * tol:
        return "nonzero"
    if value <= tol / 10.0:
        return "zero"
    return "margin"


def _normalized_cols(rows) -> np.ndarray:
    cols = np.asarray(rows, dtype=float).T.copy()
    cols /= np.maximum(1.0, np.linalg.norm(cols, axis=0))
    return cols


def _det_witness(rows) -> float:
    return abs(float(np.linalg.det(_normalized_cols(rows))))


def _minsv_witness(rows) -> float:
    return float(np.linalg.svd(_normalized_cols(rows), compute_uv=False)[-1])


def _tol_dict(tol: float) -> dict[str, float]:
    return {"tol": tol, "nonzero_threshold": 10.0 * tol, "zero_threshold": tol / 10.0}


# ---------------------------------------------------------------------------
# characteristic machinery
# ---------------------------------------------------------------------------


def _complement_coframe(V1, F, prev=None, degtol: float = 1e-8):
    """Orthonormal rows annihilating span(V1, F), or None when degenerate.

    Without `prev` the rows are seeded from the coordinate basis by
    largest-rejection pivoting; with `prev` (the coframe at a nearby
    parameter) the previous rows are projected and re-orthonormalized so
    the coframe varies continuously along a scan.
    """
    V1 = np.asarray(V1, dtype=float)
    F = np.asarray(F, dtype=float)
    m = len(V1)
    M = np.stack([V1, F], axis=1)
    scaled = M / np.maximum(np.linalg.norm(M, axis=0), 1e-300)
    if np.linalg.svd(scaled, compute_uv=False)[-1] <= degtol:
        return None
    Q, _ = np.linalg.qr(M)
    P = np.eye(m) - Q @ Q.T
    if prev is not None:
        W = prev @ P  # project old rows off the new frame span
        Qw, Rw = np.linalg.qr(W.T)
        if np.abs(np.diag(Rw)).min() > 1e-3:
            rows = (Qw * np.sign(np.diag(Rw))).T
            return rows
        # projection collapsed (frame rotated too far); fall through
    rows = []
    for _ in range(m - 2):
        norms = np.linalg.norm(P, axis=0)
        j = int(np.argmax(norms))
        v = P[:, j] / norms[j]
        rows.append(v)
        P = P - np.outer(v, v) @ P
    return np.array(rows)


def characteristic_field(conn: Connection, d: DirectedCurveSpec, t: float) -> np.ndarray:
    """Second covariant derivative of the frame vector along the curve.

    This equals the derivative of the frontal frame's F along the kernel
    field at s = 0 when the connection is torsion-free; for torsionful
    input symmetrize first (the caller is told so).
    """
    if not conn.torsion_free:
        raise ValueError(
            "characteristic field requires a torsion-free connection; "
            "call symmetrize() first"
        )
    return frame_tower_values(conn, d, t, 3)[2]


def characteristic_psi(
    conn: Connection,
    d: DirectedCurveSpec,
    t: float,
    prev_coframe: np.ndarray | None = None,
    with_second: bool = False,
) -> Characteristic:
    """Coframe, characteristic field and psi at parameter t.

    Raises ValueError when the (V1, F) frame is degenerate at t.
    """
    depth = 4 if with_second else 3
    rows = frame_tower_values(conn, d, t, depth)
    V1, F, char = rows[0], rows[1], rows[2]
    coframe = _complement_coframe(V1, F, prev=prev_coframe)
    if coframe is None:
        raise ValueError(f"frame vectors are parallel at t={t}")
    psi = coframe @ char
    second = rows[3] if with_second else None
    return Characteristic(
        t=float(t), V1=V1, F=F, coframe=coframe, char_field=char, psi=psi,
        second_field=second,
    )


# ---------------------------------------------------------------------------
# explicit coordinate formulas (independent oracles for the tower path)
# ---------------------------------------------------------------------------


def char_field_formula_immersed(conn: Connection, curve: CurveSpec, t: float) -> np.ndarray:
    """Characteristic field of the tangent surface of an immersed curve,
    written out in Christoffel symbols (valid for torsionful input too):

    (g''')^l + (G^l_{mn,k} + 1/2 G^l_{rm} G^r_{nk} + 1/2 G^l_{mr} G^r_{nk})
    g'^m g'^n g'^k + 3/2 (G^l_{mn} + G^l_{nm}) g'^m g''^n.
    """
    ders = curve.derivative_values(t, 3)
    g1, g2, g3 = ders[1], ders[2], ders[3]
    x = curve.value(t)
    G = conn.christoffel_values(x)
    dG = conn.christoffel_partials(x)
    out = g3 + np.einsum("lmnk,m,n,k->l", dG, g1, g1, g1)
    out += 0.5 * np.einsum("lrm,rnk,m,n,k->l", G, G, g1, g1, g1)
    out += 0.5 * np.einsum("lmr,rnk,m,n,k->l", G, G, g1, g1, g1)
    out += 1.5 * np.einsum("lmn,m,n->l", G + np.swapaxes(G, 1, 2), g1, g2)
    return out


def char_field_formula_directed(conn: Connection, d: DirectedCurveSpec, t: float) -> np.ndarray:
    """Characteristic field for a directed curve (c, u), written out in
    Christoffel symbols:

    (u'')^l + c' G^l_{mn} u^m u^n + 3/2 c (G^l_{mn} + G^l_{nm}) u^n u'^m
    + 1/2 c^2 (2 G^l_{mn,k} + G^l_{rm} G^r_{kn} + G^l_{mr} G^r_{kn}) u^m u^n u^k.

    Agrees with the tower value for torsion-free connections.
    """
    from .jets import Jet, jet_eval

    t = float(t)
    tj = Jet.variable(t, 2)
    fj = [jet_eval(c, {"t": tj}) for c in d.frame]
    u = np.array([j.value for j in fj])
    up = np.array([j.derivative_value(1) for j in fj])
    upp = np.array([j.derivative_value(2) for j in fj])
    cj = jet_eval(d.factor, {"t": tj})
    c, cp = cj.value, cj.derivative_value(1)
    x = d.curve.value(t)
    G = conn.christoffel_values(x)
    dG = conn.christoffel_partials(x)
    Gs = G + np.swapaxes(G, 1, 2)
    out = upp + cp * np.einsum("lmn,m,n->l", G, u, u)
    out += 1.5 * c * np.einsum("lmn,n,m->l", Gs, u, up)
    quad = 2.0 * np.einsum("lmnk,m,n,k->l", dG, u, u, u)
    quad += np.einsum("lrm,rkn,m,n,k->l", G, G, u, u, u)
    quad += np.einsum("lmr,rkn,m,n,k->l", G, G, u, u, u)
    out += 0.5 * c * c * quad
    return out


# ---------------------------------------------------------------------------
# preparation shared by both classifiers
# ---------------------------------------------------------------------------


def _symmetrized(conn: Connection) -> Connection:
    return conn if conn.torsion_free else conn.symmetrize()


def _cert_window(curve: CurveSpec, t0: float, window) -> tuple[float, float]:
    lo_i, hi_i = curve.interval
    if window is not None:
        lo, hi = max(lo_i, t0 - window / 2), min(hi_i, t0 + window / 2)
    else:
        lo, hi = max(lo_i, t0 - 0.25), min(hi_i, t0 + 0.25)
    if hi - lo < 0.05:
        lo, hi = lo_i, hi_i
    return lo, hi


def _directed_for(conn, curve, t0, a1: int):
    """A directed representative for certification/diagnostics, or a string
    explaining why none is available."""
    if isinstance(curve, DirectedCurveSpec):
        return curve
    if a1 == 1:
        return DirectedCurveSpec.immersed(curve)
    try:
        return directed_frame(conn, curve, t0, a1)
    except ValueError as e:
        return str(e)


def _certify_psi_zero(conn, d: DirectedCurveSpec, t0, tol, window):
    """Certify that psi vanishes identically on the window, to stated order:
    |psi| <= tol at 21 probes and |psi^(k)(t0)| <= tol for k = 1, 2, 3 by
    finite differences.  Returns (bool, stats)."""
    lo, hi = _cert_window(d.curve, t0, window)
    probes = np.linspace(lo, hi, CERT_PROBES)
    prev = None
    worst = 0.0
    n_valid = 0
    for t in probes:
        try:
            ch = characteristic_psi(conn, d, float(t), prev_coframe=prev)
        except ValueError:
            continue
        prev = ch.coframe
        worst = max(worst, float(np.abs(ch.psi).max(initial=0.0)))
        n_valid += 1
    stats = {"psi_window_max": worst, "cert_probes_valid": float(n_valid)}
    if n_valid < CERT_MIN_VALID:
        return False, stats
    if worst > tol:
        return False, stats
    h = (hi - lo) / 40.0
    try:
        center = characteristic_psi(conn, d, t0)
        samples = {0: center.psi}
        for j in (1, 2, 3, -1, -2, -3):
            samples[j] = characteristic_psi(
                conn, d, t0 + j * h, prev_coframe=center.coframe
            ).psi
    except ValueError:
        return False, stats
    f = [samples[j] for j in range(-3, 4)]
    d1 = (-f[0] + 9 * f[1] - 45 * f[2] + 45 * f[4] - 9 * f[5] + f[6]) / (60 * h)
    d2 = (2 * f[0] - 27 * f[1] + 270 * f[2] - 490 * f[3] + 270 * f[4] - 27 * f[5] + 2 * f[6]) / (
        180 * h * h
    )
    d3 = (f[0] - 8 * f[1] + 13 * f[2] - 13 * f[4] + 8 * f[5] - f[6]) / (8 * h**3)
    for k, dk in enumerate((d1, d2, d3), start=1):
        stats[f"psi_fd{k}"] = float(np.abs(dk).max(initial=0.0))
    ok = all(stats[f"psi_fd{k}"] <= tol for k in (1, 2, 3))
    return ok, stats


def _degenerate_or_unresolved(
    conn, curve, t0, tol, window, witnesses, signature, run_diagnostics, a1, reason
):
    """Shared tail: try the psi == 0 certification, else Unresolved."""
    tols = _tol_dict(tol)
    d = _directed_for(conn, curve, t0, a1)
    if isinstance(d, str):
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, witnesses, tols,
            reason=f"{reason}; no directed frame available ({d})",
        )
    ok, stats = _certify_psi_zero(conn, d, t0, tol, window)
    witnesses = {**witnesses, **stats}
    if not ok:
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, witnesses, tols,
            reason=f"{reason}; psi does not vanish identically to certification order",
        )
    diag = None
    if run_diagnostics:
        diag = degenerate_diagnostic(TangentSurface(conn, d), t0, window=window or 1.0)
    return Classification(
        SingularityKind.DEGENERATE_PSI_ZERO, t0, signature, witnesses, tols,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# the rank-criteria classifier
# ---------------------------------------------------------------------------


def classify_point(
    conn: Connection,
    curve: CurveSpec | DirectedCurveSpec,
    t0: float,
    tol: float = DEFAULT_TOL,
    window: float | None = None,
    run_diagnostics: bool = True,
) -> Classification:
    """Decide the singularity class of the tangent surface at (t0, 0) from
    the covariant tower of the curve.

    Torsionful connections are symmetrized first.  Values inside the
    tolerance guard band produce Unresolved, never a guessed class.
    """
    t0 = float(t0)
    conn = _symmetrized(conn)
    base = curve.curve if isinstance(curve, DirectedCurveSpec) else curve
    m = base.m
    k_max = m + 2
    rows = curve_tower_values(conn, base, t0, k_max)
    signature = signature_from_rows(rows, m, k_max, tol)
    tols = _tol_dict(tol)
    w: dict[str, float] = {"velocity_norm": float(np.linalg.norm(rows[0]))}

    v_state = _ladder(w["velocity_norm"], tol)
    if v_state == "margin":
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, w, tols,
            reason="velocity norm inside the tolerance guard band",
        )

    if m == 2:
        return _classify_m2(conn, curve, base, t0, tol, rows, signature, w, v_state)

    if v_state == "nonzero":
        # immersed branch
        if m == 3:
            w["det_123"] = _det_witness(rows[:3])
            state = _ladder(w["det_123"], tol)
            if state == "nonzero":
                return Classification(
                    SingularityKind.CUSPIDAL_EDGE, t0, signature, w, tols
                )
            if state == "margin":
                return Classification(
                    SingularityKind.UNRESOLVED, t0, signature, w, tols,
                    reason="det(rows 1..3) inside the tolerance guard band",
                )
            w["det_124"] = _det_witness([rows[0], rows[1], rows[3]])
            state = _ladder(w["det_124"], tol)
            if state == "nonzero":
                return Classification(
                    SingularityKind.FOLDED_UMBRELLA, t0, signature, w, tols
                )
            if state == "margin":
                return Classification(
                    SingularityKind.UNRESOLVED, t0, signature, w, tols,
                    reason="det(rows 1,2,4) inside the tolerance guard band",
                )
            return _degenerate_or_unresolved(
                conn, curve, t0, tol, window, w, signature, run_diagnostics, 1,
                "rows 1..3 and rows 1,2,4 both dependent",
            )
        # m >= 4
        w["minsv_123"] = _minsv_witness(rows[:3])
        state = _ladder(w["minsv_123"], tol)
        if state == "nonzero":
            return Classification(SingularityKind.CUSPIDAL_EDGE, t0, signature, w, tols)
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, signature, w, tols,
                reason="smallest singular value of rows 1..3 inside the guard band",
            )
        return _degenerate_or_unresolved(
            conn, curve, t0, tol, window, w, signature, run_diagnostics, 1,
            "rows 1..3 dependent (no criterion covers this pattern for m >= 4)",
        )

    # vanishing-velocity branch
    w["row2_norm"] = float(np.linalg.norm(rows[1]))
    state2 = _ladder(w["row2_norm"], tol)
    if state2 == "zero":
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, w, tols,
            reason="velocity vanishes to order >= 2 (outside the classification criteria)",
        )
    if state2 == "margin":
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, w, tols,
            reason="second tower row inside the tolerance guard band",
        )
    if m == 3:
        w["det_234"] = _det_witness(rows[1:4])
        state = _ladder(w["det_234"], tol)
        if state == "nonzero":
            return Classification(SingularityKind.SWALLOWTAIL, t0, signature, w, tols)
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, signature, w, tols,
                reason="det(rows 2..4) inside the tolerance guard band",
            )
        return _degenerate_or_unresolved(
            conn, curve, t0, tol, window, w, signature, run_diagnostics, 2,
            "rows 2..4 dependent with vanishing velocity",
        )
    w["minsv_2345"] = _minsv_witness(rows[1:5])
    state = _ladder(w["minsv_2345"], tol)
    if state == "nonzero":
        return Classification(SingularityKind.OPEN_SWALLOWTAIL, t0, signature, w, tols)
    if state == "margin":
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, w, tols,
            reason="smallest singular value of rows 2..5 inside the guard band",
        )
    return _degenerate_or_unresolved(
        conn, curve, t0, tol, window, w, signature, run_diagnostics, 2,
        "rows 2..5 dependent with vanishing velocity (no criterion for m >= 4)",
    )


def _classify_m2(conn, curve, base, t0, tol, rows, signature, w, v_state):
    """Ambient dimension 2: the only named class here is the fold (any
    frontal with a non-degenerate singular point and nonvanishing c)."""
    tols = _tol_dict(tol)
    if v_state == "nonzero":
        w["frame_minsv"] = _minsv_witness(rows[:2])
        state = _ladder(w["frame_minsv"], tol)
        if state == "nonzero":
            return Classification(SingularityKind.FOLD, t0, signature, w, tols)
        return Classification(
            SingularityKind.UNRESOLVED, t0, signature, w, tols,
            reason="frame degenerate (rows 1, 2 dependent) in ambient dimension 2",
        )
    return Classification(
        SingularityKind.UNRESOLVED, t0, signature, w, tols,
        reason="vanishing velocity in ambient dimension 2 (cusp case, "
        "outside the classification set)",
    )


# ---------------------------------------------------------------------------
# the psi-criteria classifier
# ---------------------------------------------------------------------------


def classify_via_psi(
    conn: Connection,
    curve: CurveSpec | DirectedCurveSpec,
    t0: float,
    tol: float = DEFAULT_TOL,
    window: float | None = None,
    run_diagnostics: bool = True,
) -> Classification:
    """Decide the singularity class from the characteristic function.

    Branches on the factor c(t0): where c does not vanish, psi(t0) != 0
    means cuspidal edge and (m = 3) psi(t0) = 0 != psi'(t0) means folded
    umbrella; where c vanishes to first order, the independence tests on
    the frame tower decide swallowtail / open swallowtail.
    """
    t0 = float(t0)
    conn = _symmetrized(conn)
    tols = _tol_dict(tol)
    w: dict[str, float] = {}

    if isinstance(curve, DirectedCurveSpec):
        d = curve
    else:
        vnorm = float(np.linalg.norm(curve.velocity(t0)))
        w["velocity_norm"] = vnorm
        state = _ladder(vnorm, tol)
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason="velocity norm inside the tolerance guard band",
            )
        a1 = 1 if state == "nonzero" else 2
        d = _directed_for(conn, curve, t0, a1)
        if isinstance(d, str):
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason=f"no directed frame available ({d})",
            )
    m = d.m

    rows = frame_tower_values(conn, d, t0, 4)
    w["frame_minsv"] = _minsv_witness(rows[:2])
    frame_state = _ladder(w["frame_minsv"], tol)
    if frame_state != "nonzero":
        return Classification(
            SingularityKind.UNRESOLVED, t0, None, w, tols,
            reason="frontal frame degenerate at t0 (non-degeneracy hypothesis fails)",
        )

    c0 = d.factor_value(t0)
    w["factor_abs"] = abs(c0)
    c_state = _ladder(abs(c0), tol)

    if m == 2:
        if c_state == "nonzero":
            return Classification(SingularityKind.FOLD, t0, None, w, tols)
        return Classification(
            SingularityKind.UNRESOLVED, t0, None, w, tols,
            reason="vanishing factor in ambient dimension 2 (cusp case, "
            "outside the classification set)",
        )

    if c_state == "margin":
        return Classification(
            SingularityKind.UNRESOLVED, t0, None, w, tols,
            reason="factor c(t0) inside the tolerance guard band",
        )

    if c_state == "nonzero":
        try:
            ch = characteristic_psi(conn, d, t0)
        except ValueError:
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason="frame degenerate while building the coframe",
            )
        w["psi_norm"] = float(np.linalg.norm(ch.psi))
        state = _ladder(w["psi_norm"], tol)
        if state == "nonzero":
            return Classification(SingularityKind.CUSPIDAL_EDGE, t0, None, w, tols)
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason="|psi(t0)| inside the tolerance guard band",
            )
        if m == 3:
            dpsi, fd_dev = _psi_derivative(conn, d, t0, ch)
            w["psi_deriv_norm"] = float(np.linalg.norm(dpsi))
            w["psi_deriv_fd_dev"] = fd_dev
            if fd_dev > PSI_SELF_CHECK_TOL:
                return Classification(
                    SingularityKind.UNRESOLVED, t0, None, w, tols,
                    reason="psi-derivative self-check failed "
                    f"(finite differences vs closed form deviate by {fd_dev:.2e})",
                )
            state = _ladder(w["psi_deriv_norm"], tol)
            if state == "nonzero":
                return Classification(
                    SingularityKind.FOLDED_UMBRELLA, t0, None, w, tols
                )
            if state == "margin":
                return Classification(
                    SingularityKind.UNRESOLVED, t0, None, w, tols,
                    reason="|psi'(t0)| inside the tolerance guard band",
                )
            reason = "psi(t0) = psi'(t0) = 0"
        else:
            reason = "psi(t0) = 0 (no folded-umbrella criterion for m >= 4)"
        return _degenerate_or_unresolved(
            conn, d, t0, tol, window, w, None, run_diagnostics, 1, reason
        )

    # c(t0) = 0: swallowtail branch
    cp = float(d.factor.diff("t").evaluate({"t": t0}))
    w["factor_deriv_abs"] = abs(cp)
    state = _ladder(abs(cp), tol)
    if state == "zero":
        return Classification(
            SingularityKind.UNRESOLVED, t0, None, w, tols,
            reason="factor c vanishes to order >= 2 (outside the criteria)",
        )
    if state == "margin":
        return Classification(
            SingularityKind.UNRESOLVED, t0, None, w, tols,
            reason="|c'(t0)| inside the tolerance guard band",
        )
    if m == 3:
        w["det_frame_012"] = _det_witness(rows[:3])
        state = _ladder(w["det_frame_012"], tol)
        if state == "nonzero":
            return Classification(SingularityKind.SWALLOWTAIL, t0, None, w, tols)
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason="det(u, Du, D^2 u) inside the tolerance guard band",
            )
        reason = "u, Du, D^2 u dependent with vanishing factor"
    else:
        w["minsv_frame_0123"] = _minsv_witness(rows[:4])
        state = _ladder(w["minsv_frame_0123"], tol)
        if state == "nonzero":
            return Classification(
                SingularityKind.OPEN_SWALLOWTAIL, t0, None, w, tols
            )
        if state == "margin":
            return Classification(
                SingularityKind.UNRESOLVED, t0, None, w, tols,
                reason="smallest singular value of (u..D^3 u) inside the guard band",
            )
        reason = "u..D^3 u dependent with vanishing factor (no criterion for m >= 4)"
    return _degenerate_or_unresolved(
        conn, d, t0, tol, window, w, None, run_diagnostics, 2, reason
    )


def _psi_derivative(conn, d, t0, center: Characteristic):
    """psi'(t0) when psi(t0) = 0.

    The closed form <l_i(t0), (D^3 u)(t0)> is exact for any smooth
    annihilating coframe once psi(t0) = 0 (differentiating the coframe
    relations cancels every coframe-derivative term); five-point finite
    differences of psi serve as a self-check of the coframe tracking.
    Returns (closed-form value, max deviation of the FD estimate).
    """
    third = frame_tower_values(conn, d, t0, 4)[3]
    closed = center.coframe @ third
    h = PSI_FD_STEP
    vals = {}
    for j in (-2, -1, 1, 2):
        vals[j] = characteristic_psi(
            conn, d, t0 + j * h, prev_coframe=center.coframe
        ).psi
    fd = (vals[-2] - 8 * vals[-1] + 8 * vals[1] - vals[2]) / (12 * h)
    return closed, float(np.abs(fd - closed).max(initial=0.0))


# ---------------------------------------------------------------------------
# torsionless curves and the degenerate diagnostic
# ---------------------------------------------------------------------------


def torsionless_test(
    conn: Connection,
    curve: CurveSpec,
    interval: tuple[float, float] | None = None,
    n_probe: int = 41,
    tol: float = DEFAULT_TOL,
):
    """True when, at every probe, the first two tower rows are independent
    (with margin) while the first three are dependent (within tol)."""
    lo, hi = interval if interval is not None else curve.interval
    min_pair = math.inf
    max_triple = 0.0
    for t in np.linspace(lo, hi, n_probe):
        rows = curve_tower_values(conn, curve, float(t), 3)
        min_pair = min(min_pair, _minsv_witness(rows[:2]))
        if curve.m >= 3:
            max_triple = max(max_triple, _minsv_witness(rows[:3]))
        # m = 2: three plane vectors are always dependent, witness stays 0
    verdict = (min_pair >= 10.0 * tol) and (max_triple <= tol)
    witness = {
        "min_pair_sv": float(min_pair),
        "max_triple_sv": float(max_triple),
        "n_probes": float(n_probe),
    }
    return verdict, witness


def degenerate_diagnostic(ts: TangentSurface, t0: float, window: float = 1.0) -> dict:
    """Sample-based two-to-one test around (t0, 0).

    Queries f at parameters off the singular line on both sides and looks
    for a partner point on the opposite side mapping to (nearly) the same
    image: pairs must satisfy |f - f'| <= eps_match with eps_match = 1e-5
    times the sampled image diameter, and |t - t'| >= window / 20.  Reports
    "fold-like (two-to-one)" when >= 95% of queries find a partner and
    "injective-like" when (essentially) none do.  This is a statistic about
    the sampled germ, never a diffeomorphism-class claim.
    """
    from .geodesic import geodesic_states_batch

    t0 = float(t0)
    w = float(window)
    n_tq, n_sq = 21, 8
    t_q = np.linspace(t0 - w / 2, t0 + w / 2, n_tq)
    s_core = np.linspace(0.25 * w, 0.45 * w, n_sq)
    t_g = np.linspace(t0 - w / 2 - 1.2 * w, t0 + w / 2 + 1.2 * w, 141)
    s_g = np.linspace(0.15 * w, 0.55 * w, 41)

    conn, d = ts.conn, ts.directed
    Xq = [d.curve.value(t) for t in t_q]
    Vq = [d.frame_value(t) for t in t_q]
    s_targets = np.concatenate([s_core, -s_core])
    q_pos, _, q_valid = geodesic_states_batch(
        conn, Xq, Vq, s_targets, nonconvergent="invalidate"
    )
    Xg = [d.curve.value(t) for t in t_g]
    Vg = [d.frame_value(t) for t in t_g]
    g_targets = np.concatenate([s_g, -s_g])
    g_pos, _, g_valid = geodesic_states_batch(
        conn, Xg, Vg, g_targets, nonconvergent="invalidate"
    )

    clouds = {}
    for sign, sl in (("+", slice(0, len(s_g))), ("-", slice(len(s_g), None))):
        vals = np.transpose(g_pos[sl], (1, 0, 2))  # (nt, ns, m)
        ok = g_valid[sl].T
        s_axis = s_g if sign == "+" else -s_g
        clouds[sign] = (s_axis, vals, ok)

    finite = [g_pos[np.isfinite(g_pos).all(axis=2)], q_pos[np.isfinite(q_pos).all(axis=2)]]
    all_pts = np.concatenate([p.reshape(-1, ts.m) for p in finite])
    diam = float(np.linalg.norm(all_pts.max(axis=0) - all_pts.min(axis=0)))
    eps = 1e-5 * diam

    from scipy.interpolate import RegularGridInterpolator

    interps = {}
    for side, (s_axis, vals, ok) in clouds.items():
        if ok.all():
            order = np.argsort(s_axis)
            interps[side] = RegularGridInterpolator(
                (t_g, s_axis[order]),
                vals[:, order, :],
                method="cubic",
                bounds_error=False,
                fill_value=None,
            )
        else:
            interps[side] = None

    results = []
    for qi, s_val in enumerate(s_targets):
        side = "-" if s_val > 0 else "+"
        s_axis, vals, ok = clouds[side]
        interp = interps[side]
        s_sorted = np.sort(s_axis)
        for ti, t_val in enumerate(t_q):
            if not q_valid[qi, ti]:
                continue
            target = q_pos[qi, ti]
            flat = vals.reshape(-1, ts.m)
            dists = np.linalg.norm(flat - target, axis=1)
            dists[~ok.reshape(-1)] = np.inf
            best = int(np.argmin(dists))
            bt, bs = t_g[best // vals.shape[1]], s_axis[best % vals.shape[1]]
            best_dist = float(dists[best])
            if interp is not None:
                bt, bs, best_dist = _zoom_refine(
                    interp, target, bt, bs,
                    (t_g[0], t_g[-1]), (s_sorted[0], s_sorted[-1]),
                    float(t_g[1] - t_g[0]), float(abs(s_axis[1] - s_axis[0])),
                )
            matched = best_dist <= eps and abs(bt - t_val) >= w / 20.0
            results.append((matched, best_dist))

    n_total = len(results)
    n_match = sum(1 for ok_, _ in results if ok_)
    fraction = n_match / n_total if n_total else 0.0
    dist_list = sorted(dv for _, dv in results)
    median_dist = dist_list[len(dist_list) // 2] if dist_list else float("nan")
    if fraction >= 0.95:
        verdict = "fold-like (two-to-one)"
    elif fraction <= 0.05:
        verdict = "injective-like"
    else:
        verdict = "inconclusive"
    return {
        "verdict": verdict,
        "match_fraction": fraction,
        "n_queries": n_total,
        "n_matches": n_match,
        "epsilon": eps,
        "median_partner_distance": median_dist,
        "window": w,
    }


def _zoom_refine(interp, target, t_start, s_start, t_bounds, s_bounds, dt, ds):
    """Minimize |interp(t, s) - target| from a grid start: a few grid-zoom
    sweeps to land in the right basin, then Gauss-Newton steps with a
    finite-difference Jacobian to descend the (anisotropic) distance cone
    that grid search alone stalls on."""
    ct, cs = float(t_start), float(s_start)
    span_t, span_s = 1.5 * dt, 1.5 * ds
    offsets = np.linspace(-1.0, 1.0, 7)
    best = (math.inf, ct, cs)
    for _ in range(5):
        tt = np.clip(ct + span_t * offsets, *t_bounds)
        ss = np.clip(cs + span_s * offsets, *s_bounds)
        T, S = np.meshgrid(tt, ss, indexing="ij")
        pts = np.stack([T.ravel(), S.ravel()], axis=1)
        vals = interp(pts)
        dd = np.linalg.norm(vals - target, axis=1)
        j = int(np.argmin(dd))
        ct, cs = float(pts[j, 0]), float(pts[j, 1])
        if dd[j] < best[0]:
            best = (float(dd[j]), ct, cs)
        span_t *= 0.35
        span_s *= 0.35
    ht, hs = 1e-4 * dt, 1e-4 * ds
    for _ in range(4):
        pts = np.array(
            [[ct, cs], [ct + ht, cs], [ct - ht, cs], [ct, cs + hs], [ct, cs - hs]]
        )
        vals = interp(pts)
        resid = vals[0] - target
        J = np.stack(
            [(vals[1] - vals[2]) / (2 * ht), (vals[3] - vals[4]) / (2 * hs)], axis=1
        )
        delta, *_ = np.linalg.lstsq(J, -resid, rcond=None)
        nt = float(np.clip(ct + delta[0], *t_bounds))
        ns = float(np.clip(cs + delta[1], *s_bounds))
        d_new = float(np.linalg.norm(interp([[nt, ns]])[0] - target))
        if d_new < best[0]:
            best = (d_new, nt, ns)
            ct, cs = nt, ns
        else:
            break
    return best[1], best[2], best[0]


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------


@dataclass
class ScanResult:
    points: list[tuple[float, Classification]]
    events: list[tuple[float, Classification]] = field(default_factory=list)


def scan_curve(
    conn: Connection,
    curve: CurveSpec | DirectedCurveSpec,
    interval: tuple[float, float] | None = None,
    n: int = 101,
    tol: float = DEFAULT_TOL,
    run_diagnostics: bool = False,
) -> ScanResult:
    """Classify at n grid points; for m = 3, sign changes of
    det(rows 1..3) between neighbors are refined by bisection (to 1e-12 in
    t) and the refined parameters are classified as events."""
    conn = _symmetrized(conn)
    base = curve.curve if isinstance(curve, DirectedCurveSpec) else curve
    lo, hi = interval if interval is not None else base.interval
    grid = np.linspace(lo, hi, n)
    points = [
        (
            float(t),
            classify_point(conn, curve, float(t), tol=tol, run_diagnostics=run_diagnostics),
        )
        for t in grid
    ]
    events: list[tuple[float, Classification]] = []
    if base.m == 3:

        def det3(t):
            rows = curve_tower_values(conn, base, float(t), 3)
            return float(np.linalg.det(_normalized_cols(rows)))

        vals = [det3(t) for t in grid]
        iszero = [abs(v) <= 1e-12 for v in vals]
        roots: list[float] = []
        for i in range(1, n - 1):
            # a grid point landing on an isolated root (zero flanked by
            # nonzero neighbors) is already the refined parameter
            if iszero[i] and not iszero[i - 1] and not iszero[i + 1]:
                roots.append(float(grid[i]))
        for i in range(n - 1):
            a, b = vals[i], vals[i + 1]
            if iszero[i] or iszero[i + 1] or (a < 0) == (b < 0):
                continue
            ta, tb = float(grid[i]), float(grid[i + 1])
            fa = a
            while tb - ta > 1e-12:
                tm = 0.5 * (ta + tb)
                fm = det3(tm)
                if fm == 0.0:
                    ta = tb = tm
                    break
                if (fm < 0) == (fa < 0):
                    ta, fa = tm, fm
                else:
                    tb = tm
            roots.append(0.5 * (ta + tb))
        for root in sorted(roots):
            events.append(
                (
                    root,
                    classify_point(
                        conn, curve, root, tol=tol, run_diagnostics=run_diagnostics
                    ),
                )
            )
    return ScanResult(points=points, events=events)
