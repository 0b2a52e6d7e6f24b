"""Singularity classification: rank criteria and characteristic-function
criteria are two independent decision paths and must agree.

Frozen closed-form values (flat connection, hand-computable):

* (t, t^2, t^3)  at 0: tower rows are the unit axes scaled by k!;
  normalized det = 1; the characteristic field is gamma''' = (0, 0, 6) and
  the unit annihilator of span{gamma', gamma''} is +-e3, so |psi(0)| = 6.
* (t, t^2, t^4)  at 0: psi(t) = 24 t <l(t), e3> so psi(0) = 0, psi'(0) = 24.
* (t^2, t^3, t^4) at 0: velocity vanishes, factor c = 2t has c'(0) = 2.
"""

from __future__ import annotations

import numpy as np
import pytest

from tansurf.classify import (
    SingularityKind,
    char_field_formula_directed,
    char_field_formula_immersed,
    characteristic_field,
    characteristic_psi,
    classify_point,
    classify_via_psi,
    degenerate_diagnostic,
    scan_curve,
    torsionless_test,
)
from tansurf.connection import Connection, symmetrize
from tansurf.covariant import curve_tower_values, directed_frame, frame_tower_values
from tansurf.surface import TangentSurface

from conftest import curve, directed

KINDS = SingularityKind


def rnd_connection(rng, m):
    """Random symmetric polynomial connection, degree <= 2 entries."""
    table = {}
    for lam in range(1, m + 1):
        for mu in range(1, m + 1):
            for nu in range(mu, m + 1):
                c0, c1 = rng.uniform(-0.5, 0.5, 2)
                var = f"x{rng.integers(1, m + 1)}"
                text = f"{c0:.6f} + {c1:.6f} * {var}"
                table[f"{lam},{mu},{nu}"] = text
                if mu != nu:
                    table[f"{lam},{nu},{mu}"] = text
    return Connection(m, table)


def rnd_curve(rng, m, degree=None):
    degree = degree or m + 1
    comps = []
    for _ in range(m):
        coeffs = rng.uniform(-1, 1, degree + 1)
        comps.append(" + ".join(f"{c:.6f} * t^{k}" if k else f"{c:.6f}" for k, c in enumerate(coeffs)))
    return curve(*comps)


# --- normal forms, both decision paths --------------------------------------

NORMAL_FORMS = [
    (("t", "t^2", "t^3"), KINDS.CUSPIDAL_EDGE, (1, 2, 3)),
    (("t", "t^2", "t^4"), KINDS.FOLDED_UMBRELLA, (1, 2, 4)),
    (("t^2", "t^3", "t^4"), KINDS.SWALLOWTAIL, (2, 3, 4)),
]


@pytest.mark.parametrize("comps, kind, sig", NORMAL_FORMS)
def test_normal_forms_rank_path(flat3, comps, kind, sig):
    r = classify_point(flat3, curve(*comps), 0.0, run_diagnostics=False)
    assert r.kind is kind
    assert r.signature.as_tuple() == sig
    assert r.resolved
    # every nonzero witness clears the 10x margin, every zero one is clean
    for name, value in r.witnesses.items():
        assert value >= 10 * 1e-8 or value <= 1e-9, (name, value)


@pytest.mark.parametrize("comps, kind, sig", NORMAL_FORMS)
def test_normal_forms_psi_path(flat3, comps, kind, sig):
    p = classify_via_psi(flat3, curve(*comps), 0.0, run_diagnostics=False)
    assert p.kind is kind


def test_open_swallowtail_m4(flat4):
    c = curve("t^2", "t^3", "t^4", "t^5")
    r = classify_point(flat4, c, 0.0, run_diagnostics=False)
    assert r.kind is KINDS.OPEN_SWALLOWTAIL
    assert r.signature.as_tuple() == (2, 3, 4, 5)
    p = classify_via_psi(flat4, c, 0.0, run_diagnostics=False)
    assert p.kind is KINDS.OPEN_SWALLOWTAIL


def test_cuspidal_edge_any_m5(tmp_path):
    flat5 = Connection.flat(5)
    c = curve("t", "t^2", "t^3", "0", "0")
    r = classify_point(flat5, c, 0.0, run_diagnostics=False)
    assert r.kind is KINDS.CUSPIDAL_EDGE


def test_frozen_psi_values(flat3):
    p = classify_via_psi(flat3, curve("t", "t^2", "t^3"), 0.0, run_diagnostics=False)
    assert p.witnesses["psi_norm"] == pytest.approx(6.0, abs=1e-10)
    p = classify_via_psi(flat3, curve("t", "t^2", "t^4"), 0.0, run_diagnostics=False)
    assert p.witnesses["psi_norm"] == pytest.approx(0.0, abs=1e-12)
    assert p.witnesses["psi_deriv_norm"] == pytest.approx(24.0, abs=1e-8)
    assert p.witnesses["psi_deriv_fd_dev"] < 1e-9  # closed form vs FD self-check
    p = classify_via_psi(flat3, curve("t^2", "t^3", "t^4"), 0.0, run_diagnostics=False)
    assert p.witnesses["factor_deriv_abs"] == pytest.approx(2.0, abs=1e-10)


# --- ambient dimension 2 -----------------------------------------------------

def test_fold_m2_both_paths(flat2):
    c = curve("t", "t^2")
    r = classify_point(flat2, c, 0.0, run_diagnostics=False)
    p = classify_via_psi(flat2, c, 0.0, run_diagnostics=False)
    assert r.kind is KINDS.FOLD
    assert p.kind is KINDS.FOLD


def test_m2_vanishing_velocity_unresolved(flat2):
    r = classify_point(flat2, curve("t^2", "t^3"), 0.0, run_diagnostics=False)
    assert r.kind is KINDS.UNRESOLVED
    assert "cusp" in r.reason


# --- guard band --------------------------------------------------------------

def test_guard_band_gives_unresolved(flat3):
    """det witness of ~4.8e-8 sits between tol/10 and 10 tol: no call."""
    c = curve("t", "t^2", "0.000000008 * t^3")
    r = classify_point(flat3, c, 0.0, run_diagnostics=False)
    assert r.kind is KINDS.UNRESOLVED
    assert "guard band" in r.reason
    # a clear zero or a clear witness resolves the same geometry
    assert classify_point(flat3, curve("t", "t^2", "1e-12 * t^3 + t^4"), 0.0,
                          run_diagnostics=False).kind is KINDS.FOLDED_UMBRELLA
    assert classify_point(flat3, curve("t", "t^2", "0.001 * t^3"), 0.0,
                          run_diagnostics=False).kind is KINDS.CUSPIDAL_EDGE


def test_straight_line_unresolved(flat3):
    r = classify_point(flat3, curve("t", "0", "0"), 0.0, run_diagnostics=False)
    assert r.kind is KINDS.UNRESOLVED


# --- degenerate (psi == 0) branch --------------------------------------------

def test_degenerate_example_certified(bumpy3):
    c = curve("-t^2", "t", "0")
    for t0 in (-0.5, 0.0, 0.5):
        r = classify_point(bumpy3, c, t0, run_diagnostics=False)
        assert r.kind is KINDS.DEGENERATE_PSI_ZERO
        assert r.witnesses["cert_probes_valid"] >= 15
        assert r.witnesses["psi_window_max"] <= 1e-8
        for k in ("psi_fd1", "psi_fd2", "psi_fd3"):
            assert r.witnesses[k] <= 1e-8


def test_degenerate_diagnostic_verdicts(bumpy3, flat2):
    deg = TangentSurface(bumpy3, curve("-t^2", "t", "0"))
    d = degenerate_diagnostic(deg, 0.0, window=1.0)
    assert d["verdict"] == "injective-like"
    assert d["match_fraction"] == 0.0

    circle = TangentSurface(flat2, curve("cos(t)", "sin(t)", interval=(-3.4, 3.4)))
    d = degenerate_diagnostic(circle, 0.0, window=1.0)
    assert d["verdict"].startswith("fold-like")
    assert d["match_fraction"] >= 0.95
    assert d["median_partner_distance"] < d["epsilon"]


# --- characteristic-field formulas vs the tower ------------------------------

def test_char_formula_immersed_matches_tower_even_torsionful(torsionful3):
    rng = np.random.default_rng(5)
    for conn in (symmetrize(torsionful3), torsionful3, rnd_connection(rng, 3)):
        for _ in range(8):
            c = rnd_curve(rng, 3)
            t0 = float(rng.uniform(-0.5, 0.5))
            got = char_field_formula_immersed(conn, c, t0)
            sym = symmetrize(conn)
            want = characteristic_field(sym, directed_frame(sym, c, t0, 1), t0)
            np.testing.assert_allclose(got, want, atol=1e-9)


def test_char_formula_directed_matches_tower():
    rng = np.random.default_rng(9)
    for _ in range(10):
        conn = rnd_connection(rng, 3)
        base = curve("t^2 / 2", "t^3 / 3", "t^5 / 5")
        d = directed(base, ("1", "t", "t^3"), "t")
        t0 = float(rng.uniform(-0.4, 0.4))
        got = char_field_formula_directed(conn, d, t0)
        want = characteristic_field(conn, d, t0)
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_characteristic_field_rejects_torsion(torsionful3):
    c = curve("t", "t^2", "t^3")
    d = directed_frame(symmetrize(torsionful3), c, 0.0, 1)
    with pytest.raises(ValueError, match="symmetrize"):
        characteristic_field(torsionful3, d, 0.0)


def test_coframe_continuity_with_prev(flat3):
    """Passing the previous coframe keeps the annihilator's sign consistent
    along t, so psi is a continuous scalar field."""
    c = curve("t", "t^2", "t^4")
    d = directed_frame(flat3, c, 0.0, 1)
    prev = None
    values = []
    for t in np.linspace(-0.3, 0.3, 25):
        ch = characteristic_psi(flat3, d, float(t), prev_coframe=prev)
        prev = ch.coframe
        values.append(float(ch.psi[0]))
    diffs = np.abs(np.diff(values))
    assert diffs.max() < 1.0, "psi jumped: coframe flipped sign between steps"
    # psi ~ 24 t <l, e3>: strictly increasing through 0 at this scale
    assert values[0] < 0 < values[-1]


# --- scan --------------------------------------------------------------------

def test_scan_finds_fu_root_off_grid(flat3):
    c = curve("t", "t^2", "t^4 - t^3")
    res = scan_curve(flat3, c, interval=(-1, 1), n=100)  # 0.25 not on this grid
    assert len(res.events) == 1
    t_ev, cls = res.events[0]
    assert t_ev == pytest.approx(0.25, abs=1e-6)
    assert cls.kind is KINDS.FOLDED_UMBRELLA


def test_scan_finds_fu_root_on_grid(flat3):
    c = curve("t", "t^2", "t^4 - t^3")
    res = scan_curve(flat3, c, interval=(-1, 1), n=41)  # grid hits 0.25 exactly
    assert [round(t, 9) for t, _ in res.events] == [0.25]
    assert res.events[0][1].kind is KINDS.FOLDED_UMBRELLA


def test_scan_no_events_when_det_identically_zero(bumpy3):
    res = scan_curve(bumpy3, curve("-t^2", "t", "0"), n=25)
    assert res.events == []
    assert all(cls.kind is KINDS.DEGENERATE_PSI_ZERO for _, cls in res.points)


def test_scan_points_cover_grid(flat3):
    res = scan_curve(flat3, curve("t", "t^2", "t^3"), n=11)
    assert len(res.points) == 11
    assert all(cls.kind is KINDS.CUSPIDAL_EDGE for _, cls in res.points)


# --- torsionless test ---------------------------------------------------------

def test_torsionless_true_and_false(bumpy3, flat3):
    ok, witness = torsionless_test(bumpy3, curve("-t^2", "t", "0"))
    assert ok
    ok, witness = torsionless_test(flat3, curve("t", "t^2", "t^3"))
    assert not ok


def test_torsionless_m2_triple_always_zero(flat2):
    ok, witness = torsionless_test(flat2, curve("t", "t^2"))
    assert ok
    assert witness["max_triple_sv"] == 0.0
    assert witness["min_pair_sv"] > 1e-7


# --- invariance and cross-path agreement -------------------------------------

def test_torsionful_classifies_like_symmetrized(torsionful3):
    c = curve("t", "t^2", "t^3")
    a = classify_point(torsionful3, c, 0.1, run_diagnostics=False)
    b = classify_point(symmetrize(torsionful3), c, 0.1, run_diagnostics=False)
    assert a.kind is b.kind
    assert a.signature == b.signature


def test_cross_path_agreement_on_random_instances():
    rng = np.random.default_rng(123)
    n_checked = n_band = 0
    for _ in range(25):
        conn = rnd_connection(rng, 3)
        c = rnd_curve(rng, 3)
        t0 = float(rng.uniform(-0.8, 0.8))
        a = classify_point(conn, c, t0, run_diagnostics=False)
        b = classify_via_psi(conn, c, t0, run_diagnostics=False)
        if not (a.resolved and b.resolved):
            n_band += 1
            continue
        n_checked += 1
        assert a.kind is b.kind, (t0, a.kind, b.kind, a.witnesses, b.witnesses)
    assert n_checked >= 20  # the guard band must stay rare
    assert n_band <= 5


def test_regular_kind_never_emitted_on_curve(flat3):
    """Every on-curve point of the tangent surface is singular; the regular
    kind exists in the enum for off-curve reporting only."""
    res = scan_curve(flat3, curve("t", "t^2", "t^4 - t^3"), n=31)
    kinds = {cls.kind for _, cls in res.points}
    assert KINDS.REGULAR not in kinds


def test_classification_resolved_property(flat3):
    r = classify_point(flat3, curve("t", "t^2", "t^3"), 0.0, run_diagnostics=False)
    assert r.resolved and r.reason is None
    u = classify_point(flat3, curve("t", "0", "0"), 0.0, run_diagnostics=False)
    assert not u.resolved and u.reason
