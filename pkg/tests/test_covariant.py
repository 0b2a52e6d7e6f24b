"""Covariant-derivative towers along curves and directed frames.

Hand oracle for the polar plane, curve gamma(t) = (1 + t, t):
    velocity V = (1, 1);
    (nabla V)^r     = 0 + Gamma^r_tt  * 1 * 1 = -(1 + t)
    (nabla V)^theta = 0 + 2 Gamma^th_rt * 1 * 1 = 2 / (1 + t)

Direct-definition oracle for any frame u along gamma:
    (nabla u)^l = du^l/dt + Gamma^l_{mn}(gamma) gamma'^m u^n,
evaluated with finite differences for du/dt and table values for Gamma.
"""

from __future__ import annotations

import numpy as np
import pytest

from tansurf.covariant import (
    CurveSpec,
    DirectedCurveSpec,
    TowerOverflow,
    TypeSignature,
    covariant_derive_along,
    curve_tower,
    curve_tower_values,
    directed_frame,
    frame_tower_values,
    frame_type,
    nabla_type,
    signature_from_rows,
)
from tansurf.expr import evaluate, parse

from conftest import curve, directed, fd_derivative


def test_flat_tower_is_ordinary_derivatives(flat3):
    c = curve("t", "t^2", "t^3")
    rows = curve_tower_values(flat3, c, 0.5, 3)
    np.testing.assert_allclose(rows[0], [1.0, 1.0, 0.75], atol=1e-12)
    np.testing.assert_allclose(rows[1], [0.0, 2.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(rows[2], [0.0, 0.0, 6.0], atol=1e-12)


def test_polar_covariant_derivative_hand_value(polar):
    c = curve("1 + t", "t")
    v = tuple(parse(s, dim=2) for s in ("1", "1"))
    dv = covariant_derive_along(polar, c, v)
    for t in (-0.5, 0.0, 0.8):
        got = np.array([evaluate(comp, {"t": t, "x1": 1 + t, "x2": t}) for comp in dv])
        want = np.array([-(1 + t), 2.0 / (1 + t)])
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_bumpy_tower_closed_form(bumpy3):
    """gamma = (-t^2, t, 0) kills the only nonzero symbol along itself:
    Gamma^3_{12} = x1 + x2^2 = -t^2 + t^2 = 0 on the curve, so
    nabla gamma = (-2t, 1, 0), nabla^2 gamma = (-2, 0, 0), nabla^3 = 0."""
    c = curve("-t^2", "t", "0")
    for t in (-0.7, 0.0, 0.4):
        rows = curve_tower_values(bumpy3, c, t, 3)
        np.testing.assert_allclose(rows[0], [-2 * t, 1.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(rows[1], [-2.0, 0.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(rows[2], [0.0, 0.0, 0.0], atol=1e-10)


def test_symbolic_tower_matches_jet_values(bumpy3):
    c = curve("t", "t^2 - 1", "sin(t)")
    sym = curve_tower(bumpy3, c, 3)
    for t in (-0.3, 0.6):
        x = [t, t * t - 1, np.sin(t)]
        env = {"t": t, "x1": x[0], "x2": x[1], "x3": x[2]}
        vals = curve_tower_values(bumpy3, c, t, 3)
        for k in range(3):
            got = np.array([evaluate(comp, env) for comp in sym[k]])
            np.testing.assert_allclose(got, vals[k], atol=1e-9)


def test_frame_tower_matches_direct_definition(bumpy3):
    """(nabla u)^l = u'^l + Gamma^l_{mn} gamma'^m u^n with FD for u'."""
    # gamma is the integral of c * u so the directed data is consistent
    base = curve("t", "t^2 / 2", "t^4 / 4")
    d = directed(base, ("1", "t", "t^3"), "1")
    t0 = 0.45
    rows = frame_tower_values(bumpy3, d, t0, 2)  # rows: u, nabla u
    x = base.value(t0)
    gp = base.velocity(t0)
    G = bumpy3.christoffel_values(np.asarray(x))
    u_of = d.frame_value
    du = fd_derivative(u_of, t0, h=1e-6)
    want = du + np.einsum("lmn,m,n->l", G, gp, u_of(t0))
    np.testing.assert_allclose(rows[1], want, atol=1e-7)
    np.testing.assert_allclose(rows[0], u_of(t0), atol=1e-12)


@pytest.mark.parametrize(
    "components, expected",
    [
        (("t", "t^2", "t^3"), (1, 2, 3)),
        (("t", "t^2", "t^4"), (1, 2, 4)),
        (("t^2", "t^3", "t^4"), (2, 3, 4)),
    ],
)
def test_nabla_type_normal_forms(flat3, components, expected):
    c = curve(*components)
    sig = nabla_type(flat3, c, 0.0)
    assert sig.as_tuple() == expected
    assert sig.complete


def test_nabla_type_m4(flat4):
    c = curve("t^2", "t^3", "t^4", "t^5")
    sig = nabla_type(flat4, c, 0.0)
    assert sig.as_tuple() == (2, 3, 4, 5)


def test_nabla_type_incomplete_for_straight_line(flat3):
    sig = nabla_type(flat3, curve("t", "0", "0"), 0.0)
    assert not sig.complete
    assert sig.as_tuple() == (1,)
    assert "undetermined" in str(sig)


def test_signature_from_rows_synthetic():
    rows = np.array(
        [
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],  # dependent on row 1
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    sig = signature_from_rows(rows, m=3, k_max=4, tol=1e-8)
    assert sig.as_tuple() == (1, 3, 4)
    assert sig.complete
    assert TypeSignature((1, 3, 4), 3, 4).as_tuple() == (1, 3, 4)


def test_directed_frame_factors_velocity(flat3):
    """directed_frame(k) returns (u, c) with c(t) u(t) = gamma'(t) and
    c = k (t - t0)^(k-1)."""
    c = curve("t^2", "t^3", "t^4")
    d = directed_frame(flat3, c, 0.0, 2)
    for t in (-0.5, 0.3, 1.0):
        cu = d.factor_value(t) * d.frame_value(t)
        np.testing.assert_allclose(cu, c.velocity(t), atol=1e-12)
    assert d.factor_value(0.0) == 0.0
    assert np.linalg.norm(d.frame_value(0.0)) > 0.5


def test_directed_frame_k1_is_velocity(flat3):
    c = curve("t", "t^2", "t^3")
    d = directed_frame(flat3, c, 0.0, 1)
    np.testing.assert_allclose(d.frame_value(0.7), c.velocity(0.7), atol=0)
    assert d.factor_value(0.3) == 1.0


def test_directed_frame_rejects_bad_divisibility(flat3):
    c = curve("t", "t^2", "t^3")  # velocity (1, ...) not divisible by t
    with pytest.raises(ValueError, match="divisible"):
        directed_frame(flat3, c, 0.0, 2)
    c2 = curve("sin(t)", "t^2", "t^3")
    with pytest.raises(ValueError, match="not polynomial"):
        directed_frame(flat3, c2, 0.0, 2)


def test_frame_type_constructed_case(flat3):
    """u = (1, t, t^3), c = t: frame tower ranks appear at depths (1, 2, 4),
    while the underlying curve gamma = int(c u) has nabla-type (2, 3, 5)."""
    base = curve("t^2 / 2", "t^3 / 3", "t^5 / 5")  # gamma' = t * u
    d = directed(base, ("1", "t", "t^3"), "t")
    assert frame_type(flat3, d, 0.0).as_tuple() == (1, 2, 4)
    assert nabla_type(flat3, base, 0.0).as_tuple() == (2, 3, 5)


def test_tower_overflow_on_deep_symbolic_tower(sphere):
    """Deep symbolic towers on trigonometric coefficients exceed the node cap
    and must fail loudly rather than hang."""
    c = curve("1 + t^2 / 2", "t")
    with pytest.raises(TowerOverflow, match="expression nodes"):
        curve_tower(sphere, c, 9)


def test_tower_values_do_not_overflow(sphere):
    """The jet-based numeric tower has no node cap: depth 9 is fine where the
    symbolic tower above overflows."""
    c = curve("1 + t^2 / 2", "t")
    rows = curve_tower_values(sphere, c, 0.2, 9)
    assert rows.shape[1] == 2
    assert np.isfinite(rows).all()
