"""Geodesic integration against closed-form oracles.

* flat space: geodesics are straight lines, exactly;
* polar plane: geodesics written back in Cartesian coordinates are straight
  lines (the chart is curved, the geometry is not);
* round sphere: the equator and meridians are unit-speed geodesics, and the
  metric speed g(v, v) is a first integral along any geodesic;
* second-order jet: phi(s) = x + s v + 1/2 s^2 h(x, v, s), so h0 = -Gamma(v, v)
  and the finite-difference second s-derivative of the integrator matches h0.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tansurf.connection import Connection
from tansurf.geodesic import (
    GeodesicEscape,
    IntegrationError,
    geodesic_states,
    geodesic_states_batch,
    integrate_geodesic,
    jet_coefficients,
    series_approx,
    step_count,
)

from conftest import polar_to_cartesian


def metric_speed(conn, x, v, g_fn):
    g = g_fn(x)
    return float(v @ g @ v)


def test_flat_geodesics_are_straight_lines(flat3):
    x0 = np.array([0.5, -1.0, 2.0])
    v0 = np.array([1.0, 2.0, -0.5])
    for s in (-1.5, -0.3, 0.0, 0.7, 2.0):
        np.testing.assert_allclose(
            integrate_geodesic(flat3, x0, v0, s), x0 + s * v0, atol=1e-12
        )


def test_polar_geodesics_are_cartesian_lines(polar):
    x0 = np.array([1.0, 0.3])  # r, theta
    v0 = np.array([0.2, 0.9])
    s_values = np.linspace(-0.6, 0.8, 15)
    pos, vel = geodesic_states(polar, x0, v0, s_values)
    cart = polar_to_cartesian(pos)
    # Cartesian image must be affine in s: compare with the chord through
    # the s=0 point with the pushed-forward initial velocity
    p0 = polar_to_cartesian(x0[None])[0]
    r, th = x0
    dr, dth = v0
    cart_v0 = np.array(
        [dr * np.cos(th) - r * np.sin(th) * dth, dr * np.sin(th) + r * np.cos(th) * dth]
    )
    for s, c in zip(s_values, cart):
        np.testing.assert_allclose(c, p0 + s * cart_v0, atol=1e-9)


def test_sphere_equator_and_meridian(sphere):
    eq = np.array([np.pi / 2, 0.0])
    pos, _ = geodesic_states(sphere, eq, np.array([0.0, 1.0]), np.array([0.5, 1.0, 3.0]))
    np.testing.assert_allclose(pos[:, 0], np.pi / 2, atol=1e-10)
    np.testing.assert_allclose(pos[:, 1], [0.5, 1.0, 3.0], atol=1e-10)

    start = np.array([0.3, 1.1])
    pos, _ = geodesic_states(sphere, start, np.array([1.0, 0.0]), np.array([0.4, 1.2]))
    np.testing.assert_allclose(pos[:, 0], [0.7, 1.5], atol=1e-10)
    np.testing.assert_allclose(pos[:, 1], 1.1, atol=1e-12)


@given(
    u0=st.floats(min_value=0.5, max_value=2.5),
    du=st.floats(min_value=-1, max_value=1),
    dv=st.floats(min_value=-1, max_value=1),
)
@settings(max_examples=40, deadline=None)
def test_sphere_geodesic_conserves_speed(u0, dv, du):
    """g(phi', phi') is a first integral of the geodesic flow (Levi-Civita)."""
    from tansurf.connection import levi_civita

    sphere = levi_civita({"1,1": "1", "2,2": "sin(x1)^2"}, m=2)

    def g_fn(x):
        return np.diag([1.0, np.sin(x[0]) ** 2])

    x0 = np.array([u0, 0.2])
    v0 = np.array([du, dv])
    e0 = metric_speed(sphere, x0, v0, g_fn)
    pos, vel = geodesic_states(sphere, x0, v0, np.array([0.3, 0.9]))
    for p, v in zip(pos, vel):
        if not (0.05 < p[0] < np.pi - 0.05):  # keep clear of the chart poles
            continue
        assert metric_speed(sphere, p, v, g_fn) == pytest.approx(e0, rel=1e-8, abs=1e-10)


def test_jet_h0_equals_minus_gamma_vv(bumpy3):
    x = np.array([0.4, -0.7, 1.2])
    v = np.array([1.0, 0.5, -2.0])
    jet = jet_coefficients(bumpy3, x, v)
    G = bumpy3.christoffel_values(x)
    np.testing.assert_allclose(jet.h0, -np.einsum("lmn,m,n->l", G, v, v), atol=1e-12)


def test_jet_h0_matches_fd_second_derivative(bumpy3, sphere):
    for conn, x, v in (
        (bumpy3, np.array([0.4, -0.7, 1.2]), np.array([1.0, 0.5, -2.0])),
        (sphere, np.array([1.2, 0.1]), np.array([0.7, 0.4])),
    ):
        jet = jet_coefficients(conn, x, v)
        h = 1e-3
        plus = integrate_geodesic(conn, x, v, h)
        minus = integrate_geodesic(conn, x, v, -h)
        fd2 = (plus - 2 * np.asarray(x) + minus) / h**2
        np.testing.assert_allclose(fd2, jet.h0, atol=1e-5)


def test_jet_partials_match_fd(bumpy3):
    """dh_dx and dh_dv are the x/v-gradients of h0; dh_ds is the s-slope of
    h(s) = 2 (phi(s) - x - s v) / s^2 at s = 0."""
    x = np.array([0.4, -0.7, 1.2])
    v = np.array([1.0, 0.5, -2.0])
    jet = jet_coefficients(bumpy3, x, v)
    eps = 1e-6
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = eps
        fd = (jet_coefficients(bumpy3, x + dx, v).h0 - jet_coefficients(bumpy3, x - dx, v).h0) / (2 * eps)
        np.testing.assert_allclose(jet.dh_dx[:, j], fd, atol=1e-6)
        fdv = (jet_coefficients(bumpy3, x, v + dx).h0 - jet_coefficients(bumpy3, x, v - dx).h0) / (2 * eps)
        np.testing.assert_allclose(jet.dh_dv[:, j], fdv, atol=1e-6)

    def h_of(s):
        return 2.0 * (integrate_geodesic(bumpy3, x, v, s) - x - s * v) / s**2

    s = 1e-3
    fd_s = (h_of(s) - h_of(-s)) / (2 * s)
    np.testing.assert_allclose(jet.dh_ds, fd_s, atol=1e-5)


def test_series_approx_is_fourth_order(bumpy3):
    """||phi(s) - series(s)|| ~ C s^p with p >= 3.7 (third-order jet model)."""
    x = np.array([0.2, 0.5, -0.3])
    v = np.array([0.8, -1.1, 0.6])
    jet = jet_coefficients(bumpy3, x, v)
    ss = np.array([0.2, 0.1, 0.05, 0.025])
    errs = []
    for s in ss:
        truth = integrate_geodesic(bumpy3, x, v, float(s))
        errs.append(np.linalg.norm(truth - series_approx(bumpy3, x, v, float(s), jet)))
    errs = np.array(errs)
    assert (errs > 0).all()
    p = np.polyfit(np.log(ss), np.log(errs), 1)[0]
    assert p >= 3.7, f"series error order fit {p:.2f}"


def test_states_velocities_differentiate_positions(polar):
    x0 = np.array([1.3, -0.2])
    v0 = np.array([-0.4, 0.8])
    h = 1e-5
    s_grid = np.array([0.5 - h, 0.5, 0.5 + h])
    pos, vel = geodesic_states(polar, x0, v0, s_grid)
    fd = (pos[2] - pos[0]) / (2 * h)
    np.testing.assert_allclose(vel[1], fd, atol=1e-8)


def test_batch_layout_and_agreement_with_single(sphere):
    X = np.array([[1.2, 0.0], [0.9, 0.5], [1.7, -0.3]])
    V = np.array([[0.3, 0.8], [1.0, 0.0], [-0.2, 0.6]])
    s_values = np.array([-0.4, 0.0, 0.7])
    pos, vel, ok = geodesic_states_batch(sphere, X, V, s_values)
    assert pos.shape == (3, 3, 2) and ok.shape == (3, 3)
    assert ok.all()
    np.testing.assert_allclose(pos[1], X, atol=0)  # s = 0 row is the input
    for b in range(3):
        for i, s in enumerate(s_values):
            np.testing.assert_allclose(
                pos[i, b], integrate_geodesic(sphere, X[b], V[b], float(s)), atol=1e-9
            )


def test_escape_raises_single_invalidate_in_batch():
    # Gamma^1_{11} = -3 makes v' = 3 v^2 blow up at s = 1/3 along x1
    blow = Connection(2, {"1,1,1": "-3"})
    with pytest.raises(GeodesicEscape):
        integrate_geodesic(blow, [0.0, 0.0], [1.0, 0.0], 0.5)
    X = np.array([[0.0, 0.0], [0.0, 0.0]])
    V = np.array([[1.0, 0.0], [0.0, 1.0]])  # first row escapes, second is flat
    pos, vel, ok = geodesic_states_batch(blow, X, V, np.array([0.2, 0.5]))
    assert ok[0, 0] and not ok[1, 0]  # escaping row: fine at 0.2, gone at 0.5
    assert ok[:, 1].all()
    assert np.isnan(pos[1, 0]).all()
    np.testing.assert_allclose(pos[1, 1], [0.0, 0.5], atol=1e-12)


def test_nonconvergent_raise_vs_invalidate():
    """Coefficients oscillating far below the finest step size can never pass
    the step-doubling accuracy check: 'raise' surfaces IntegrationError,
    'invalidate' nan-fills the bad row and keeps the healthy one."""
    wig = Connection(2, {"1,1,1": "sin(1000000 * x1)"})
    X = np.array([[0.0, 0.0], [0.0, 0.0]])
    V = np.array([[1.0, 0.0], [0.0, 1.0]])  # second row never sees the wiggle
    with pytest.raises(IntegrationError, match="did not converge"):
        geodesic_states_batch(wig, X, V, np.array([1.0]))
    pos, vel, ok = geodesic_states_batch(
        wig, X, V, np.array([1.0]), nonconvergent="invalidate"
    )
    assert not ok[0, 0]
    assert np.isnan(pos[0, 0]).all()
    assert ok[0, 1]
    np.testing.assert_allclose(pos[0, 1], [0.0, 1.0], atol=1e-12)


def test_pole_graze_invalidates_only_bad_row():
    """A unit-speed trajectory aimed 1e-4 from the polar-chart pole is
    invalidated (escape or accuracy failure) without poisoning the batch."""
    from tansurf.connection import levi_civita

    polar = levi_civita({"1,1": "1", "2,2": "x1^2"}, m=2)
    d = np.array([-1.0, 1e-4])
    d /= np.linalg.norm(d)
    X = np.array([[1.0, 0.0], [1.0, 0.0]])
    V = np.array([d, [0.1, 0.2]])
    pos, vel, ok = geodesic_states_batch(
        polar, X, V, np.array([1.5]), nonconvergent="invalidate"
    )
    assert not ok[0, 0]
    assert np.isnan(pos[0, 0]).all()
    assert ok[0, 1]


def test_step_count_monotone():
    counts = [step_count(s) for s in (0.1, 0.5, 1.0, 2.0, 4.0)]
    assert counts == sorted(counts)
    assert counts[0] >= 8
