"""Shared fixtures: connections and curves used as oracles across the suite.

The geometric fixtures are chosen so that every nontrivial quantity has an
independent closed form to test against:

* polar coordinates on the plane  — geodesics are Euclidean straight lines,
  so ``cartesian(geodesic(...))`` must be affine in s;
* the round sphere (colatitude/longitude chart) — geodesics are great
  circles; the equator and meridians are closed-form geodesics;
* a single nonflat polynomial connection with Gamma^3_{12} = Gamma^3_{21}
  = x1 + x2^2 whose tangent surface over (-t^2, t, 0) has the closed form
  (-2ts - t^2, s + t, t s^4 / 3).
"""

from __future__ import annotations

import numpy as np
import pytest

from tansurf.connection import Connection, levi_civita
from tansurf.covariant import CurveSpec, DirectedCurveSpec
from tansurf.expr import parse


def curve(*components: str, interval=(-1.0, 1.0)) -> CurveSpec:
    dim = len(components)
    return CurveSpec(tuple(parse(c, dim=dim) for c in components), interval=interval)


def directed(base: CurveSpec, frame: tuple[str, ...], factor: str) -> DirectedCurveSpec:
    dim = base.m
    return DirectedCurveSpec(
        base,
        tuple(parse(c, dim=dim) for c in frame),
        parse(factor, dim=dim),
    )


@pytest.fixture(scope="session")
def flat2():
    return Connection.flat(2)


@pytest.fixture(scope="session")
def flat3():
    return Connection.flat(3)


@pytest.fixture(scope="session")
def flat4():
    return Connection.flat(4)


@pytest.fixture(scope="session")
def polar():
    """Plane in polar coordinates (x1 = r, x2 = theta): g = diag(1, r^2)."""
    return levi_civita({"1,1": "1", "2,2": "x1^2"}, m=2)


@pytest.fixture(scope="session")
def sphere():
    """Unit sphere, x1 = colatitude, x2 = longitude: g = diag(1, sin^2 x1)."""
    return levi_civita({"1,1": "1", "2,2": "sin(x1)^2"}, m=2)


@pytest.fixture(scope="session")
def bumpy3():
    """The nonflat example connection: Gamma^3_{12} = Gamma^3_{21} = x1 + x2^2."""
    return Connection(3, {"3,1,2": "x1 + x2^2", "3,2,1": "x1 + x2^2"})


@pytest.fixture(scope="session")
def torsionful3():
    """Asymmetric table: Gamma^1_{12} = x2 but Gamma^1_{21} = 0."""
    return Connection(3, {"1,1,2": "x2"})


def polar_to_cartesian(states: np.ndarray) -> np.ndarray:
    r, th = states[..., 0], states[..., 1]
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


# --- finite-difference helpers used as independent oracles ------------------

def fd_derivative(f, t0: float, h: float = 1e-5, order: int = 1):
    """Central finite differences of a vector-valued callable, orders 1..3."""
    if order == 1:
        return (np.asarray(f(t0 + h)) - np.asarray(f(t0 - h))) / (2 * h)
    if order == 2:
        return (np.asarray(f(t0 + h)) - 2 * np.asarray(f(t0)) + np.asarray(f(t0 - h))) / h**2
    if order == 3:
        return (
            np.asarray(f(t0 + 2 * h))
            - 2 * np.asarray(f(t0 + h))
            + 2 * np.asarray(f(t0 - h))
            - np.asarray(f(t0 - 2 * h))
        ) / (2 * h**3)
    raise ValueError(order)
