"""Expression grammar: parsing, evaluation, symbolic differentiation.

The differentiation oracle is central finite differences: for smooth inputs
the symbolic derivative and the FD quotient must agree to ~h^2.
"""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tansurf.expr import (
    Const,
    EvaluationError,
    ParseError,
    Var,
    as_expression,
    differentiate,
    evaluate,
    parse,
    poly_coefficients,
    poly_expression,
)


def test_literals_and_precedence():
    assert evaluate(parse("2 + 3 * 4"), {}) == 14.0
    assert evaluate(parse("(2 + 3) * 4"), {}) == 20.0
    assert evaluate(parse("2 - 3 - 4"), {}) == -5.0  # left associative
    assert evaluate(parse("12 / 4 / 3"), {}) == 1.0
    assert evaluate(parse("-2^2"), {}) == -4.0  # unary minus binds looser than ^
    assert evaluate(parse("(2^3)^2"), {}) == 64.0
    with pytest.raises(ParseError):  # chained ^ needs parentheses
        parse("2^3^2")


def test_variables_and_functions():
    env = {"t": 0.3, "x1": 1.5, "x2": -2.0}
    assert evaluate(parse("t * x1 + x2", dim=2), env) == pytest.approx(0.3 * 1.5 - 2.0)
    assert evaluate(parse("sin(t)^2 + cos(t)^2"), {"t": 0.7}) == pytest.approx(1.0)
    assert evaluate(parse("exp(0)"), {}) == 1.0
    # s is legal alongside t (surface parametrizations use both)
    assert evaluate(parse("t - 2*s"), {"t": 1.0, "s": 0.25}) == 0.5


def test_scientific_notation_and_negative_exponent():
    assert evaluate(parse("1.5e-3"), {}) == 1.5e-3
    assert evaluate(parse("x1^-2", dim=1), {"x1": 2.0}) == 0.25


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("x1^2.5", "integer"),
        ("x1^(1+1)", "integer exponent"),
        ("foo(t)", "unknown identifier"),
        ("x4", "coordinates are x1..x3"),
        ("t +", "expected"),
        ("2*^3", "expected"),
        ("", "expected"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse(text, dim=3)


def test_dim_gate_only_when_given():
    # without dim, any x<k> is admitted; with dim it is range-checked
    parse("x7")
    with pytest.raises(ParseError):
        parse("x7", dim=3)


def test_evaluation_errors():
    with pytest.raises(EvaluationError, match="division by zero"):
        evaluate(parse("1/t"), {"t": 0.0})
    with pytest.raises(EvaluationError, match="negative power"):
        evaluate(parse("t^-1"), {"t": 0.0})
    with pytest.raises(EvaluationError, match="overflow"):
        evaluate(parse("exp(t)"), {"t": 1e6})
    with pytest.raises(EvaluationError, match="unbound"):
        evaluate(parse("x1"), {"t": 0.0})


def test_differentiate_polynomial_exact():
    e = parse("3 + 2*t - t^3")
    de = differentiate(e, "t")
    for t in (-1.0, 0.0, 0.5, 2.0):
        assert evaluate(de, {"t": t}) == pytest.approx(2 - 3 * t * t, abs=1e-12)


def test_differentiate_wrt_other_variable_is_zero():
    e = parse("sin(t) * x1^2", dim=2)
    dz = differentiate(e, "x2")
    assert evaluate(dz, {"t": 0.3, "x1": 2.0, "x2": 5.0}) == 0.0


def test_chain_rule_matches_finite_differences():
    e = parse("sin(x1^2) * exp(x1 / 3) - cos(x1)", dim=1)
    de = differentiate(e, "x1")
    h = 1e-6
    for x in (-1.2, -0.3, 0.0, 0.7, 2.1):
        fd = (evaluate(e, {"x1": x + h}) - evaluate(e, {"x1": x - h})) / (2 * h)
        assert evaluate(de, {"x1": x}) == pytest.approx(fd, abs=1e-7)


@given(
    coeffs=st.lists(
        st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=6
    ),
    t=st.floats(min_value=-2, max_value=2, allow_nan=False),
)
@settings(max_examples=200, deadline=None)
def test_poly_roundtrip_and_derivative(coeffs, t):
    """poly_expression/poly_coefficients invert each other, and the symbolic
    derivative of a polynomial equals the hand-computed power-rule value."""
    e = poly_expression(coeffs)
    back = poly_coefficients(e)
    assert back is not None
    assert len(back) <= max(len(coeffs), 1)
    got = evaluate(e, {"t": t})
    want = sum(c * t**k for k, c in enumerate(coeffs))
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
    de = differentiate(e, "t")
    want_d = sum(k * c * t ** (k - 1) for k, c in enumerate(coeffs) if k >= 1)
    assert evaluate(de, {"t": t}) == pytest.approx(want_d, rel=1e-9, abs=1e-9)


def test_poly_coefficients_rejects_transcendental():
    assert poly_coefficients(parse("sin(t)")) is None
    assert poly_coefficients(parse("1/ (1 + t)")) is None


def test_as_expression_accepts_numbers_and_nodes():
    assert isinstance(as_expression(2.5), Const)
    v = Var("t")
    assert as_expression(v) is v
    assert evaluate(as_expression(3), {}) == 3.0


@given(st.floats(min_value=-3, max_value=3, allow_nan=False))
@settings(max_examples=100, deadline=None)
def test_parse_str_round_trip(t):
    """str(expr) reparses to an expression with identical values."""
    e = parse("(t^3 - 2*t) * sin(t) + exp(t/4)")
    e2 = parse(str(e))
    assert evaluate(e2, {"t": t}) == pytest.approx(evaluate(e, {"t": t}), rel=1e-12)
