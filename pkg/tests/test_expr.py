import numpy as np
import pytest

from darboux.errors import ExprSyntaxError, UnknownIdentifierError
from darboux.expr import Expr2, parse_metric_expr


def test_eval_basic():
    assert Expr2("1 + u^2")(2.0, 0.0) == 5.0
    assert Expr2("2*u + 3*v")(1.0, 2.0) == 8.0
    assert Expr2("sin(u)")(0.0, 0.0) == 0.0
    assert Expr2("-u^2")(2.0, 0.0) == -4.0  # unary minus binds below power


def test_precedence_and_science_notation():
    assert Expr2("2 + 3*4")(0, 0) == 14.0
    assert Expr2("2^3^2")(0, 0) == 512.0  # right associative
    assert Expr2("1.5e-2 * 100")(0, 0) == pytest.approx(1.5)


def test_symbolic_derivative():
    d = Expr2("u*v^3/6")
    assert d.eval_deriv(0, 2, 1.0, 1.0) == pytest.approx(1.0)
    assert d.eval_deriv(1, 3, 0.3, -0.7) == pytest.approx(1.0)
    e = Expr2("sin(u)*exp(v)")
    assert e.eval_deriv(2, 1, 0.4, 0.2) == pytest.approx(-np.sin(0.4) * np.exp(0.2))
    f = Expr2("sqrt(1 + u^2)")
    assert f.eval_deriv(1, 0, 0.5, 0.0) == pytest.approx(0.5 / np.sqrt(1.25))


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse_metric_expr("sin(u")
    assert err.value.position == 5
    with pytest.raises(ExprSyntaxError):
        parse_metric_expr("1 + * 2")
    with pytest.raises(UnknownIdentifierError):
        parse_metric_expr("1 + w")


def test_vectorized_eval():
    e = Expr2("u^2 + cos(v)")
    u = np.linspace(-1, 1, 7)
    v = np.linspace(0, 2, 7)
    np.testing.assert_allclose(e(u, v), u**2 + np.cos(v))


def test_jet_matches_taylor():
    e = Expr2("sin(0.3 + u) * exp(0.1 * v)")
    j = e.jet(5)
    # spot check a few Taylor coefficients against symbolic derivatives
    import math

    for a, b in ((0, 0), (1, 0), (2, 1), (0, 3)):
        expect = e.eval_deriv(a, b, 0.0, 0.0) / (math.factorial(a) * math.factorial(b))
        assert j.coef[a, b] == pytest.approx(expect, rel=1e-12)
