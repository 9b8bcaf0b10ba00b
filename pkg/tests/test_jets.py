import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polystress import jets
from polystress.errors import DomainError, JetOrderError
from polystress.jets import Jet, jet_arith, jet_elementary, jet_variable, jet_variables


def univariate(order, x0=0.0):
    return jet_variable(0, x0, 1, order)


def test_layout_is_graded_lex():
    mi = jets.multi_indices(2, 2)
    assert mi.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    assert jets.num_coeffs(3, 4) == 35


def test_geometric_series():
    x = univariate(4)
    r = 1 / (1 + x)
    np.testing.assert_allclose(r.coeffs, [1, -1, 1, -1, 1])


def test_sine_taylor_coefficients():
    s = jets.sin(univariate(5))
    np.testing.assert_allclose(s.coeffs, [0, 1, 0, -1 / 6, 0, 1 / 120], atol=1e-17)


def test_exp_log_roundtrip():
    x = univariate(6, 0.3)
    np.testing.assert_allclose(jets.log(jets.exp(x)).coeffs, x.coeffs, atol=1e-15)


def test_mixed_partial():
    x1, x2 = jet_variables(np.array([0.4, -1.3]), 3)
    f = x1**2 * x2
    assert f.partial((2, 1)) == pytest.approx(2.0)
    assert f.partial((1, 0)) == pytest.approx(2 * 0.4 * -1.3)
    assert jets.extract_partial(f, (0, 1)) == pytest.approx(0.16)


def test_derivative_spends_one_order():
    x = univariate(3, 2.0)
    d = (x**3).derivative(0)
    assert d.order == 2
    np.testing.assert_allclose(d.partials()[:3], [12.0, 12.0, 6.0])
    with pytest.raises(JetOrderError):
        jets.jet_constant(1.0, 1, 0).derivative(0)


def test_batched_points():
    pts = np.linspace(0, 1, 7)[:, None]
    (x,) = jet_variables(pts, 2)
    y = jets.exp(x)
    assert y.batch_shape == (7,)
    np.testing.assert_allclose(y.value, np.exp(pts[:, 0]))
    np.testing.assert_allclose(y.partial((2,)), np.exp(pts[:, 0]))


def test_unbatched_meets_batched():
    c = jets.jet_constant(2.0, 1, 3)
    (x,) = jet_variables(np.array([[0.0], [1.0]]), 3)
    assert (c * x).batch_shape == (2,)
    np.testing.assert_allclose((c + x).value, [2.0, 3.0])


def test_operators_truncate_strict_arith_does_not():
    a = univariate(4, 0.5)
    b = univariate(2, 0.5)
    assert (a * b).order == 2
    with pytest.raises(ValueError):
        jet_arith(a, b, "mul")
    np.testing.assert_allclose(jet_arith(a, a, "add").coeffs, (2 * a).coeffs)


def test_domain_errors():
    with pytest.raises(DomainError):
        jets.log(univariate(2, -1.0))
    with pytest.raises(DomainError):
        jets.reciprocal(univariate(2, 0.0))
    with pytest.raises(DomainError):
        jets.sqrt(univariate(2, -0.5))


def test_index_errors():
    with pytest.raises(IndexError):
        jet_variable(2, 0.0, 2, 1)


def test_elementary_dispatch():
    x = univariate(4, 0.7)
    np.testing.assert_allclose(jet_elementary("cos", x).coeffs, jets.cos(x).coeffs)
    np.testing.assert_allclose(jet_elementary("pow_real", x, 2.5).partial((1,)), 2.5 * 0.7**1.5)


def test_compose_matches_direct_evaluation():
    # exp(sin y) with y = sin(x): compose the y-series with delta = sin(x) - sin(x0)
    x0 = 0.3
    (x,) = jet_variables(np.array([x0]), 6)
    inner = jets.sin(x)
    y = jet_variable(0, float(np.sin(x0)), 1, 6)
    outer = jets.exp(jets.sin(y))
    composed = jets.compose(outer, [inner.without_constant()])
    direct = jets.exp(jets.sin(inner))
    np.testing.assert_allclose(composed.coeffs, direct.coeffs, rtol=1e-12, atol=1e-14)


floats = st.floats(-2.0, 2.0)


@settings(max_examples=40, deadline=None)
@given(floats, floats, st.integers(1, 8))
def test_product_rule(a, b, order):
    x = univariate(order, a)
    f, g = jets.sin(x), jets.exp(x * b)
    lhs = (f * g).derivative(0)
    rhs = f.derivative(0) * g + f * g.derivative(0)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.integers(-4, 5), st.integers(0, 8))
def test_integer_power_matches_repeated_product(a, n, order):
    x = univariate(order, a)
    expected = jets.jet_constant(1.0, 1, order)
    for _ in range(abs(n)):
        expected = expected * x
    if n < 0:
        expected = 1 / expected
    np.testing.assert_allclose((x**n).coeffs, expected.coeffs, rtol=1e-11, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_pythagorean_identity_two_variables(a, b):
    x1, x2 = jet_variables(np.array([a, b]), 7)
    arg = x1 * x2 + x1
    s = jets.sin(arg) ** 2 + jets.cos(arg) ** 2
    np.testing.assert_allclose(s.coeffs, np.eye(1, len(s.coeffs))[0], atol=1e-13)


@pytest.mark.parametrize("order", [0, 1, 5, 12])
def test_factorial_partials(order):
    x = univariate(order, 0.0)
    e = jets.exp(x)
    np.testing.assert_allclose(e.partials(), np.ones(order + 1), rtol=1e-13)


def test_pow_real_against_closed_form():
    x = univariate(3, 2.0)
    p = jets.pow_real(x, 0.5)
    np.testing.assert_allclose(p.partials(), [math.sqrt(2), 0.5 / math.sqrt(2), -0.25 * 2**-1.5,
                                              0.375 * 2**-2.5], rtol=1e-13)


def test_jet_constructor_validates():
    with pytest.raises(ValueError):
        Jet(np.zeros(3), 1, 1)
    with pytest.raises(JetOrderError):
        Jet(np.zeros(14), 1, 13)
