import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polystress import exprlang as ex
from polystress.errors import DomainError, ExprSyntaxError
from polystress.jets import jet_variables


@pytest.mark.parametrize(
    "text, env, expected",
    [
        ("1 + 2*3", {}, 7.0),
        ("2^3^1", None, None),
        ("-x1^2", {"x1": 3.0}, -9.0),
        ("(x1 - x2)/2", {"x1": 5.0, "x2": 1.0}, 2.0),
        ("x1^-2", {"x1": 2.0}, 0.25),
        ("x1^(-1)", {"x1": 4.0}, 0.25),
        ("sin(pi/2) + cos(0) + exp(0) + log(1) + sqrt(9)", {}, 6.0),
        ("2*pi", {}, 2 * math.pi),
        ("1.5e-3*y2", {"y2": 2000.0}, 3.0),
    ],
)
def test_evaluate_reals(text, env, expected):
    if env is None:
        with pytest.raises(ExprSyntaxError):
            ex.parse(text)
        return
    assert ex.evaluate(ex.parse(text), env) == pytest.approx(expected)


def test_precedence_tree():
    e = ex.parse("x1 + x2*x3^2")
    assert e == ex.Add(ex.Var("x1"), ex.Mul(ex.Var("x2"), ex.Pow(ex.Var("x3"), 2)))


@pytest.mark.parametrize(
    "text, offset",
    [
        ("x1 +", 4),
        ("x1 + * 2", 5),
        ("sin x1", 4),
        ("foo(x1)", 0),
        ("x1 ^ 1.5", 5),
        ("(x1 + 2", 7),
        ("x1 $ 2", 3),
        ("x1 x2", 3),
        ("1e400", 0),
    ],
)
def test_syntax_errors_report_byte_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse(text)
    assert info.value.offset == offset
    assert f"at offset {offset}" in str(info.value)


def test_offsets_count_bytes_not_characters():
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse("x1 + é")
    assert info.value.offset == 5
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse("éé x1")
    assert info.value.offset == 0


def test_variable_restrictions():
    with pytest.raises(ExprSyntaxError):
        ex.parse("y1 + x1", allowed_vars=("x1",))
    assert ex.variables(ex.parse("x1*y2 + sin(x3)")) == {"x1", "y2", "x3"}


def test_real_domain_errors():
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("log(x1)"), {"x1": 0.0})
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("1/x1"), {"x1": 0.0})
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("sqrt(x1)"), {"x1": -1.0})
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("x1^-1"), {"x1": 0.0})


def test_jet_evaluation_matches_numpy_derivatives():
    e = ex.parse("exp(x1)*sin(x2) + x1^3/(1 + x2^2)")
    j = ex.eval_jet(e, [0.3, -0.8], 2, ("x1", "x2"))
    x1, x2 = 0.3, -0.8
    assert j.value == pytest.approx(math.exp(x1) * math.sin(x2) + x1**3 / (1 + x2**2))
    assert j.partial((1, 0)) == pytest.approx(math.exp(x1) * math.sin(x2) + 3 * x1**2 / (1 + x2**2))
    assert j.partial((0, 1)) == pytest.approx(math.exp(x1) * math.cos(x2) - 2 * x2 * x1**3 / (1 + x2**2) ** 2)


def test_constant_expression_broadcasts_over_batch():
    j = ex.eval_jet(ex.parse("2*pi"), np.zeros((5, 1)), 3, ("x1",))
    assert j.batch_shape == (5,)
    np.testing.assert_allclose(j.value, 2 * math.pi)


# -- symbolic differentiation ----------------------------------------------------


@pytest.mark.parametrize(
    "text",
    ["x1^3*sin(x2)", "exp(x1*x2)/(1 + x1^2)", "log(2 + cos(x1)) - sqrt(3 + x2^2)", "4/(1 + x1^2 + x2^2)^2", "-x2"],
)
@pytest.mark.parametrize("var", ["x1", "x2"])
def test_differentiate_matches_jets(text, var):
    e = ex.parse(text)
    d = ex.differentiate(e, var)
    pt = [0.37, -0.61]
    j = ex.eval_jet(e, pt, 1, ("x1", "x2"))
    beta = (1, 0) if var == "x1" else (0, 1)
    assert ex.evaluate(d, {"x1": pt[0], "x2": pt[1]}) == pytest.approx(j.partial(beta), rel=1e-13, abs=1e-14)


def test_differentiate_simplifies_constants():
    assert ex.differentiate(ex.parse("3 + x2"), "x1") == ex.Num(0.0)
    assert ex.differentiate(ex.parse("x1"), "x1") == ex.Num(1.0)


# -- round trip ----------------------------------------------------------------------

leaves = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(ex.Num),
    st.sampled_from(["x1", "x2", "y1"]).map(ex.Var),
)


def _extend(children):
    return st.one_of(
        children.map(ex.Neg),
        st.tuples(children, children).map(lambda t: ex.Add(*t)),
        st.tuples(children, children).map(lambda t: ex.Sub(*t)),
        st.tuples(children, children).map(lambda t: ex.Mul(*t)),
        st.tuples(children, children).map(lambda t: ex.Div(*t)),
        st.tuples(children, st.integers(-4, 4)).map(lambda t: ex.Pow(*t)),
        st.tuples(st.sampled_from(ex.FUNCTIONS), children).map(lambda t: ex.Call(*t)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(trees)
def test_canonical_text_round_trips(tree):
    text = ex.to_text(tree)
    assert ex.parse(text) == tree
    assert ex.to_text(ex.parse(text)) == text


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_jet_and_real_evaluation_agree(a, b):
    e = ex.parse("sin(x1*x2) + x1^2 - exp(-x2)*cos(x1)")
    (j1, j2) = jet_variables(np.array([a, b]), 0)
    assert ex.evaluate(e, {"x1": j1, "x2": j2}).value == pytest.approx(ex.evaluate(e, {"x1": a, "x2": b}))
