import numpy as np
import pytest

from polystress import jets
from polystress.errors import ChartError, ConfigError, JetOrderError
from polystress.exprlang import parse
from polystress.geometry import TargetGeometry, flat_space, flat_torus
from polystress.pullback import (
    Pullback,
    SmoothMap,
    required_order,
    second_fundamental_form,
    section_from_exprs,
    section_values,
    tension,
    tension_tower,
)

LINE = flat_space(1)
R1 = TargetGeometry.catalog("euclidean", 1)
S2 = TargetGeometry.catalog("sphere_stereographic", 2)


def line_map(expr):
    return SmoothMap.from_strings([expr], LINE, R1)


def test_quartic_tower():
    """phi = x^4: tau = 12 x^2, Delta tau = -24, Delta^2 tau = 0."""
    x = np.array([[0.0], [0.5], [-1.5]])
    tower = tension_tower(line_map("x1^4"), x, 2)
    np.testing.assert_allclose(tower.t_values(0, 1, (3,))[0], 12 * x[:, 0] ** 2)
    np.testing.assert_allclose(tower.t_values(1, 1, (3,))[0], -24.0)
    np.testing.assert_allclose(tower.t_values(2, 1, (3,))[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(tower.g_values(0, 1, 1, (3,))[0, 0], 24 * x[:, 0])


@pytest.mark.parametrize("depth", [0, 1, 2, 3])
def test_sine_is_an_eigenvector_of_the_rough_laplacian(depth):
    x = np.linspace(0, 2 * np.pi, 9)[:, None]
    tower = tension_tower(line_map("sin(x1)"), x, depth)
    for j in range(depth + 1):
        np.testing.assert_allclose(tower.t_values(j, 1, (9,))[0], -np.sin(x[:, 0]), atol=1e-13)


def test_tower_index_and_order_errors():
    pb = Pullback(line_map("sin(x1)"), [[0.2]], 4)
    with pytest.raises(JetOrderError):
        pb.tower(2)
    tower = pb.tower(1)
    assert tower.t(-1) is None and tower.g(-1) is None
    with pytest.raises(JetOrderError):
        tower.t(2)
    with pytest.raises(JetOrderError):
        tower.g(1)
    with pytest.raises(JetOrderError):
        Pullback(line_map("x1"), [[0.0]], 0)
    with pytest.raises(JetOrderError):
        Pullback(line_map("x1"), [[0.0]], 1).tension()


def test_last_gradient_costs_one_order():
    pb = Pullback(line_map("sin(x1)"), [[0.2]], 5)
    tower = pb.tower(1, last_gradient=True)
    assert len(tower.G) == 2
    with pytest.raises(JetOrderError):
        Pullback(line_map("sin(x1)"), [[0.2]], 4).tower(1, last_gradient=True)


@pytest.mark.parametrize("k, purpose, expected", [
    (1, "energy", 1), (3, "energy", 3), (3, "stress", 5), (4, "stress", 7),
    (2, "tension", 4), (5, "tension", 10), (5, "divergence", 10),
])
def test_required_order(k, purpose, expected):
    assert required_order(k, purpose) == expected


def test_required_order_rejects():
    with pytest.raises(ConfigError):
        required_order(0, "energy")
    with pytest.raises(ValueError):
        required_order(2, "everything")


def test_second_fundamental_form_is_symmetric():
    phi = SmoothMap.from_strings(["0.3*sin(x1)*cos(x2)", "0.2*cos(x1 + 2*x2)"], flat_torus(2), S2)
    sff = second_fundamental_form(phi, np.array([[0.3, 1.1], [2.0, -0.4]]))
    assert sff.shape == (2, 2, 2, 2)
    np.testing.assert_allclose(sff, np.swapaxes(sff, 1, 2), atol=1e-15)


def stereo_inverse(y):
    r2 = y[0] * y[0] + y[1] * y[1]
    d = 1 + r2
    return [2 * y[0] / d, 2 * y[1] / d, (r2 - 1) / d]


def test_tension_into_the_sphere_matches_the_embedded_formula():
    """In R^3 the tension of a curve on the unit sphere is X'' + |X'|^2 X."""
    phi = SmoothMap.from_strings(["0.5*cos(x1)", "0.3*sin(2*x1)"], LINE, S2)
    t = np.array([0.1, 0.9, 2.3, 4.0])
    chart_tau = tension(phi, t[:, None])

    (x,) = jets.jet_variables(t[:, None], 2)
    X = stereo_inverse([0.5 * jets.cos(x), 0.3 * jets.sin(2 * x)])
    dX = np.array([c.partial((1,)) for c in X])
    ddX = np.array([c.partial((2,)) for c in X])
    Xv = np.array([c.value for c in X])
    amb = ddX + np.sum(dX**2, axis=0) * Xv
    # push forward through the stereographic projection X -> X[:2] / (1 - X[2])
    den = 1 - Xv[2]
    expected = amb[:2] / den + Xv[:2] * amb[2] / den**2
    np.testing.assert_allclose(chart_tau, expected, rtol=1e-12, atol=1e-13)


def test_harmonic_maps_have_zero_tension():
    eq = SmoothMap.from_strings(["cos(x1)", "sin(x1)"], flat_torus(1), S2)
    np.testing.assert_allclose(tension(eq, np.linspace(0, 6, 7)[:, None]), 0, atol=1e-14)
    ident = SmoothMap.from_strings(["0.2*x1", "0.2*x2"], flat_torus(2), TargetGeometry.catalog("hyperbolic_ball", 2))
    np.testing.assert_allclose(tension(ident, [[0.0, 0.0]]), 0, atol=1e-15)


def test_laplacian_of_a_section_on_a_flat_target():
    phi = SmoothMap.from_strings(["x1", "x2"], flat_torus(2), TargetGeometry.catalog("euclidean", 2))
    x = np.array([[0.4, 1.7]])
    pb = Pullback(phi, x, 3)
    v = section_from_exprs([parse("sin(x1)*cos(3*x2)", ("x1", "x2"))] * 2, x, 3)
    lap = section_values(pb.laplacian(v))
    np.testing.assert_allclose(lap, 10 * np.sin(0.4) * np.cos(3 * 1.7) * np.ones((2, 1)), rtol=1e-13)


def test_inner_products_use_the_target_metric():
    phi = SmoothMap.from_strings(["0.5", "0"], LINE, S2)
    pb = Pullback(phi, [[0.0]], 1)
    (d,) = pb.dphi_sections()
    e1 = [jets.jet_constant(np.ones(1), 1, 1), jets.jet_constant(np.zeros(1), 1, 1)]
    # h = 4 / (1 + 0.25)^2 delta at y = (0.5, 0)
    np.testing.assert_allclose(pb.inner(e1, e1).value, 4 / 1.25**2)
    np.testing.assert_allclose(pb.inner(d, d).value, 0.0)


def test_map_leaving_the_hyperbolic_chart_raises():
    phi = SmoothMap.from_strings(["1.2*cos(x1)", "0"], flat_torus(1), TargetGeometry.catalog("hyperbolic_ball", 2))
    with pytest.raises(ChartError):
        Pullback(phi, [[0.0]], 2)


def test_component_count_is_checked():
    with pytest.raises(ConfigError):
        SmoothMap.from_strings(["x1"], LINE, S2)
    with pytest.raises(ConfigError):
        SmoothMap.from_strings(["x2", "x1"], LINE, S2)


def test_precomposition():
    phi = line_map("x1^2")
    psi = phi.precompose([parse("x1 + 1", ("x1",))])
    np.testing.assert_allclose(psi.values(np.array([[2.0]])), [[9.0]])
    with pytest.raises(ConfigError):
        psi.precompose([parse("x1", ("x1",))])
