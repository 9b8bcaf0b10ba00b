import numpy as np
import pytest

from polystress.errors import ConfigError
from polystress.flow import FourierMap, gradient_flow, stable_step
from polystress.geometry import DomainChart, TargetGeometry, flat_torus
from polystress.polyharmonic import energy, evaluate_tension
from polystress.pullback import SmoothMap
from polystress.quadrature import QuadratureGrid

T1, T2 = flat_torus(1), flat_torus(2)
R1 = TargetGeometry.catalog("euclidean", 1)
S2 = TargetGeometry.catalog("sphere_stereographic", 2)


def test_fit_reproduces_a_trigonometric_polynomial():
    grid = QuadratureGrid(T2, 12)
    phi = SmoothMap.from_strings(["0.3*sin(x1 - 2*x2) + 0.1", "0.2*cos(x2) + 0.05*sin(3*x1)"], T2, S2)
    fm = FourierMap.from_map(phi, grid, 3)
    x = np.array([[0.37, 2.2], [5.1, 4.4]])
    for a, b in zip(fm.jets(x, 4), phi.jets(x, 4)):
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)


def test_winding_is_kept_in_the_linear_part():
    grid = QuadratureGrid(T1, 8)
    phi = SmoothMap.from_strings(["2*x1 + 0.5*sin(x1)"], T1, R1)
    fm = FourierMap.from_map(phi, grid, 2)
    np.testing.assert_allclose(fm.slope, [[2.0]])
    x = np.array([[1.3], [7.0]])
    np.testing.assert_allclose(fm.values(x), phi.values(x), atol=1e-14)
    np.testing.assert_allclose(fm.jets(x, 2)[0].partial((1,)), 2 + 0.5 * np.cos(x[:, 0]), atol=1e-14)


def test_fit_needs_enough_nodes():
    grid = QuadratureGrid(T1, 4)
    phi = SmoothMap.from_strings(["sin(x1)"], T1, R1)
    with pytest.raises(ConfigError):
        FourierMap.from_map(phi, grid, 2)


def test_non_periodic_domain_is_rejected():
    chart = DomainChart.from_strings([["1"]], [(0, 1)], [False])
    with pytest.raises(ConfigError):
        FourierMap(chart, R1, np.zeros((1, 1)), np.zeros((1, 3), complex), 1)


@pytest.mark.parametrize("k, modes, expected", [(1, 2, 0.25), (2, 4, 1 / 256), (3, 1, 1.0)])
def test_stable_step(k, modes, expected):
    assert stable_step(k, modes, QuadratureGrid(T1, 16)) == pytest.approx(expected)


def test_fourier_map_works_with_the_geometry_stack():
    grid = QuadratureGrid(T1, 16)
    smooth = SmoothMap.from_strings(["0.4*sin(x1)", "0.3*cos(x1)"], T1, S2)
    fm = FourierMap.from_map(smooth, grid, 4)
    x = grid.points[:5]
    np.testing.assert_allclose(evaluate_tension(fm, x, 3), evaluate_tension(smooth, x, 3), atol=1e-12)
    assert energy(fm, 2, grid) == pytest.approx(energy(smooth, 2, grid), rel=1e-12)


def test_dirichlet_flow_of_the_sine_converges():
    grid = QuadratureGrid(T1, 8)
    phi = FourierMap.from_map(SmoothMap.from_strings(["sin(x1)"], T1, R1), grid, 2)
    result = gradient_flow(phi, 1, grid)
    assert result.status == "converged"
    assert result.monotone
    assert result.final_tension <= 1e-6
    assert result.steps[0].eta == 0.25
    np.testing.assert_allclose([s.conservation for s in result.steps], 0, atol=1e-14)


def test_harmonic_start_takes_no_steps():
    grid = QuadratureGrid(T1, 8)
    phi = FourierMap.from_map(SmoothMap.from_strings(["x1"], T1, R1), grid, 2)
    result = gradient_flow(phi, 2, grid)
    assert result.status == "converged" and result.steps == []


def test_biharmonic_flow_into_the_sphere_decreases_energy():
    grid = QuadratureGrid(T1, 16)
    phi = FourierMap.from_map(SmoothMap.from_strings(["0.4*sin(x1)", "0.3*cos(x1)"], T1, S2), grid, 3)
    result = gradient_flow(phi, 2, grid, max_steps=30, track_conservation=False)
    assert result.status == "budget"
    assert result.monotone
    assert result.energies[-1] < energy(phi, 2, grid)
    assert np.isnan(result.steps[0].conservation)


def test_flow_arguments_are_validated():
    grid = QuadratureGrid(T1, 8)
    phi = FourierMap.from_map(SmoothMap.from_strings(["sin(x1)"], T1, R1), grid, 2)
    with pytest.raises(ConfigError):
        gradient_flow(phi, 1, grid, eta=0.0)
    with pytest.raises(ConfigError):
        gradient_flow(phi, 6, grid)
