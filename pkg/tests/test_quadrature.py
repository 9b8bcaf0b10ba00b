import numpy as np
import pytest

from polystress.errors import ConfigError
from polystress.geometry import DomainChart, flat_space, flat_torus
from polystress.quadrature import QuadratureGrid, fsum


def test_sine_squared_integral():
    grid = QuadratureGrid(flat_torus(1), 16)
    vals = np.sin(grid.points[:, 0]) ** 2
    assert grid.integrate(vals) == pytest.approx(np.pi, abs=1e-12)


@pytest.mark.parametrize("m, nodes", [(1, 5), (2, 7), (3, 4)])
def test_weights_sum_to_box_volume(m, nodes):
    grid = QuadratureGrid(flat_torus(m), nodes)
    assert grid.points.shape == (nodes**m, m)
    assert fsum(grid.weights) == pytest.approx((2 * np.pi) ** m, rel=1e-14)


def test_point_ordering_first_coordinate_slowest():
    grid = QuadratureGrid(flat_torus(2), 3)
    np.testing.assert_allclose(grid.points[:3, 0], 0.0)
    np.testing.assert_allclose(grid.points[:3, 1], grid.axes[1])


def test_riemannian_volume():
    chart = DomainChart.from_strings([["exp(2*cos(x1))", "0"], ["0", "1"]], [(0, 2 * np.pi), (0, 1)], [True, True])
    grid = QuadratureGrid(chart, 32)
    np.testing.assert_allclose(grid.volume_density(), np.exp(np.cos(grid.points[:, 0])), rtol=1e-14)
    # integral of e^{cos x} over a period is 2 pi I_0(1)
    assert grid.integrate(np.ones(len(grid.points))) == pytest.approx(2 * np.pi * np.i0(1.0), rel=1e-14)
    assert grid.integrate(np.ones(len(grid.points)), with_volume=False) == pytest.approx(2 * np.pi)


def test_non_periodic_charts_are_rejected():
    with pytest.raises(ConfigError):
        QuadratureGrid(flat_space(1))
    with pytest.raises(ConfigError):
        QuadratureGrid(flat_torus(1), 1)


def test_chunks_cover_all_points():
    grid = QuadratureGrid(flat_torus(2), 10)
    got = np.concatenate([p for _, p in grid.chunks(33)])
    np.testing.assert_array_equal(got, grid.points)


def test_fsum_is_order_independent():
    vals = [1e16, 1.0, -1e16]
    assert fsum(vals) == 1.0
