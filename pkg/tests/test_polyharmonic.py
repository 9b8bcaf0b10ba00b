import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polystress.errors import ConfigError, JetOrderError
from polystress.geometry import TargetGeometry, flat_torus
from polystress.polyharmonic import (
    MAX_K,
    OrderSpec,
    bitension_alt_sign,
    energy,
    evaluate_tension,
    tension_even,
    tension_k,
    tension_terms,
    triharmonic_operator,
)
from polystress.pullback import Pullback, SmoothMap
from polystress.quadrature import QuadratureGrid

T1, T2 = flat_torus(1), flat_torus(2)
R1 = TargetGeometry.catalog("euclidean", 1)
R2 = TargetGeometry.catalog("euclidean", 2)
S2 = TargetGeometry.catalog("sphere_stereographic", 2)
H2 = TargetGeometry.catalog("hyperbolic_ball", 2)
GRID1 = QuadratureGrid(T1, 32)
GRID2 = QuadratureGrid(T2, 24)
KS = range(1, MAX_K + 1)

CURVED_MAP_STRINGS = ["0.3*sin(x1) + 0.2*cos(x2)", "0.25*cos(x1 + x2) - 0.1*sin(x2)"]
CURVED_MAP = SmoothMap.from_strings(CURVED_MAP_STRINGS, T2, S2)


@pytest.mark.parametrize("k", KS)
def test_sine_closed_forms(k):
    phi = SmoothMap.from_strings(["sin(x1)"], T1, R1)
    x = np.linspace(0, 2 * np.pi, 11)[:, None]
    np.testing.assert_allclose(evaluate_tension(phi, x, k)[0], -np.sin(x[:, 0]), atol=1e-13)
    assert energy(phi, k, GRID1) == pytest.approx(np.pi, rel=1e-13)


@pytest.mark.parametrize("winding", [1, 2, 3])
def test_circle_map_energies(winding):
    phi = SmoothMap.from_strings([f"{winding}*x1"], T1, R1)
    assert energy(phi, 1, GRID1) == pytest.approx(2 * np.pi * winding**2, rel=1e-14)
    assert energy(phi, 2, GRID1) == 0.0
    assert energy(phi, 3, GRID1) == 0.0


@pytest.mark.parametrize("k", KS)
def test_flat_target_reduces_to_iterated_laplacian(k):
    """sin(x1) cos(2 x2) is a Delta-eigenfunction with eigenvalue 5, so tau_k = -5^k phi."""
    phi = SmoothMap.from_strings(["sin(x1)*cos(2*x2)", "0.5*cos(x1)"], T2, R2)
    x = np.array([[0.3, 0.7], [2.1, -1.0], [4.4, 3.3]])
    tau = evaluate_tension(phi, x, k)
    np.testing.assert_allclose(tau[0], -(5.0**k) * np.sin(x[:, 0]) * np.cos(2 * x[:, 1]), rtol=1e-11)
    np.testing.assert_allclose(tau[1], -0.5 * np.cos(x[:, 0]), rtol=1e-11)


@pytest.mark.parametrize("k", KS)
def test_equator_is_polyharmonic(k):
    phi = SmoothMap.from_strings(["cos(x1)", "sin(x1)"], T1, S2)
    tau = evaluate_tension(phi, np.linspace(0, 6, 13)[:, None], k)
    np.testing.assert_allclose(tau, 0, atol=1e-13)
    e = energy(phi, k, GRID1)
    assert e == pytest.approx(2 * np.pi if k == 1 else 0.0, abs=1e-20)


@pytest.mark.parametrize("target", [S2, H2])
def test_triharmonic_operator_cross_check(target):
    phi = SmoothMap.from_strings(CURVED_MAP_STRINGS, T2, target)
    pb = Pullback(phi, np.array([[0.4, 1.3], [2.5, 5.0]]), 6)
    tower = pb.tower(2)
    np.testing.assert_allclose(triharmonic_operator(tower, pb), tension_k(tower, pb, 3), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("target", [S2, H2])
def test_bitension_sign_convention(target):
    """The biharmonic equation written as Delta tau + tr R(dphi, tau) dphi is minus tau_2."""
    phi = SmoothMap.from_strings(CURVED_MAP_STRINGS, T2, target)
    pb = Pullback(phi, np.array([[0.1, 0.2], [3.0, 1.0]]), 4)
    tower = pb.tower(1)
    tau2 = tension_even(tower, pb, 1)
    np.testing.assert_allclose(bitension_alt_sign(tower, pb), -tau2, atol=1e-14)
    assert np.max(np.abs(tau2)) > 1e-2


@pytest.mark.parametrize("k", KS)
def test_terms_sum_to_tension(k):
    pb = Pullback(CURVED_MAP, np.array([[0.5, 0.5]]), 2 * k)
    tower = pb.tower(k - 1)
    np.testing.assert_allclose(sum(tension_terms(tower, pb, k)), tension_k(tower, pb, k), rtol=1e-14, atol=1e-15)


def test_order_spec():
    spec = OrderSpec(5)
    assert (spec.even, spec.s, spec.tower_depth) == (False, 2, 4)
    assert OrderSpec(4).even and OrderSpec(4).s == 2
    for bad in (0, 6, -1):
        with pytest.raises(ConfigError):
            OrderSpec(bad)


def test_shallow_tower_is_rejected():
    pb = Pullback(CURVED_MAP, np.array([[0.5, 0.5]]), 4)
    with pytest.raises(JetOrderError):
        tension_k(pb.tower(1), pb, 3)


def test_energy_grid_dimension_mismatch():
    phi = SmoothMap.from_strings(["sin(x1)"], T1, R1)
    with pytest.raises(ConfigError):
        energy(phi, 1, GRID2)


def test_energy_is_independent_of_chunking():
    a = energy(CURVED_MAP, 3, GRID2, chunk=1024)
    b = energy(CURVED_MAP, 3, GRID2, chunk=37)
    assert a == b


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.integers(1, MAX_K))
def test_energies_are_nonnegative(a, b, k):
    phi = SmoothMap.from_strings([f"{a}*sin(x1) + 0.1*cos(x2)", f"{b}*cos(x1 - x2)"], T2, S2)
    assert energy(phi, k, QuadratureGrid(T2, 8)) >= 0.0


def test_energy_converges_spectrally():
    coarse = energy(CURVED_MAP, 2, QuadratureGrid(T2, 16))
    fine = energy(CURVED_MAP, 2, QuadratureGrid(T2, 32))
    assert abs(coarse - fine) < 1e-8 * abs(fine)


@pytest.mark.parametrize("w", [2, 3])
@pytest.mark.parametrize("k", KS)
def test_faster_equators_up_to_derivative_scaled_rounding(w, k):
    """tau_k of a frequency-w equator reads derivatives of size w^(2k); rounding grows with them."""
    phi = SmoothMap.from_strings([f"cos({w}*x1)", f"sin({w}*x1)"], T1, S2)
    tau = evaluate_tension(phi, np.linspace(0, 6, 25)[:, None], k)
    assert np.max(np.abs(tau)) <= 1e-12 * w ** (2 * k)
