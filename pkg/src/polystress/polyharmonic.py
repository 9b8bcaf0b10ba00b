"""Order-k tension fields and polyharmonic energies.

Orthonormal-frame sums are written as ``g^{ij}`` contractions of coordinate
quantities.  The tension fields are evaluated pointwise from the constant
terms of a :class:`~polystress.pullback.TensionTower`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, JetOrderError
from .pullback import Pullback, SmoothMap, TensionTower, required_order
from .quadrature import QuadratureGrid

MAX_K = 5


@dataclass(frozen=True)
class OrderSpec:
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= MAX_K:
            raise ConfigError(f"polyharmonic order must be in 1..{MAX_K}, got {self.k}")

    @property
    def even(self) -> bool:
        return self.k % 2 == 0

    @property
    def s(self) -> int:
        return self.k // 2

    @property
    def tower_depth(self) -> int:
        """Deepest Laplacian the tension field reads."""
        return self.k - 1


# --------------------------------------------------------------------------
# curvature contractions on values


class _Values:
    """Constant terms of a frame + tower, as numpy arrays."""

    def __init__(self, pb: Pullback, tower: TensionTower):
        self.pb = pb
        self.tower = tower
        self.n, self.m = pb.n, pb.m
        self.batch = pb.batch_shape
        self.R = pb.riemann_values()
        self.dphi = pb.value("dphi")  # (n, m, *batch)
        self.ginv = pb.value("ginv")  # (m, m, *batch)

    def T(self, j: int) -> np.ndarray:
        return self.tower.t_values(j, self.n, self.batch)

    def G(self, j: int) -> np.ndarray:
        return self.tower.g_values(j, self.n, self.m, self.batch)

    def r_dphi(self, a: np.ndarray) -> np.ndarray:
        """``R(a, dphi(e_j)) dphi(e_j)``."""
        return np.einsum("abcd...,c...,di...,bj...,ij...->a...", self.R, a, self.dphi, self.dphi, self.ginv)

    def r_sec_grad(self, a: np.ndarray, gb: np.ndarray) -> np.ndarray:
        """``R(a, nabla_j b) dphi(e_j)``."""
        return np.einsum("abcd...,c...,di...,bj...,ij...->a...", self.R, a, gb, self.dphi, self.ginv)

    def r_grad_sec(self, ga: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``R(nabla_j a, b) dphi(e_j)``."""
        return np.einsum("abcd...,ci...,d...,bj...,ij...->a...", self.R, ga, b, self.dphi, self.ginv)


def tension_terms_even(vals: _Values, s: int) -> list[np.ndarray]:
    terms = [vals.T(2 * s - 1), -vals.r_dphi(vals.T(2 * s - 2))]
    for l in range(1, s):
        terms.append(vals.r_sec_grad(vals.T(s - l - 1), vals.G(s + l - 2)))
        terms.append(-vals.r_grad_sec(vals.G(s - l - 1), vals.T(s + l - 2)))
    return terms


def tension_terms_odd(vals: _Values, s: int) -> list[np.ndarray]:
    terms = [vals.T(2 * s), -vals.r_dphi(vals.T(2 * s - 1))]
    for l in range(1, s):
        terms.append(-vals.r_grad_sec(vals.G(s + l - 1), vals.T(s - l - 1)))
        terms.append(vals.r_sec_grad(vals.T(s + l - 1), vals.G(s - l - 1)))
    terms.append(-vals.r_grad_sec(vals.G(s - 1), vals.T(s - 1)))
    return terms


def _check_depth(tower: TensionTower, need_t: int, need_g: int) -> None:
    if len(tower.T) - 1 < need_t or len(tower.G) - 1 < need_g:
        raise JetOrderError(
            f"tension tower too shallow: need Delta^{need_t} tau and nabla Delta^{need_g} tau, "
            f"have depth {tower.depth}"
        )


def tension_even(tower: TensionTower, pb: Pullback, s: int) -> np.ndarray:
    """tau_{2s} at the frame points, shape (n, *batch)."""
    if s < 1:
        raise ConfigError("even order needs s >= 1")
    _check_depth(tower, 2 * s - 1, 2 * s - 3)
    return sum(tension_terms_even(_Values(pb, tower), s))


def tension_odd(tower: TensionTower, pb: Pullback, s: int) -> np.ndarray:
    """tau_{2s+1} at the frame points, shape (n, *batch)."""
    if s < 0:
        raise ConfigError("odd order needs s >= 0")
    if s == 0:
        _check_depth(tower, 0, -1)
        return tower.t_values(0, pb.n, pb.batch_shape)
    _check_depth(tower, 2 * s, 2 * s - 2)
    return sum(tension_terms_odd(_Values(pb, tower), s))


def tension_terms(tower: TensionTower, pb: Pullback, k: int) -> list[np.ndarray]:
    """Individual summands of tau_k (they add up to the tension field)."""
    spec = OrderSpec(k)
    vals = _Values(pb, tower)
    if k == 1:
        return [vals.T(0)]
    return tension_terms_even(vals, spec.s) if spec.even else tension_terms_odd(vals, spec.s)


def tension_k(tower: TensionTower, pb: Pullback, k: int) -> np.ndarray:
    spec = OrderSpec(k)
    return tension_even(tower, pb, spec.s) if spec.even else tension_odd(tower, pb, spec.s)


def triharmonic_operator(tower: TensionTower, pb: Pullback) -> np.ndarray:
    """``Delta^2 tau - R(Delta tau, dphi(e_i)) dphi(e_i) - R(nabla_i tau, tau) dphi(e_i)``.

    Coded directly from the sixth-order equation; equals tau_3.
    """
    _check_depth(tower, 2, 0)
    n, m, batch = pb.n, pb.m, pb.batch_shape
    # work with the fully lowered curvature and raise the free index at the end
    h = pb.value("h")
    hinv = np.moveaxis(np.linalg.inv(np.moveaxis(h, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    r_low = np.einsum("ea...,abcd...->ebcd...", h, pb.riemann_values())
    d = pb.value("dphi")
    ginv = pb.value("ginv")
    tau = tower.t_values(0, n, batch)
    lap = tower.t_values(1, n, batch)
    grad = tower.g_values(0, n, m, batch)
    frame_pair = np.einsum("di...,bj...,ij...->db...", d, d, ginv)
    first = np.einsum("ebcd...,c...,db...->e...", r_low, lap, frame_pair)
    second = np.einsum("ebcd...,ci...,d...,bj...,ij...->e...", r_low, grad, tau, d, ginv)
    return tower.t_values(2, n, batch) - np.einsum("ae...,e...->a...", hinv, first + second)


def bitension_alt_sign(tower: TensionTower, pb: Pullback) -> np.ndarray:
    """``-Delta tau - tr R(dphi(.), tau) dphi(.)``, the other bitension convention.

    Equals ``-tau_2`` by the antisymmetry of R in its first two slots.
    """
    v = _Values(pb, tower)
    r = np.einsum("abcd...,ci...,d...,bj...,ij...->a...", v.R, v.dphi, v.T(0), v.dphi, v.ginv)
    return -v.T(1) - r


def evaluate_tension(phi: SmoothMap, x, k: int, metric=None) -> np.ndarray:
    """tau_k(phi) at points ``x`` (coordinates on the last axis)."""
    spec = OrderSpec(k)
    pb = Pullback(phi, x, required_order(k, "tension"), metric)
    tower = pb.tower(spec.tower_depth)
    return tension_k(tower, pb, k)


# --------------------------------------------------------------------------
# energies


def energy_density(pb: Pullback, k: int, tower: TensionTower | None = None) -> np.ndarray:
    """Pointwise integrand of E_k (without the volume factor)."""
    spec = OrderSpec(k)
    h = pb.value("h")
    ginv = pb.value("ginv")
    if k == 1:
        d = pb.value("dphi")
        return np.einsum("ab...,ai...,bj...,ij...->...", h, d, d, ginv)
    s = spec.s
    if tower is None:
        tower = pb.tower(s - 1, last_gradient=not spec.even)
    if spec.even:
        t = tower.t_values(s - 1, pb.n, pb.batch_shape)
        return np.einsum("ab...,a...,b...->...", h, t, t)
    gv = tower.g_values(s - 1, pb.n, pb.m, pb.batch_shape)
    return np.einsum("ab...,ai...,bj...,ij...->...", h, gv, gv, ginv)


def energy(phi: SmoothMap, k: int, grid: QuadratureGrid, metric=None, chunk: int = 1024) -> float:
    """E_k by periodic trapezoidal quadrature against the Riemannian volume."""
    OrderSpec(k)
    if grid.chart.dim != phi.domain.dim:
        raise ConfigError("grid and map domain dimensions differ")
    order = max(required_order(k, "energy"), 1)
    dens = np.empty(len(grid.points))
    for sl, pts in grid.chunks(chunk):
        pb = Pullback(phi, pts, order, metric)
        dens[sl] = energy_density(pb, k)
    return grid.integrate(dens, metric)
