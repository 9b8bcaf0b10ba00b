"""Stress-energy tensors of the polyharmonic energies and their conservation law.

Stress tensors are assembled as jets so that their covariant divergence can be
taken directly.  Each tensor is kept as a list of summands; the conservation
residual is scaled by the largest summand contribution, since deep towers mix
terms of very different magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, JetOrderError
from .geometry import SymTwoTensor
from .jets import Jet
from .polyharmonic import OrderSpec, tension_terms
from .pullback import Pullback, Section, SmoothMap, TensionTower, required_order


@dataclass
class StressValue:
    """A stress tensor at a batch of points, stored as jets."""

    tensor: SymTwoTensor
    k: int
    point: np.ndarray

    def values(self) -> np.ndarray:
        return self.tensor.values()


# --------------------------------------------------------------------------
# summands


class _Builder:
    def __init__(self, pb: Pullback, tower: TensionTower):
        self.pb = pb
        self.tower = tower
        self.m = pb.m
        self.dphi = pb.dphi_sections()
        self.terms: list[SymTwoTensor] = []

    def ip(self, v: Section | None, w: Section | None) -> Jet | None:
        if v is None or w is None:
            return None
        return self.pb.inner(v, w)

    def ip_grad(self, gv, gw) -> Jet | None:
        if gv is None or gw is None:
            return None
        return self.pb.inner_grad(gv, gw)

    def scalar(self, coeff: float, a: Jet | None) -> None:
        """Add ``coeff * a * g``."""
        if a is None:
            return
        g = self.pb.g
        self.terms.append(SymTwoTensor.from_function(self.m, lambda i, j: coeff * a * g[i][j]))

    def cross(self, coeff: float, gv, gw) -> None:
        """Add ``coeff * (<gv_i, gw_j> + <gv_j, gw_i>)``."""
        if gv is None or gw is None:
            return

        def entry(i, j):
            e = self.pb.inner(gv[i], gw[j])
            if i != j or gv is not gw:
                e = e + self.pb.inner(gv[j], gw[i])
            else:
                e = 2.0 * e
            return coeff * e

        self.terms.append(SymTwoTensor.from_function(self.m, entry))

    def single(self, coeff: float, gv, gw) -> None:
        """Add ``coeff * <gv_i, gw_j>`` (``gv is gw`` keeps it symmetric)."""
        self.terms.append(SymTwoTensor.from_function(self.m, lambda i, j: coeff * self.pb.inner(gv[i], gw[j])))


def _tower_pair(tower: TensionTower):
    return tower.t, tower.g


def stress_terms_even(pb: Pullback, tower: TensionTower, s: int) -> list[SymTwoTensor]:
    T, G = _tower_pair(tower)
    b = _Builder(pb, tower)
    b.scalar(0.5, b.ip(T(s - 1), T(s - 1)))
    b.scalar(-1.0, b.ip(T(0), T(2 * s - 2)))
    b.scalar(-1.0, b.ip_grad(b.dphi, G(2 * s - 2)))
    for l in range(1, s):
        b.scalar(-1.0, b.ip(T(s - l), T(s + l - 2)))
        b.scalar(1.0, b.ip_grad(G(s - l - 1), G(s + l - 2)))
        b.cross(-1.0, G(s - l - 1), G(s + l - 2))
    b.cross(1.0, b.dphi, G(2 * s - 2))
    return b.terms


def stress_terms_odd(pb: Pullback, tower: TensionTower, s: int) -> list[SymTwoTensor]:
    T, G = _tower_pair(tower)
    b = _Builder(pb, tower)
    b.scalar(0.5, b.ip_grad(G(s - 1), G(s - 1)))
    b.scalar(-1.0, b.ip(T(0), T(2 * s - 1)))
    b.scalar(-1.0, b.ip_grad(b.dphi, G(2 * s - 1)))
    for l in range(1, s):
        b.scalar(-1.0, b.ip(T(s - l), T(s + l - 1)))
        b.scalar(1.0, b.ip_grad(G(s - l - 1), G(s + l - 1)))
        b.cross(-1.0, G(s - l - 1), G(s + l - 1))
    b.cross(1.0, b.dphi, G(2 * s - 1))
    b.single(-1.0, G(s - 1), G(s - 1))
    return b.terms


def stress_terms_dirichlet(pb: Pullback) -> list[SymTwoTensor]:
    """``|d phi|^2 g / 2 - phi^* h``: the stress tensor of ``E_1 = int |d phi|^2``."""
    b = _Builder(pb, None)
    b.scalar(0.5, b.ip_grad(b.dphi, b.dphi))
    b.single(-1.0, b.dphi, b.dphi)
    return b.terms


def stress_terms(pb: Pullback, tower: TensionTower | None, k: int) -> list[SymTwoTensor]:
    spec = OrderSpec(k)
    if k == 1:
        return stress_terms_dirichlet(pb)
    if spec.even:
        return stress_terms_even(pb, tower, spec.s)
    return stress_terms_odd(pb, tower, spec.s)


def _total(terms: list[SymTwoTensor]) -> SymTwoTensor:
    if not terms:
        raise ValueError("empty stress tensor")
    dim = terms[0].dim
    return SymTwoTensor.from_function(dim, lambda i, j: sum((t[i, j] for t in terms[1:]), terms[0][i, j]))


def _need_depth(tower: TensionTower, k: int) -> None:
    if k == 1:
        return
    if len(tower.G) - 1 < k - 2:
        raise JetOrderError(f"stress of order {k} needs nabla Delta^{k - 2} tau; tower depth is {tower.depth}")


def stress_even(tower: TensionTower, pb: Pullback, s: int) -> StressValue:
    if s < 1:
        raise ConfigError("even order needs s >= 1")
    _need_depth(tower, 2 * s)
    return StressValue(_total(stress_terms_even(pb, tower, s)), 2 * s, pb.x)


def stress_odd(tower: TensionTower, pb: Pullback, s: int) -> StressValue:
    if s < 1:
        raise ConfigError("odd order needs s >= 1 (k = 1 is the Dirichlet stress)")
    _need_depth(tower, 2 * s + 1)
    return StressValue(_total(stress_terms_odd(pb, tower, s)), 2 * s + 1, pb.x)


def stress_k(tower: TensionTower | None, pb: Pullback, k: int) -> StressValue:
    if k == 1:
        return StressValue(_total(stress_terms_dirichlet(pb)), 1, pb.x)
    spec = OrderSpec(k)
    return stress_even(tower, pb, spec.s) if spec.even else stress_odd(tower, pb, spec.s)


def stress_triharmonic(tower: TensionTower, pb: Pullback) -> np.ndarray:
    """S_3 coded directly from its own definition; values of shape (m, m, *batch)."""
    _need_depth(tower, 3)
    t0 = tower.t_values(0, pb.n, pb.batch_shape)
    t1 = tower.t_values(1, pb.n, pb.batch_shape)
    g0 = tower.g_values(0, pb.n, pb.m, pb.batch_shape)
    g1 = tower.g_values(1, pb.n, pb.m, pb.batch_shape)
    h, g, ginv, d = (pb.value(name) for name in ("h", "g", "ginv", "dphi"))
    ip = lambda v, w: np.einsum("ab...,ai...,bj...->ij...", h, v, w)  # noqa: E731
    grad_norm = np.einsum("ij...,ij...->...", ginv, ip(g0, g0))
    d_g1 = np.einsum("ij...,ij...->...", ginv, ip(d, g1))
    t_t1 = np.einsum("ab...,a...,b...->...", h, t0, t1)
    cross = ip(d, g1)
    return (
        g * (0.5 * grad_norm - t_t1 - d_g1)
        - ip(g0, g0)
        + cross
        + np.swapaxes(cross, 0, 1)
    )


def stress_field(phi: SmoothMap, x, k: int, metric=None) -> StressValue:
    """S_k at points ``x``."""
    order = max(required_order(k, "stress"), 1)
    pb = Pullback(phi, x, order, metric)
    tower = None if k == 1 else pb.tower(k - 2, last_gradient=True)
    return stress_k(tower, pb, k)


# --------------------------------------------------------------------------
# traces


def trace_closed_form(tower: TensionTower | None, pb: Pullback, k: int) -> np.ndarray:
    """Trace of S_k from the closed-form expression (no stress tensor is built)."""
    spec = OrderSpec(k)
    m, n, batch = pb.m, pb.n, pb.batch_shape
    h, ginv, d = pb.value("h"), pb.value("ginv"), pb.value("dphi")

    def ip(v, w):
        return np.einsum("ab...,a...,b...->...", h, v, w)

    def ipg(v, w):
        return np.einsum("ab...,ai...,bj...,ij...->...", h, v, w, ginv)

    if k == 1:
        return (m / 2 - 1) * ipg(d, d)
    _need_depth(tower, k)
    s = spec.s

    def T(j):
        return tower.t_values(j, n, batch)

    def G(j):
        return tower.g_values(j, n, m, batch)

    if spec.even:
        out = m / 2 * ip(T(s - 1), T(s - 1)) + (2 - m) * ipg(d, G(2 * s - 2)) - m * ip(T(0), T(2 * s - 2))
        for l in range(1, s):
            out = out - m * ip(T(s - l), T(s + l - 2)) + (m - 2) * ipg(G(s - l - 1), G(s + l - 2))
        return out
    out = (m / 2 - 1) * ipg(G(s - 1), G(s - 1)) + (2 - m) * ipg(d, G(2 * s - 1)) - m * ip(T(0), T(2 * s - 1))
    for l in range(1, s):
        out = out - m * ip(T(s - l), T(s + l - 1)) + (m - 2) * ipg(G(s - l - 1), G(s + l - 1))
    return out


def trace_contracted(stress: StressValue, pb: Pullback) -> np.ndarray:
    """``g^{ij} S_ij`` from the assembled tensor."""
    return np.einsum("ij...,ij...->...", pb.value("ginv"), stress.values())


def trace_scale(tower: TensionTower | None, pb: Pullback, k: int) -> np.ndarray:
    """Largest absolute summand in the contracted trace."""
    ginv = pb.value("ginv")
    mags = [np.abs(np.einsum("ij...,ij...->...", ginv, t.values())) for t in stress_terms(pb, tower, k)]
    return np.max(mags, axis=0)


def integrated_trace_factor(m: int, k: int) -> float:
    """``int tr S_k dV = factor * E_k`` on closed manifolds."""
    return m / 2 - k


# --------------------------------------------------------------------------
# divergence and conservation


def _divergence_parts(S: SymTwoTensor, pb: Pullback) -> list[np.ndarray]:
    """Individual summands of ``(div S)_i``, each of shape (m, *batch)."""
    m = pb.m
    ginv = pb.value("ginv")
    gamma = pb.gamma
    batch = pb.batch_shape
    parts = []
    first = np.zeros((m,) + batch)
    conn = np.zeros((m,) + batch)
    for i in range(m):
        for j in range(m):
            for k in range(m):
                gjk = ginv[j, k]
                if not np.any(gjk):
                    continue
                sij = S[i, j]
                if not isinstance(sij, Jet) or sij.order < 1:
                    raise JetOrderError("divergence needs stress jets of order >= 1")
                first[i] += gjk * sij.derivative(k).coeffs[0]
                for l in range(m):
                    if gamma[l][k][i] is not None:
                        conn[i] -= gjk * gamma[l][k][i].coeffs[0] * S[l, j].coeffs[0]
                    if gamma[l][k][j] is not None:
                        conn[i] -= gjk * gamma[l][k][j].coeffs[0] * S[i, l].coeffs[0]
    parts.append(first)
    parts.append(conn)
    return parts


def divergence(S: SymTwoTensor | StressValue, pb: Pullback) -> np.ndarray:
    """``(div S)_i = g^{jk} (d_k S_ij - Gamma^l_{ki} S_lj - Gamma^l_{kj} S_il)``."""
    if isinstance(S, StressValue):
        S = S.tensor
    return sum(_divergence_parts(S, pb))


@dataclass
class ConservationResult:
    residual: np.ndarray  # (m, *batch)
    scale: np.ndarray  # (*batch)
    divergence: np.ndarray
    tension_pairing: np.ndarray

    @property
    def relative(self) -> np.ndarray:
        r = np.max(np.abs(self.residual), axis=0)
        return np.where(self.scale > 0, r / np.where(self.scale > 0, self.scale, 1.0), r)


def conservation_check(phi: SmoothMap, x, k: int, metric=None) -> ConservationResult:
    """Both sides of ``div S_k = -<tau_k, d phi>`` with a termwise scale."""
    OrderSpec(k)
    pb = Pullback(phi, x, required_order(k, "conservation"), metric)
    tower = pb.tower(k - 1)
    h, d = pb.value("h"), pb.value("dphi")

    div_parts = []
    for term in stress_terms(pb, tower, k):
        div_parts.extend(_divergence_parts(term, pb))
    div = sum(div_parts)

    pair_parts = [np.einsum("ab...,a...,bi...->i...", h, t, d) for t in tension_terms(tower, pb, k)]
    pairing = sum(pair_parts)

    mags = [np.max(np.abs(p), axis=0) for p in div_parts + pair_parts]
    scale = np.max(mags, axis=0)
    return ConservationResult(div + pairing, scale, div, pairing)


def conservation_residual(phi: SmoothMap, x, k: int, metric=None) -> tuple[np.ndarray, np.ndarray]:
    """``(div S_k + <tau_k, d phi>, scale)`` at points ``x``."""
    r = conservation_check(phi, x, k, metric)
    return r.residual, r.scale
