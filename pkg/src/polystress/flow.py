"""A discrete L2 gradient flow for the polyharmonic energies.

During the flow a map is held as a linear part plus a truncated Fourier series
per component, so jets are exact derivatives of a trigonometric polynomial.
Each step moves along ``+tau_k`` or ``-tau_k``, whichever lowers ``E_k``
(the sign that worked last is tried first), halving the step until the
energy decreases.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import DomainChart, TargetGeometry
from .jets import Jet, _factorials, multi_indices
from .polyharmonic import OrderSpec, energy, evaluate_tension
from .quadrature import QuadratureGrid
from .stress import conservation_check


@dataclass(frozen=True)
class FourierMap:
    """``phi(x) = offset + slope (x - lo) + sum_kappa c_kappa exp(i omega_kappa (x - lo))``."""

    domain: DomainChart
    target: TargetGeometry
    slope: np.ndarray  # (n, m)
    coeffs: np.ndarray  # (n, (2K+1)^m) complex
    modes: int

    def __post_init__(self):
        if not self.domain.fully_periodic:
            raise ConfigError("the flow needs a fully periodic domain")

    @property
    def n(self) -> int:
        return self.target.dim

    @property
    def m(self) -> int:
        return self.domain.dim

    @property
    def _lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.domain.box])

    @property
    def _lengths(self) -> np.ndarray:
        return np.array([b[1] - b[0] for b in self.domain.box])

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular frequencies of the retained modes, shape (nmodes, m)."""
        ks = np.array(list(itertools.product(range(-self.modes, self.modes + 1), repeat=self.m)), dtype=float)
        return ks * (2 * np.pi / self._lengths)

    # -- construction ----------------------------------------------------------

    @classmethod
    def fit(cls, values, grid: QuadratureGrid, target: TargetGeometry, slope, modes: int) -> FourierMap:
        """Trigonometric interpolant of nodal values (n, N^m) minus the linear part."""
        N, m = grid.nodes, grid.dim
        if 2 * modes + 1 > N:
            raise ConfigError(f"{modes} Fourier modes need at least {2 * modes + 1} nodes per dimension")
        slope = np.asarray(slope, dtype=float).reshape(target.dim, m)
        lo = np.array([b[0] for b in grid.chart.box])
        linear = slope @ (grid.points - lo).T  # (n, P)
        resid = np.asarray(values, dtype=float) - linear
        idx = np.array(list(itertools.product(range(-modes, modes + 1), repeat=m)))
        coeffs = []
        for a in range(target.dim):
            spec = np.fft.fftn(resid[a].reshape((N,) * m)) / N**m
            coeffs.append(spec[tuple((idx % N).T)])
        return cls(grid.chart, target, slope, np.array(coeffs), modes)

    @classmethod
    def from_map(cls, phi, grid: QuadratureGrid, modes: int) -> FourierMap:
        """Sample a :class:`SmoothMap`, reading its winding from one period shift."""
        lo = np.array([b[0] for b in grid.chart.box])
        L = np.array([b[1] - b[0] for b in grid.chart.box])
        base = phi.values(lo)
        slope = np.stack([(phi.values(lo + L * np.eye(grid.dim)[j]) - base) / L[j] for j in range(grid.dim)],
                         axis=-1)
        return cls.fit(phi.values(grid.points).T, grid, phi.target, slope, modes)

    def updated(self, delta, grid: QuadratureGrid) -> FourierMap:
        """The map plus nodal increments ``delta`` (n, N^m), refit to the retained modes."""
        return FourierMap.fit(self.values(grid.points).T + delta, grid, self.target, self.slope, self.modes)

    # -- evaluation --------------------------------------------------------------

    def jets(self, x, order: int) -> list[Jet]:
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        pts = x.reshape(-1, self.m) - self._lo
        mi = multi_indices(self.m, order)
        w = self.wavenumbers
        phase = np.exp(1j * pts @ w.T)  # (P, nmodes)
        factor = np.prod((1j * w[None, :, :]) ** mi[:, None, :], axis=-1)  # (ncoef, nmodes)
        fact = _factorials(self.m, order)[:, None]
        out = []
        for a in range(self.n):
            c = np.real((factor * self.coeffs[a][None, :]) @ phase.T) / fact
            c[0] += pts @ self.slope[a]
            if order >= 1:
                c[1:self.m + 1] += self.slope[a][:, None]
            out.append(Jet(c.reshape((len(mi),) + batch), self.m, order))
        return out

    def values(self, x) -> np.ndarray:
        return np.stack([j.coeffs[0] for j in self.jets(x, 0)], axis=-1)


# --------------------------------------------------------------------------
# the flow


@dataclass(frozen=True)
class FlowStep:
    step: int
    energy: float
    max_tension: float
    eta: float
    sign: int
    conservation: float


@dataclass
class FlowResult:
    steps: list[FlowStep] = field(default_factory=list)
    status: str = "running"  # converged | stagnated | budget
    final: FourierMap | None = None
    final_tension: float = float("nan")

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.steps])

    @property
    def monotone(self) -> bool:
        e = self.energies
        return bool(np.all(np.diff(e) <= 0))


def stable_step(k: int, modes: int, grid: QuadratureGrid) -> float:
    """Explicit stability bound ``1 / omega_max^(2k)`` of the linearized flow."""
    w = modes * 2 * np.pi / min(hi - lo for lo, hi in grid.chart.box)
    return 1.0 / max(w, 1.0) ** (2 * k)


def gradient_flow(phi0: FourierMap, k: int, grid: QuadratureGrid, eta: float = 1.0, max_steps: int = 10_000,
                  tol: float = 1e-6, min_eta: float = 1e-14, track_conservation: bool = True) -> FlowResult:
    """Run the energy-decreasing flow until ``max |tau_k| <= tol``."""
    OrderSpec(k)
    if eta <= 0 or max_steps < 0 or tol <= 0:
        raise ConfigError("flow needs eta > 0, max_steps >= 0 and tol > 0")
    eta = min(eta, stable_step(k, phi0.modes, grid))
    pts = grid.points
    phi = phi0
    e_cur = energy(phi, k, grid)
    result = FlowResult()
    preferred = 1

    def conservation(f):
        if not track_conservation:
            return float("nan")
        return float(np.max(conservation_check(f, pts, k).relative))

    for step in range(max_steps + 1):
        tau = evaluate_tension(phi, pts, k)
        max_tau = float(np.max(np.abs(tau)))
        result.final_tension = max_tau
        if max_tau <= tol:
            result.status = "converged"
            break
        if step == max_steps:
            result.status = "budget"
            break
        h = eta
        accepted = None
        while h >= min_eta and accepted is None:
            for sign in (preferred, -preferred):
                cand = phi.updated(sign * h * tau, grid)
                e_new = energy(cand, k, grid)
                if e_new < e_cur:
                    accepted = (e_new, sign, cand)
                    break
            else:
                h /= 2
        if accepted is None:
            result.status = "stagnated"
            break
        e_cur, sign, phi = accepted
        preferred = sign
        result.steps.append(FlowStep(step + 1, e_cur, max_tau, h, sign, conservation(phi)))
    result.final = phi
    return result
