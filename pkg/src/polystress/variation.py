"""Variations of the domain metric and diffeomorphism invariance.

Metric families are ``g_t = g + t * omega``.  The analytic first-order
formulas live next to finite-difference oracles in ``t`` so each can be
checked against the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets
from .errors import ChartError, ConfigError, SingularMetricError
from .exprlang import Expr, evaluate, parse
from .geometry import (
    DomainChart,
    ExprMetric,
    MetricField,
    PerturbedMetric,
    check_positive_definite,
    christoffel_from_metric,
    inverse_jets,
    metric_inverse_volume,
)
from .jets import Jet
from .polyharmonic import OrderSpec, energy, evaluate_tension
from .pullback import Pullback, SmoothMap, section_from_exprs, section_values
from .quadrature import QuadratureGrid
from .stress import stress_field

FD_STEP = 1e-3


def richardson_derivative(f, h: float = FD_STEP) -> float | np.ndarray:
    """``f'(0)`` from central differences at ``h`` and ``h/2`` with one Richardson level."""
    d_h = (f(h) - f(-h)) / (2 * h)
    d_h2 = (f(h / 2) - f(-h / 2)) / h
    return (4 * d_h2 - d_h) / 3


def _metric_values(metric: MetricField, x) -> np.ndarray:
    g = metric.jets(x, 0)
    m = len(g)
    return np.array([[g[i][j].coeffs[0] for j in range(m)] for i in range(m)])


# --------------------------------------------------------------------------
# metric variations


@dataclass(frozen=True)
class MetricVariation:
    """The family ``g + t * omega``."""

    base: MetricField
    omega: ExprMetric

    def __post_init__(self):
        if self.base.dim != self.omega.dim:
            raise ConfigError("omega and the metric have different dimensions")

    @classmethod
    def from_strings(cls, base: MetricField, rows) -> MetricVariation:
        return cls(base, ExprMetric.from_strings(rows, "x"))

    def at(self, t: float) -> PerturbedMetric:
        return PerturbedMetric(self.base, self.omega, t)

    def check_stencil(self, points, h: float = FD_STEP) -> None:
        """Raise unless ``g + t omega`` is positive definite for every stencil ``t``."""
        for t in (-h, -h / 2, h / 2, h):
            try:
                check_positive_definite(_metric_values(self.at(t), points))
            except SingularMetricError as exc:
                raise SingularMetricError(f"g + t*omega is not positive definite at t={t:g}: {exc}") from None


def volume_variation(g: MetricField, omega: ExprMetric, x) -> np.ndarray:
    """``1/2 g^{ij} omega_ij sqrt(det g)``: the derivative of the volume density."""
    ginv, vol = metric_inverse_volume(_metric_values(g, x))
    w = _metric_values(omega, x)
    return 0.5 * np.einsum("ij...,ij...->...", ginv, w) * vol


def volume_density(g: MetricField, x) -> np.ndarray:
    return metric_inverse_volume(_metric_values(g, x))[1]


class _OmegaCalculus:
    """Raised omega, its divergence and the gradient of its trace at a frame."""

    def __init__(self, pb: Pullback, omega: ExprMetric):
        m = pb.m
        w = omega.jets(pb.x, 1)
        ginv = [[c.truncate(1) for c in row] for row in pb.ginv]
        up = [[None] * m for _ in range(m)]
        for k in range(m):
            for i in range(m):
                up[k][i] = sum(ginv[k][a] * w[a][b] * ginv[b][i] for a in range(m) for b in range(m))
        tr = sum(ginv[i][j] * w[i][j] for i in range(m) for j in range(m))
        gam = [[[c.coeffs[0] if c is not None else 0.0 for c in row] for row in plane] for plane in pb.gamma]
        up_v = np.array([[c.coeffs[0] for c in row] for row in up])
        div = []
        for k in range(m):
            acc = sum(up[k][i].derivative(i).coeffs[0] for i in range(m))
            for i in range(m):
                for l in range(m):
                    acc = acc + gam[k][i][l] * up_v[l, i] + gam[i][i][l] * up_v[k, l]
            div.append(acc)
        gv = np.array([[c.coeffs[0] for c in row] for row in ginv])
        dtr = np.array([tr.derivative(l).coeffs[0] for l in range(m)])
        self.up = up_v  # omega^{ij}
        self.div = np.array(div)  # nabla_i omega^{ki}
        self.grad_tr = np.einsum("kl...,l...->k...", gv, dtr)  # nabla^k tr omega

    @property
    def drift(self) -> np.ndarray:
        """``nabla_i omega^{ki} - 1/2 nabla^k tr omega``."""
        return self.div - 0.5 * self.grad_tr


def tension_variation(phi: SmoothMap, omega: ExprMetric, x, metric: MetricField | None = None) -> np.ndarray:
    """``d/dt tau_{g + t omega}(phi)`` at ``t = 0``, shape (n, *batch)."""
    pb = Pullback(phi, x, 2, metric)
    oc = _OmegaCalculus(pb, omega)
    sff = pb.second_fundamental_form()
    sff_v = np.array([[[sff[i][j][a].coeffs[0] for j in range(pb.m)] for i in range(pb.m)] for a in range(pb.n)])
    d = pb.value("dphi")
    return -np.einsum("ij...,aij...->a...", oc.up, sff_v) - np.einsum("k...,ak...->a...", oc.drift, d)


def laplacian_variation(
    phi: SmoothMap, omega: ExprMetric, section: Sequence[Expr], x, metric: MetricField | None = None
) -> np.ndarray:
    """``(d/dt Delta_{g + t omega}) V`` at ``t = 0`` for ``V`` given by expressions."""
    pb = Pullback(phi, x, 2, metric)
    oc = _OmegaCalculus(pb, omega)
    v = section_from_exprs(section, pb.x, 2)
    grad = pb.nabla(v)
    hess = pb.hessian(v, grad)
    hess_v = np.array([[section_values(hess[i][j]) for j in range(pb.m)] for i in range(pb.m)])
    grad_v = np.array([section_values(grad[k]) for k in range(pb.m)])
    return np.einsum("ij...,ija...->a...", oc.up, hess_v) + np.einsum("k...,ka...->a...", oc.drift, grad_v)


def tension_under(phi: SmoothMap, x, metric: MetricField) -> np.ndarray:
    return section_values(Pullback(phi, x, 2, metric).tension())


def laplacian_under(phi: SmoothMap, section: Sequence[Expr], x, metric: MetricField | None = None, inner=None):
    pb = Pullback(phi, x, 2, metric)
    v = section_from_exprs(section, pb.x, 2, inner)
    return section_values(pb.laplacian(v))


def tension_variation_fd(phi: SmoothMap, omega: ExprMetric, x, metric: MetricField | None = None, h: float = FD_STEP):
    base = metric if metric is not None else phi.domain.metric
    fam = MetricVariation(base, omega)
    return richardson_derivative(lambda t: tension_under(phi, x, fam.at(t)), h)


def laplacian_variation_fd(phi, omega, section, x, metric=None, h: float = FD_STEP):
    base = metric if metric is not None else phi.domain.metric
    fam = MetricVariation(base, omega)
    return richardson_derivative(lambda t: laplacian_under(phi, section, x, fam.at(t)), h)


# --------------------------------------------------------------------------
# first variation of the energies


@dataclass(frozen=True)
class FirstVariation:
    lhs: float  # finite difference of E_k along g + t omega
    rhs: float  # int <S_k, omega> dV
    energy: float

    @property
    def scale(self) -> float:
        return max(abs(self.lhs), abs(self.rhs), abs(self.energy))

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual


def stress_pairing(phi: SmoothMap, k: int, omega: ExprMetric, grid: QuadratureGrid,
                   metric: MetricField | None = None, chunk: int = 1024) -> float:
    """``int g^{ia} g^{jb} S_ij omega_ab dV``."""
    metric = metric if metric is not None else phi.domain.metric
    dens = np.empty(len(grid.points))
    for sl, pts in grid.chunks(chunk):
        S = stress_field(phi, pts, k, metric).values()
        ginv, _ = metric_inverse_volume(_metric_values(metric, pts))
        w = _metric_values(omega, pts)
        dens[sl] = np.einsum("ia...,jb...,ij...,ab...->...", ginv, ginv, S, w)
    return grid.integrate(dens, metric)


def first_variation_check(phi: SmoothMap, k: int, omega: ExprMetric, grid: QuadratureGrid,
                          h: float = FD_STEP) -> FirstVariation:
    """Compare ``d/dt E_k(phi, g + t omega)`` with ``int <S_k, omega> dV``."""
    OrderSpec(k)
    fam = MetricVariation(phi.domain.metric, omega)
    fam.check_stencil(grid.points, h)

    def e_of(t):
        return energy(phi, k, grid, fam.at(t))

    lhs = float(richardson_derivative(e_of, h))
    rhs = stress_pairing(phi, k, omega, grid)
    return FirstVariation(lhs, rhs, e_of(0.0))


# --------------------------------------------------------------------------
# diffeomorphisms


def _jet_list(exprs, xs: list[Jet]) -> list[Jet]:
    env = {f"x{i + 1}": xs[i] for i in range(len(xs))}
    out = []
    for e in exprs:
        v = evaluate(e, env)
        if not isinstance(v, Jet):
            v = jets.jet_constant(np.broadcast_to(v, xs[0].batch_shape), xs[0].num_vars, xs[0].order)
        out.append(v)
    return out


@dataclass(frozen=True)
class Diffeo:
    """A self-map ``u`` of the domain chart with its inverse, both as expressions."""

    forward: tuple[Expr, ...]
    inverse: tuple[Expr, ...] | None
    chart: DomainChart

    @classmethod
    def from_strings(cls, forward: Sequence[str], inverse: Sequence[str] | None, chart: DomainChart) -> Diffeo:
        allowed = tuple(f"x{i + 1}" for i in range(chart.dim))
        if len(forward) != chart.dim or (inverse is not None and len(inverse) != chart.dim):
            raise ConfigError("a diffeomorphism needs one expression per domain coordinate")
        fwd = tuple(parse(e, allowed) for e in forward)
        inv = None if inverse is None else tuple(parse(e, allowed) for e in inverse)
        return cls(fwd, inv, chart)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def jets(self, x, order: int) -> list[Jet]:
        return _jet_list(self.forward, jets.jet_variables(x, order))

    def __call__(self, x) -> np.ndarray:
        return np.stack([j.coeffs[0] for j in self.jets(x, 0)], axis=-1)

    def apply_inverse(self, x) -> np.ndarray:
        if self.inverse is None:
            raise ConfigError("no inverse supplied for this diffeomorphism")
        return np.stack([j.coeffs[0] for j in _jet_list(self.inverse, jets.jet_variables(x, 0))], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        """``du^r/dx^i`` with shape (*batch, m, m) indexed [r, i] on the last two axes."""
        u = self.jets(x, 1)
        return np.stack([np.stack([c.derivative(i).coeffs[0] for i in range(self.dim)], axis=-1) for c in u], axis=-2)

    def validate(self, points, tol: float = 1e-10) -> None:
        """Check at sample points that ``u`` is an orientation-preserving degree-one map.

        A supplied inverse is checked as well.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        det = np.linalg.det(self.jacobian(points))
        if np.any(det <= 0) or not np.all(np.isfinite(det)):
            bad = points[np.argmin(det)]
            raise ChartError("diffeomorphism Jacobian is singular or orientation reversing", bad)
        base = self(points)
        for j, ((lo, hi), per) in enumerate(zip(self.chart.box, self.chart.periodic)):
            if not per:
                continue
            shift = np.zeros(self.dim)
            shift[j] = hi - lo
            jump = self(points + shift) - base
            if np.max(np.abs(jump - shift)) > tol * max(1.0, hi - lo):
                raise ConfigError(f"diffeomorphism is not a degree-one map along periodic coordinate x{j + 1}")
        if self.inverse is not None:
            back = self(self.apply_inverse(points))
            err = back - points
            for j, ((lo, hi), per) in enumerate(zip(self.chart.box, self.chart.periodic)):
                if per:
                    p = hi - lo
                    err[:, j] = (err[:, j] + p / 2) % p - p / 2
            if np.max(np.abs(err)) > tol:
                raise ConfigError(f"supplied inverse is wrong: |u(u^-1(x)) - x| = {np.max(np.abs(err)):.3g}")


@dataclass(frozen=True)
class PullbackMetric:
    """``(u^* g)_ij = g_rs(u(x)) d_i u^r d_j u^s``."""

    base: ExprMetric
    u: Diffeo

    @property
    def dim(self) -> int:
        return self.base.dim

    def jets(self, point, order: int) -> list[list[Jet]]:
        uj = self.u.jets(point, order + 1)
        g = self.base.at_jets(uj)
        m = self.dim
        du = [[uj[r].derivative(i) for i in range(m)] for r in range(m)]
        out = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                acc = None
                for r in range(m):
                    for s in range(m):
                        t = g[r][s].truncate(order) * du[r][i] * du[s][j]
                        acc = t if acc is None else acc + t
                out[i][j] = out[j][i] = acc
        return out


def pullback_metric_and_christoffel(u: Diffeo, g: ExprMetric, x) -> dict:
    """Pulled-back metric and its Christoffel symbols computed two independent ways.

    Returns values with ``metric`` (m, m, *batch), ``levi_civita`` and
    ``transformed`` (both m, m, m, *batch, indexed [k][i][j]).
    """
    m = u.dim
    pm = PullbackMetric(g, u)
    gj = pm.jets(x, 1)
    metric = np.array([[gj[i][j].coeffs[0] for j in range(m)] for i in range(m)])
    lc = christoffel_from_metric(gj, inverse_jets(gj)[0])
    levi = np.array([[[lc[k][i][j].coeffs[0] for j in range(m)] for i in range(m)] for k in range(m)])

    uj = u.jets(x, 2)
    du = np.array([[uj[r].derivative(i).coeffs[0] for i in range(m)] for r in range(m)])  # [r, i]
    ddu = np.array([[[uj[t].derivative(i).derivative(j).coeffs[0] for j in range(m)] for i in range(m)]
                    for t in range(m)])
    inv = np.moveaxis(np.linalg.inv(np.moveaxis(du, (0, 1), (-2, -1))), (-2, -1), (0, 1))  # [k, t] = dx^k/du^t
    base_gamma = christoffel_from_metric(g.jets(u(x), 1))
    bg = np.array([[[base_gamma[t][r][s].coeffs[0] for s in range(m)] for r in range(m)] for t in range(m)])
    transformed = (np.einsum("ri...,sj...,kt...,trs...->kij...", du, du, inv, bg)
                   + np.einsum("tij...,kt...->kij...", ddu, inv))
    return {"metric": metric, "levi_civita": levi, "transformed": transformed}


@dataclass(frozen=True)
class InvarianceReport:
    tension: tuple[float, float]  # (residual, scale)
    tension_k: tuple[float, float]
    laplacian: tuple[float, float]
    energy: tuple[float, float]

    def relative(self, name: str) -> float:
        r, s = getattr(self, name)
        return r / s if s > 0 else r

    def rows(self):
        for name in ("tension", "tension_k", "laplacian", "energy"):
            r, s = getattr(self, name)
            yield name, r, s, self.relative(name)


def _wrap_points(chart: DomainChart, y: np.ndarray) -> np.ndarray:
    y = np.array(y, dtype=float)
    for j, ((lo, hi), per) in enumerate(zip(chart.box, chart.periodic)):
        if per:
            y[..., j] = lo + np.mod(y[..., j] - lo, hi - lo)
    return y


def diffeo_invariance_report(phi: SmoothMap, u: Diffeo, k: int, grid: QuadratureGrid, points,
                             section: Sequence[Expr] | None = None) -> InvarianceReport:
    """Residuals of ``tau_{u*g}(phi o u) = tau_g(phi) o u``, the Laplacian analogue and ``E_k``."""
    OrderSpec(k)
    if not isinstance(phi.domain.metric, ExprMetric):
        raise ConfigError("diffeomorphism checks need an expression metric on the domain")
    points = np.asarray(points, dtype=float).reshape(-1, u.dim)
    u.validate(points)
    pm = PullbackMetric(phi.domain.metric, u)
    composed = phi.precompose(u.forward, phi.domain.with_metric(pm))
    ux = _wrap_points(phi.domain, u(points))

    def res(a, b):
        return float(np.max(np.abs(a - b))), float(max(np.max(np.abs(a)), np.max(np.abs(b))))

    tension = res(tension_under(composed, points, pm), tension_under(phi, ux, phi.domain.metric))
    tension_k = res(evaluate_tension(composed, points, k, pm), evaluate_tension(phi, ux, k))
    if section is None:
        section = tuple(parse(f"sin(x1) + {a + 1}*cos(x{u.dim})", tuple(f"x{i + 1}" for i in range(u.dim)))
                        for a in range(phi.n))
    lap = res(laplacian_under(composed, section, points, pm, inner=u.forward),
              laplacian_under(phi, section, ux))
    e_new = energy(composed, k, grid, pm)
    e_old = energy(phi, k, grid)
    return InvarianceReport(tension, tension_k, lap, (abs(e_new - e_old), max(abs(e_new), abs(e_old))))
