"""Calculus on the pullback bundle phi^*TN.

A :class:`Pullback` gathers the jets the local-coordinate formulas need at a
batch of domain points.  On the domain side these are the metric and its
Christoffel symbols; on the target side, phi itself and the pulled-back
connection.  Sections are lists of ``n`` jets whose order is their remaining
differentiation budget: every covariant derivative spends one order, every
Laplacian two.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets
from .errors import ConfigError, JetOrderError
from .exprlang import Expr, evaluate, parse
from .geometry import (
    DomainChart,
    MetricField,
    TargetGeometry,
    christoffel_from_metric,
    inverse_jets,
)
from .jets import Jet

Section = list[Jet]


def _nonzero(j: Jet | None) -> Jet | None:
    if j is None or not np.any(j.coeffs):
        return None
    return j


def _sum(terms) -> Jet | None:
    acc = None
    for t in terms:
        if t is None:
            continue
        acc = t if acc is None else acc + t
    return acc


def _mul(a: Jet | None, b: Jet | None) -> Jet | None:
    if a is None or b is None:
        return None
    return a * b


# --------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class SmoothMap:
    """phi: M -> N given componentwise by expressions in ``x1..xm``.

    ``inner`` optionally precomposes with a self-map of the domain (also given
    by expressions), i.e. the map is ``phi(inner(x))``.
    """

    components: tuple[Expr, ...]
    domain: DomainChart
    target: TargetGeometry
    inner: tuple[Expr, ...] | None = None

    def __post_init__(self):
        if len(self.components) != self.target.dim:
            raise ConfigError(
                f"map has {len(self.components)} components but the target has dimension {self.target.dim}"
            )
        if self.inner is not None and len(self.inner) != self.domain.dim:
            raise ConfigError("inner map must have one component per domain coordinate")

    @classmethod
    def from_strings(cls, components: Sequence[str], domain: DomainChart, target: TargetGeometry) -> SmoothMap:
        allowed = tuple(f"x{i + 1}" for i in range(domain.dim))
        return cls(tuple(parse(c, allowed) for c in components), domain, target)

    @property
    def n(self) -> int:
        return self.target.dim

    @property
    def m(self) -> int:
        return self.domain.dim

    def precompose(self, inner: Sequence[Expr], domain: DomainChart | None = None) -> SmoothMap:
        if self.inner is not None:
            raise ConfigError("map is already precomposed")
        return SmoothMap(self.components, domain or self.domain, self.target, tuple(inner))

    def _coords(self, x, order: int) -> list[Jet]:
        xs = jets.jet_variables(x, order)
        if self.inner is None:
            return xs
        env = {f"x{i + 1}": xs[i] for i in range(self.m)}
        return [_promote(evaluate(e, env), xs[0]) for e in self.inner]

    def jets(self, x, order: int) -> list[Jet]:
        xs = self._coords(x, order)
        env = {f"x{i + 1}": xs[i] for i in range(self.m)}
        return [_promote(evaluate(c, env), xs[0]) for c in self.components]

    def values(self, x) -> np.ndarray:
        """Map values, coordinates on the last axis."""
        return np.stack([j.coeffs[0] for j in self.jets(x, 0)], axis=-1)


def _promote(v, ref: Jet) -> Jet:
    if isinstance(v, Jet):
        return v
    return jets.jet_constant(np.broadcast_to(v, ref.batch_shape), ref.num_vars, ref.order)


def section_from_exprs(exprs: Sequence[Expr], x, order: int, inner: Sequence[Expr] | None = None) -> Section:
    """A section given componentwise by expressions in the domain coordinates."""
    xs = jets.jet_variables(x, order)
    if inner is not None:
        env = {f"x{i + 1}": xs[i] for i in range(len(xs))}
        xs = [_promote(evaluate(e, env), xs[0]) for e in inner]
    env = {f"x{i + 1}": xs[i] for i in range(len(xs))}
    return [_promote(evaluate(e, env), xs[0]) for e in exprs]


def section_values(v: Section) -> np.ndarray:
    return np.array([c.coeffs[0] for c in v])


# --------------------------------------------------------------------------
# the local frame


def _as_points(x, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != m:
        raise ConfigError(f"points must have {m} coordinates on the last axis, got shape {x.shape}")
    return x


class Pullback:
    """Local data of ``phi`` at a batch of points, expanded to jet order ``order``."""

    def __init__(self, phi, x, order: int, metric: MetricField | None = None):
        self.map = phi
        self.m = phi.domain.dim
        self.n = phi.target.dim
        self.x = _as_points(x, self.m)
        self.order = order
        if order < 1:
            raise JetOrderError("a pullback frame needs jet order >= 1")
        metric = metric if metric is not None else phi.domain.metric
        m, n = self.m, self.n

        self.phi = phi.jets(self.x, order)
        self.target = phi.target
        self.target.check_chart(np.stack([p.coeffs[0] for p in self.phi], axis=-1))
        self.dphi = [[self.phi[a].derivative(i) for i in range(m)] for a in range(n)]

        self.g = metric.jets(self.x, order)
        self.ginv, det = inverse_jets(self.g)
        self.sqrtg = jets.sqrt(det)
        gam = christoffel_from_metric(self.g, self.ginv)
        self.gamma = [[[_nonzero(gam[k][i][j]) for j in range(m)] for i in range(m)] for k in range(m)]
        self._ginv_nz = [[_nonzero(self.ginv[i][j]) for j in range(m)] for i in range(m)]

        self.h = self.target.metric_along(self.phi)
        gamma_n = self.target.christoffel_along(self.phi, order - 1)
        # conn[i][a][c] = Gamma^a_{bc}(phi) d_i phi^b
        self.conn = [
            [
                [_nonzero(_sum(_mul(_nonzero(gamma_n[a][b][c]), self.dphi[b][i]) for b in range(n)))
                 for c in range(n)]
                for a in range(n)
            ]
            for i in range(m)
        ]
        self._riem = None
        self._sff = None
        self._tension = None

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.x.shape[:-1]

    # -- values ---------------------------------------------------------------

    def riemann_values(self) -> np.ndarray:
        """Target curvature at phi(x), shape (n, n, n, n, *batch)."""
        if self._riem is None:
            y0 = np.stack([p.coeffs[0] for p in self.phi], axis=-1)
            self._riem = self.target.curvature_values(y0)
        return self._riem

    def value(self, name: str) -> np.ndarray:
        """Constant terms of a stored jet array (``g``, ``ginv``, ``h``, ``dphi``, ``sqrtg``)."""
        obj = getattr(self, name)
        return _values(obj)

    # -- covariant calculus ----------------------------------------------------

    def zero_section(self, order: int) -> Section:
        return [jets.jet_constant(np.zeros(self.batch_shape), self.m, order) for _ in range(self.n)]

    def differential(self) -> list[list[Jet]]:
        return self.dphi

    def nabla(self, v: Section) -> list[Section]:
        """``[nabla_i v for i in range(m)]`` with ``(nabla_i v)^a = d_i v^a + Gamma^a_{bc} d_i phi^b v^c``."""
        if min(c.order for c in v) < 1:
            raise JetOrderError("jet order exhausted: covariant derivative needs one more order")
        out = []
        for i in range(self.m):
            comp = []
            for a in range(self.n):
                acc = v[a].derivative(i)
                for c in range(self.n):
                    k = self.conn[i][a][c]
                    if k is not None:
                        acc = acc + k * v[c]
                comp.append(acc)
            out.append(comp)
        return out

    def hessian(self, v: Section, grad: list[Section] | None = None) -> list[list[Section]]:
        """``(nabla^2 v)(d_i, d_j) = nabla_i nabla_j v - Gamma^k_{ij} nabla_k v``."""
        grad = grad if grad is not None else self.nabla(v)
        second = [self.nabla(grad[j]) for j in range(self.m)]  # second[j][i] = nabla_i nabla_j v
        out = []
        for i in range(self.m):
            row = []
            for j in range(self.m):
                sec = []
                for a in range(self.n):
                    acc = second[j][i][a]
                    for k in range(self.m):
                        gk = self.gamma[k][i][j]
                        if gk is not None:
                            acc = acc - gk * grad[k][a]
                    sec.append(acc)
                row.append(sec)
            out.append(row)
        return out

    def laplacian(self, v: Section, grad: list[Section] | None = None) -> Section:
        """Rough Laplacian, geometer's sign: ``-g^{ij} (nabla^2 v)_{ij}``."""
        if min(c.order for c in v) < 2:
            raise JetOrderError("jet order exhausted: the Laplacian needs two more orders")
        grad = grad if grad is not None else self.nabla(v)
        out = [None] * self.n
        for j in range(self.m):
            nab_j = self.nabla(grad[j])
            for i in range(self.m):
                gij = self._ginv_nz[i][j]
                if gij is None:
                    continue
                for a in range(self.n):
                    acc = nab_j[i][a]
                    for k in range(self.m):
                        gk = self.gamma[k][i][j]
                        if gk is not None:
                            acc = acc - gk * grad[k][a]
                    t = gij * acc
                    out[a] = t if out[a] is None else out[a] + t
        return [-c for c in out]

    def second_fundamental_form(self) -> list[list[Section]]:
        """``(nabla d phi)^a_{ij}``, symmetric in ``ij`` by construction."""
        if self._sff is None:
            m, n = self.m, self.n
            sff = [[None] * m for _ in range(m)]
            for i in range(m):
                for j in range(i, m):
                    sec = []
                    for a in range(n):
                        acc = self.dphi[a][j].derivative(i)
                        for k in range(m):
                            gk = self.gamma[k][i][j]
                            if gk is not None:
                                acc = acc - gk * self.dphi[a][k]
                        for c in range(n):
                            kc = self.conn[i][a][c]
                            if kc is not None:
                                acc = acc + kc * self.dphi[c][j]
                        sec.append(acc)
                    sff[i][j] = sff[j][i] = sec
            self._sff = sff
        return self._sff

    def tension(self) -> Section:
        """``tau^a = g^{ij} (nabla d phi)^a_{ij}``."""
        if self.order < 2:
            raise JetOrderError("the tension field needs jet order >= 2")
        if self._tension is None:
            sff = self.second_fundamental_form()
            out = []
            for a in range(self.n):
                acc = None
                for i in range(self.m):
                    for j in range(self.m):
                        gij = self._ginv_nz[i][j]
                        if gij is not None:
                            t = gij * sff[i][j][a]
                            acc = t if acc is None else acc + t
                out.append(acc)
            self._tension = out
        return self._tension

    def tower(self, depth: int, last_gradient: bool = False) -> TensionTower:
        """``T_j = Delta^j tau`` for ``j <= depth`` and ``G_j = nabla T_j`` for ``j < depth``.

        With ``last_gradient`` the gradient of ``T_depth`` is included too.
        """
        need = 2 * depth + 2 + (1 if last_gradient else 0)
        if self.order < need:
            raise JetOrderError(
                f"tension tower of depth {depth} needs jet order {need}, frame has {self.order}"
            )
        ts = [self.tension()]
        gs = []
        for _ in range(depth):
            grad = self.nabla(ts[-1])
            gs.append(grad)
            ts.append(self.laplacian(ts[-1], grad))
        if last_gradient:
            gs.append(self.nabla(ts[-1]))
        return TensionTower(tuple(ts), tuple(gs), self.x, depth)

    # -- inner products on jets -------------------------------------------------

    def inner(self, v: Section, w: Section) -> Jet:
        acc = None
        for a in range(self.n):
            lowered = _sum(_mul(self.h[a][b], v[b]) for b in range(self.n))
            t = lowered * w[a]
            acc = t if acc is None else acc + t
        return acc

    def inner_grad(self, gv: list[Section], gw: list[Section]) -> Jet:
        """``g^{ij} <gv_i, gw_j>``."""
        acc = None
        for i in range(self.m):
            for j in range(self.m):
                gij = self._ginv_nz[i][j]
                if gij is None:
                    continue
                t = gij * self.inner(gv[i], gw[j])
                acc = t if acc is None else acc + t
        return acc

    def dphi_sections(self) -> list[Section]:
        """``d phi(d_i)`` as sections, indexed by ``i``."""
        return [[self.dphi[a][i] for a in range(self.n)] for i in range(self.m)]


def _values(obj):
    if isinstance(obj, Jet):
        return obj.coeffs[0]
    return np.array([_values(o) for o in obj])


@dataclass(frozen=True)
class TensionTower:
    """Iterated Laplacians of the tension field and their covariant derivatives.

    ``T[j]`` is ``Delta^j tau``; ``G[j][i]`` is ``nabla_i Delta^j tau``.
    Index ``-1`` refers to the zero section.
    """

    T: tuple[Section, ...]
    G: tuple[list[Section], ...]
    point: np.ndarray
    depth: int

    def t(self, j: int) -> Section | None:
        if j == -1:
            return None
        if not 0 <= j < len(self.T):
            raise JetOrderError(f"tower has no Laplacian of order {j} (depth {self.depth})")
        return self.T[j]

    def g(self, j: int) -> list[Section] | None:
        if j == -1:
            return None
        if not 0 <= j < len(self.G):
            raise JetOrderError(f"tower has no gradient of Delta^{j} tau (depth {self.depth})")
        return self.G[j]

    def t_values(self, j: int, n: int, batch_shape) -> np.ndarray:
        """Values of ``T[j]``, shape (n, *batch); zero for ``j == -1``."""
        v = self.t(j)
        if v is None:
            return np.zeros((n,) + tuple(batch_shape))
        return section_values(v)

    def g_values(self, j: int, n: int, m: int, batch_shape) -> np.ndarray:
        """Values of ``G[j]``, shape (n, m, *batch) indexed [component, direction]."""
        v = self.g(j)
        if v is None:
            return np.zeros((n, m) + tuple(batch_shape))
        return np.stack([section_values(v[i]) for i in range(m)], axis=1)


# --------------------------------------------------------------------------
# jet-order bookkeeping


def required_order(k: int, purpose: str) -> int:
    """Minimal jet order of phi for an order-k quantity.

    ``energy`` -> k, ``stress`` -> 2k-1, ``tension`` and ``divergence`` -> 2k.
    """
    if k < 1:
        raise ConfigError(f"polyharmonic order must be >= 1, got {k}")
    if purpose == "energy":
        return k
    if purpose == "stress":
        return 2 * k - 1
    if purpose in ("tension", "divergence", "conservation"):
        return 2 * k
    raise ValueError(f"unknown purpose {purpose!r}")


# --------------------------------------------------------------------------
# functional surface


def differential(phi: SmoothMap, x, order: int = 1):
    return Pullback(phi, x, max(order, 1)).differential()


def second_fundamental_form(phi: SmoothMap, x) -> np.ndarray:
    """Values of ``(nabla d phi)^a_{ij}``, shape (n, m, m, *batch)."""
    pb = Pullback(phi, x, 2)
    sff = pb.second_fundamental_form()
    return np.array([[[sff[i][j][a].coeffs[0] for j in range(pb.m)] for i in range(pb.m)] for a in range(pb.n)])


def tension(phi: SmoothMap, x) -> np.ndarray:
    return section_values(Pullback(phi, x, 2).tension())


def nabla_section(pb: Pullback, v: Section) -> list[Section]:
    return pb.nabla(v)


def rough_laplacian(pb: Pullback, v: Section) -> Section:
    return pb.laplacian(v)


def tension_tower(phi: SmoothMap, x, depth: int, order: int | None = None) -> TensionTower:
    order = order if order is not None else 2 * depth + 2
    return Pullback(phi, x, order).tower(depth)
