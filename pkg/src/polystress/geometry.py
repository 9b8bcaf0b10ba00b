"""Charted Riemannian manifolds.

Metrics are matrices of expressions.  Everything here works on jets, so the
same code gives values (order 0) or Taylor expansions that callers can keep
differentiating.  Index conventions:

* ``gamma[k][i][j]`` is the Christoffel symbol with upper index ``k``;
* ``riem[a][b][c][d]`` is the curvature component with
  ``(R(X, Y) Z)^a = riem[a][b][c][d] X^c Y^d Z^b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import jets
from .errors import ChartError, ConfigError, SingularMetricError
from .exprlang import Expr, differentiate, evaluate, parse
from .jets import Jet

JetMatrix = list[list[Jet]]


# --------------------------------------------------------------------------
# symmetric two-tensors


class SymTwoTensor:
    """Symmetric 2-tensor; only the upper triangle is stored.

    Entries may be floats, arrays (batched values) or jets.
    """

    __slots__ = ("dim", "_upper")

    def __init__(self, dim: int, upper: Sequence):
        expected = dim * (dim + 1) // 2
        if len(upper) != expected:
            raise ValueError(f"expected {expected} upper-triangle entries, got {len(upper)}")
        self.dim = dim
        self._upper = tuple(upper)

    @classmethod
    def from_function(cls, dim: int, fn) -> SymTwoTensor:
        return cls(dim, [fn(i, j) for i in range(dim) for j in range(i, dim)])

    @classmethod
    def from_matrix(cls, mat) -> SymTwoTensor:
        dim = len(mat)
        return cls(dim, [mat[i][j] for i in range(dim) for j in range(i, dim)])

    def _pos(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return i * self.dim - i * (i - 1) // 2 + (j - i)

    def __getitem__(self, ij: tuple[int, int]):
        return self._upper[self._pos(*ij)]

    def rows(self) -> list[list]:
        return [[self[i, j] for j in range(self.dim)] for i in range(self.dim)]

    def values(self) -> np.ndarray:
        """Dense array of shape (dim, dim, *batch) from the constant terms."""
        def val(e):
            return e.coeffs[0] if isinstance(e, Jet) else np.asarray(e, dtype=float)
        return np.array([[val(self[i, j]) for j in range(self.dim)] for i in range(self.dim)])

    def map(self, fn) -> SymTwoTensor:
        return SymTwoTensor(self.dim, [fn(e) for e in self._upper])


# --------------------------------------------------------------------------
# linear algebra on small jet matrices


def det_jets(g: JetMatrix):
    m = len(g)
    if m == 1:
        return g[0][0]
    if m == 2:
        return g[0][0] * g[1][1] - g[0][1] * g[1][0]
    if m == 3:
        return (
            g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
            - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
            + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
        )
    raise ValueError("matrices larger than 3x3 are not supported")


def _adjugate(g: JetMatrix):
    m = len(g)
    if m == 1:
        return [[1.0]]
    if m == 2:
        return [[g[1][1], -g[0][1]], [-g[1][0], g[0][0]]]
    adj = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = g[r[0]][c[0]] * g[r[1]][c[1]] - g[r[0]][c[1]] * g[r[1]][c[0]]
            adj[i][j] = minor if (i + j) % 2 == 0 else -minor
    return adj


def inverse_jets(g: JetMatrix) -> tuple[JetMatrix, object]:
    """Inverse via the adjugate, plus the determinant."""
    det = det_jets(g)
    d0 = det.coeffs[0] if isinstance(det, Jet) else np.asarray(det)
    if np.any(d0 <= 0):
        raise SingularMetricError("metric determinant is not positive")
    inv_det = 1.0 / det
    adj = _adjugate(g)
    m = len(g)
    return [[adj[i][j] * inv_det for j in range(m)] for i in range(m)], det


def metric_inverse_volume(g) -> tuple[np.ndarray, np.ndarray | float]:
    """Inverse metric and sqrt(det g) for a positive-definite value (batch on trailing axes)."""
    g = np.asarray(g, dtype=float)
    m = g.shape[0]
    if m > 3 or g.shape[1] != m:
        raise ValueError("metric must be a square matrix of size <= 3")
    rows = [[g[i, j] for j in range(m)] for i in range(m)]
    det = det_jets(rows)
    if np.any(np.asarray(det) <= 0):
        raise SingularMetricError("metric determinant is not positive")
    adj = _adjugate(rows)
    inv = np.array([[np.asarray(adj[i][j]) / det for j in range(m)] for i in range(m)])
    vol = np.sqrt(det)
    return inv, (float(vol) if np.ndim(vol) == 0 else vol)


def check_positive_definite(g: np.ndarray, where=None) -> None:
    """Smallest eigenvalue > 0 at every batch entry of a (m, m, *batch) value."""
    g = np.asarray(g, dtype=float)
    mats = np.moveaxis(g.reshape(g.shape[:2] + (-1,)), -1, 0)
    ev = np.linalg.eigvalsh(mats)
    bad = np.flatnonzero(ev[:, 0] <= 0)
    if bad.size:
        raise SingularMetricError(
            f"metric is not positive-definite (smallest eigenvalue {ev[bad[0], 0]:.3g})"
            + ("" if where is None else f" at {where}")
        )


# --------------------------------------------------------------------------
# Levi-Civita connection and curvature


def christoffel_from_metric(g: JetMatrix, ginv: JetMatrix | None = None) -> list[JetMatrix]:
    """``gamma[k][i][j] = 1/2 g^{kr} (d_i g_{rj} + d_j g_{ri} - d_r g_{ij})``.

    The result has one order less than ``g``.
    """
    m = len(g)
    if ginv is None:
        ginv, _ = inverse_jets(g)
    dg = [[[g[a][b].derivative(r) for r in range(m)] for b in range(m)] for a in range(m)]
    # first kind, symmetric in (i, j)
    first = [[[None] * m for _ in range(m)] for _ in range(m)]
    for r in range(m):
        for i in range(m):
            for j in range(i, m):
                v = (dg[r][j][i] + dg[r][i][j] - dg[i][j][r]) * 0.5
                first[r][i][j] = first[r][j][i] = v
    gamma = [[[None] * m for _ in range(m)] for _ in range(m)]
    for k in range(m):
        for i in range(m):
            for j in range(i, m):
                acc = ginv[k][0] * first[0][i][j]
                for r in range(1, m):
                    acc = acc + ginv[k][r] * first[r][i][j]
                gamma[k][i][j] = gamma[k][j][i] = acc
    return gamma


def curvature_from_christoffel(gamma: list[JetMatrix]) -> list[list[JetMatrix]]:
    """Riemann tensor ``riem[a][b][c][d]``; one order less than ``gamma``.

    ``R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{cl} G^l_{db} - G^a_{dl} G^l_{cb}``.
    """
    n = len(gamma)
    dG = [[[[gamma[a][i][j].derivative(c) for c in range(n)] for j in range(n)] for i in range(n)]
          for a in range(n)]
    riem = [[[[None] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for a in range(n):
        for b in range(n):
            for c in range(n):
                riem[a][b][c][c] = gamma[a][b][c].truncate(gamma[a][b][c].order - 1) * 0.0
                for d in range(c + 1, n):
                    v = dG[a][d][b][c] - dG[a][c][b][d]
                    for l in range(n):
                        v = v + gamma[a][c][l] * gamma[l][d][b] - gamma[a][d][l] * gamma[l][c][b]
                    riem[a][b][c][d] = v
                    riem[a][b][d][c] = -v
    return riem


def bundle_inner(h, v, w):
    """``h_{ab} v^a w^b`` for numeric values or jets."""
    n = len(v)
    if len(w) != n or len(h) != n:
        raise ValueError("dimension mismatch in bundle inner product")
    acc = None
    for a in range(n):
        for b in range(n):
            t = h[a][b] * v[a] * w[b]
            acc = t if acc is None else acc + t
    return acc


# --------------------------------------------------------------------------
# metric fields


class MetricField(Protocol):
    dim: int

    def jets(self, point, order: int) -> JetMatrix: ...


def _parse_matrix(rows, allowed) -> tuple[tuple[Expr, ...], ...]:
    if isinstance(rows, (list, tuple)) and rows and not isinstance(rows[0], (list, tuple)):
        raise ConfigError("metric must be a list of rows")
    out = tuple(tuple(e if not isinstance(e, str) else parse(e, allowed) for e in row) for row in rows)
    m = len(out)
    if any(len(r) != m for r in out):
        raise ConfigError("metric matrix must be square")
    if any(out[i][j] != out[j][i] for i in range(m) for j in range(m)):
        raise ConfigError("metric expression matrix must be symmetric")
    return out


@dataclass(frozen=True)
class ExprMetric:
    """Metric given by a symmetric matrix of expressions in ``prefix1..prefixm``."""

    entries: tuple[tuple[Expr, ...], ...]
    prefix: str = "x"

    @classmethod
    def from_strings(cls, rows, prefix: str = "x") -> ExprMetric:
        m = len(rows)
        allowed = tuple(f"{prefix}{i + 1}" for i in range(m))
        return cls(_parse_matrix(rows, allowed), prefix)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f"{self.prefix}{i + 1}" for i in range(self.dim))

    def at_jets(self, coords: Sequence[Jet]) -> JetMatrix:
        """Metric components with the coordinates bound to arbitrary jets."""
        env = dict(zip(self.names, coords))
        ref = coords[0]
        m = self.dim
        out = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                v = evaluate(self.entries[i][j], env)
                if not isinstance(v, Jet):
                    v = jets.jet_constant(np.broadcast_to(v, ref.batch_shape), ref.num_vars, ref.order)
                out[i][j] = out[j][i] = v
        return out

    def jets(self, point, order: int) -> JetMatrix:
        return self.at_jets(jets.jet_variables(point, order))

    def values(self, point) -> np.ndarray:
        g = self.jets(point, 0)
        return np.array([[g[i][j].coeffs[0] for j in range(self.dim)] for i in range(self.dim)])


@dataclass(frozen=True)
class PerturbedMetric:
    """``g + t * omega``."""

    base: MetricField
    omega: ExprMetric
    t: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def jets(self, point, order: int) -> JetMatrix:
        g = self.base.jets(point, order)
        w = self.omega.jets(point, order)
        m = self.dim
        return [[g[i][j] + w[i][j] * self.t for j in range(m)] for i in range(m)]


# --------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class DomainChart:
    """Coordinate chart of the domain: metric, coordinate box, periodicity."""

    metric: MetricField
    box: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        m = self.metric.dim
        if not 1 <= m <= 3:
            raise ConfigError(f"domain dimension must be 1..3, got {m}")
        if len(self.box) != m or len(self.periodic) != m:
            raise ConfigError("box and periodic flags must match the domain dimension")
        for lo, hi in self.box:
            if not hi > lo:
                raise ConfigError(f"empty coordinate interval [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return self.metric.dim

    @classmethod
    def from_strings(cls, metric, box, periodic) -> DomainChart:
        return cls(ExprMetric.from_strings(metric, "x"),
                   tuple((float(a), float(b)) for a, b in box), tuple(bool(p) for p in periodic))

    def with_metric(self, metric: MetricField) -> DomainChart:
        return DomainChart(metric, self.box, self.periodic)

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        per = np.array(self.periodic)
        inside = (x >= lo) & (x <= hi)
        return bool(np.all(inside | per))

    def check_metric(self, points) -> None:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        g = self.metric.jets(points, 0)
        vals = np.array([[g[i][j].coeffs[0] for j in range(self.dim)] for i in range(self.dim)])
        check_positive_definite(vals)


def flat_torus(m: int = 1) -> DomainChart:
    rows = [["1" if i == j else "0" for j in range(m)] for i in range(m)]
    return DomainChart.from_strings(rows, [(0.0, 2 * np.pi)] * m, [True] * m)


def flat_space(m: int = 1, half_width: float = 10.0) -> DomainChart:
    rows = [["1" if i == j else "0" for j in range(m)] for i in range(m)]
    return DomainChart.from_strings(rows, [(-half_width, half_width)] * m, [False] * m)


CATALOG = ("euclidean", "sphere_stereographic", "hyperbolic_ball")


@dataclass(frozen=True)
class TargetGeometry:
    """Target manifold in one chart with coordinates ``y1..yn``."""

    metric: ExprMetric
    catalog_id: str | None = None
    radius: float = 1.0
    ball_radius: float | None = None  # chart is the open ball |y| < ball_radius when set
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.metric.dim <= 3:
            raise ConfigError(f"target dimension must be 1..3, got {self.metric.dim}")
        if self.metric.prefix != "y":
            raise ConfigError("target metric must be written in y-variables")

    @property
    def dim(self) -> int:
        return self.metric.dim

    @classmethod
    def from_strings(cls, rows) -> TargetGeometry:
        return cls(ExprMetric.from_strings(rows, "y"))

    @classmethod
    def catalog(cls, name: str, dim: int = 2, radius: float = 1.0) -> TargetGeometry:
        if not 1 <= dim <= 3:
            raise ConfigError(f"target dimension must be 1..3, got {dim}")
        if radius <= 0:
            raise ConfigError("radius must be positive")
        r2 = repr(float(radius) ** 2)
        sq = "+".join(f"y{a + 1}^2" for a in range(dim))
        if name == "euclidean":
            factor, ball = "1", None
        elif name == "sphere_stereographic":
            factor, ball = f"4*{r2}^2/({r2}+{sq})^2", None
        elif name == "hyperbolic_ball":
            factor, ball = f"4*{r2}^2/({r2}-({sq}))^2", float(radius)
        else:
            raise ConfigError(f"unknown target catalog entry {name!r}; expected one of {CATALOG}")
        rows = [[factor if a == b else "0" for b in range(dim)] for a in range(dim)]
        return cls(ExprMetric.from_strings(rows, "y"), name, float(radius), ball)

    @property
    def sectional_curvature(self) -> float | None:
        if self.catalog_id == "euclidean":
            return 0.0
        if self.catalog_id == "sphere_stereographic":
            return 1.0 / self.radius**2
        if self.catalog_id == "hyperbolic_ball":
            return -1.0 / self.radius**2
        return None

    def check_chart(self, y) -> None:
        """Raise :class:`ChartError` when a point leaves the chart."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ChartError("map image is not finite")
        if self.ball_radius is not None:
            flat = y.reshape(-1, self.dim)
            r = np.sqrt(np.sum(flat**2, axis=1))
            bad = np.flatnonzero(r >= self.ball_radius * (1 - 1e-12))
            if bad.size:
                raise ChartError("map image leaves the chart ball", tuple(flat[bad[0]]))

    # -- evaluation ----------------------------------------------------------

    def metric_along(self, phi: Sequence[Jet]) -> JetMatrix:
        """``h(phi(x))`` as jets in the domain variables."""
        return self.metric.at_jets(phi)

    def christoffel(self, y, order: int) -> list[JetMatrix]:
        """Christoffel symbols as jets in y around ``y`` (order ``order``)."""
        return christoffel_from_metric(self.metric.jets(y, order + 1))

    def curvature(self, y, order: int = 0) -> list[list[JetMatrix]]:
        return curvature_from_christoffel(self.christoffel(y, order + 1))

    def _metric_gradient(self) -> list[list[list[Expr]]]:
        """Expressions ``d h_ab / d y_c`` indexed [c][a][b]."""
        hit = self._cache.get("dmetric")
        if hit is None:
            n = self.dim
            hit = [[[differentiate(self.metric.entries[a][b], f"y{c + 1}") for b in range(n)] for a in range(n)]
                   for c in range(n)]
            self._cache["dmetric"] = hit
        return hit

    def christoffel_along(self, phi: Sequence[Jet], order: int) -> list[JetMatrix]:
        """``Gamma^a_{bc}(phi(x))`` as jets in the domain variables.

        The metric and its exact y-derivatives are evaluated directly on the
        jets of phi, so no Taylor series in y is formed.
        """
        n = self.dim
        order = min(order, phi[0].order)
        phi = [p.truncate(order) for p in phi]
        env = {f"y{a + 1}": phi[a] for a in range(n)}

        def ev(e):
            v = evaluate(e, env)
            if not isinstance(v, Jet):
                v = jets.jet_constant(np.broadcast_to(v, phi[0].batch_shape), phi[0].num_vars, order)
            return v

        h = self.metric.at_jets(phi)
        hinv, _ = inverse_jets(h)
        dh = [[[ev(e) for e in row] for row in plane] for plane in self._metric_gradient()]
        # lowered symbols Gamma_{d,bc} = (d_b h_dc + d_c h_db - d_d h_bc) / 2
        low = [[[0.5 * (dh[b][d][c] + dh[c][d][b] - dh[d][b][c]) for c in range(n)] for b in range(n)]
               for d in range(n)]
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for a in range(n):
            for b in range(n):
                for c in range(b, n):
                    acc = None
                    for d in range(n):
                        if not np.any(hinv[a][d].coeffs) or not np.any(low[d][b][c].coeffs):
                            continue
                        t = hinv[a][d] * low[d][b][c]
                        acc = t if acc is None else acc + t
                    if acc is None:
                        acc = jets.jet_constant(np.zeros(phi[0].batch_shape), phi[0].num_vars, order)
                    out[a][b][c] = out[a][c][b] = acc
        return out

    def christoffel_along_composed(self, phi: Sequence[Jet], order: int) -> list[JetMatrix]:
        """Same as :meth:`christoffel_along`, by composing the y-Taylor series with ``phi - phi(x0)``."""
        y0 = np.stack([p.coeffs[0] for p in phi], axis=-1)
        order = min(order, phi[0].order)
        gam = self.christoffel(y0, order)
        n = self.dim
        delta = [p.truncate(order).without_constant() for p in phi]
        keys = [(a, b, c) for a in range(n) for b in range(n) for c in range(b, n)]
        composed = jets.compose_many([gam[a][b][c] for a, b, c in keys], delta)
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for (a, b, c), v in zip(keys, composed):
            out[a][b][c] = out[a][c][b] = v
        return out

    def curvature_values(self, y0) -> np.ndarray:
        """Curvature components at ``y0`` (coordinates on the last axis).

        Shape (n, n, n, n, *batch).
        """
        riem = self.curvature(y0, 0)
        n = self.dim
        return np.array([[[[riem[a][b][c][d].coeffs[0] for d in range(n)] for c in range(n)]
                          for b in range(n)] for a in range(n)])

    def metric_values(self, y0) -> np.ndarray:
        return self.metric.values(y0)


def christoffel(metric: MetricField, point, order_needed: int = 0) -> list[JetMatrix]:
    """Christoffel symbols of ``metric`` at ``point`` as jets of order ``order_needed``."""
    return christoffel_from_metric(metric.jets(point, order_needed + 1))


def curvature(target: TargetGeometry, y, order_needed: int = 0) -> list[list[JetMatrix]]:
    return target.curvature(y, order_needed)
