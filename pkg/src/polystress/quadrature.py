"""Tensor-product trapezoidal quadrature on periodic coordinate boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import DomainChart, MetricField, metric_inverse_volume

DEFAULT_NODES = 64


def fsum(values) -> float:
    """Correctly rounded sum; independent of evaluation order."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


@dataclass
class QuadratureGrid:
    """Equispaced nodes with periodic trapezoidal weights over a chart box."""

    chart: DomainChart
    nodes: int = DEFAULT_NODES
    _volume_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.nodes < 2:
            raise ConfigError("quadrature needs at least 2 nodes per dimension")
        if not self.chart.fully_periodic:
            raise ConfigError(
                "trapezoidal quadrature requires every coordinate to be periodic "
                "(non-periodic, non-compact configurations are rejected)"
            )

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def axes(self) -> list[np.ndarray]:
        return [lo + (hi - lo) * np.arange(self.nodes) / self.nodes for lo, hi in self.chart.box]

    @property
    def points(self) -> np.ndarray:
        """Node coordinates, shape (nodes**m, m); first coordinate varies slowest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    @property
    def weights(self) -> np.ndarray:
        cell = math.prod((hi - lo) / self.nodes for lo, hi in self.chart.box)
        return np.full(self.nodes**self.dim, cell)

    def volume_density(self, metric: MetricField | None = None) -> np.ndarray:
        """sqrt(det g) at the nodes, cached per metric."""
        metric = metric if metric is not None else self.chart.metric
        key = id(metric)
        hit = self._volume_cache.get(key)
        if hit is not None and hit[0] is metric:
            return hit[1]
        g = metric.jets(self.points, 0)
        vals = np.array([[g[i][j].coeffs[0] for j in range(self.dim)] for i in range(self.dim)])
        _, vol = metric_inverse_volume(vals)
        self._volume_cache[key] = (metric, vol)
        return vol

    def integrate(self, values, metric: MetricField | None = None, with_volume: bool = True) -> float:
        """Integral of nodal values against dV (or dx when ``with_volume`` is false)."""
        v = np.asarray(values, dtype=float) * self.weights
        if with_volume:
            v = v * self.volume_density(metric)
        return fsum(v)

    def chunks(self, size: int = 1024):
        pts = self.points
        for start in range(0, len(pts), size):
            yield slice(start, start + size), pts[start:start + size]
