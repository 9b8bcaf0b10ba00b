"""Configuration-driven verification sweeps and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ConfigError
from .geometry import DomainChart, ExprMetric, TargetGeometry
from .polyharmonic import MAX_K, energy
from .pullback import Pullback, SmoothMap, required_order
from .quadrature import DEFAULT_NODES, QuadratureGrid
from .stress import (
    conservation_check,
    integrated_trace_factor,
    stress_k,
    trace_closed_form,
    trace_contracted,
    trace_scale,
)

TOLERANCES = {
    "conservation": 1e-7,
    "trace_pointwise": 1e-10,
    "trace_integrated": 1e-8,
    "first_variation": 1e-5,
    "invariance_tension": 1e-8,
    "invariance_tension_k": 1e-8,
    "invariance_laplacian": 1e-8,
    "invariance_energy": 1e-8,
}

CSV_COLUMNS = ("check", "k", "point_or_integral", "residual", "scale", "relative", "tolerance", "pass")


# --------------------------------------------------------------------------
# seeded sampling


class SplitMix64:
    """The SplitMix64 generator: a 64-bit counter passed through a mixer.

    ``state += 0x9E3779B97F4A7C15``; output ``z = state``,
    ``z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9``,
    ``z = (z ^ (z >> 27)) * 0x94D049BB133111EB``, ``z ^ (z >> 31)`` (all mod 2^64).
    Uniform doubles use the top 53 bits: ``(z >> 11) * 2^-53``.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53


def sample_points(chart: DomainChart, count: int, seed: int) -> np.ndarray:
    """``count`` points uniform in the chart box, shape (count, m)."""
    rng = SplitMix64(seed)
    lo = np.array([b[0] for b in chart.box])
    hi = np.array([b[1] for b in chart.box])
    u = np.array([[rng.uniform() for _ in range(chart.dim)] for _ in range(count)]).reshape(count, chart.dim)
    return lo + (hi - lo) * u


def random_trig_map(seed: int, m: int, n: int, amplitude: float = 0.8, terms: int = 3) -> list[str]:
    """Expressions of a random trigonometric polynomial map with ``sum |coeff| <= amplitude / sqrt(n)``.

    The bound keeps the image inside the unit ball, so the same maps are valid
    for every catalog target of radius 1.
    """
    rng = SplitMix64(seed)
    budget = amplitude / math.sqrt(n)
    out = []
    for _ in range(n):
        weights = [rng.uniform() + 0.1 for _ in range(terms + 1)]
        total = sum(weights)
        parts = [f"{budget * weights[0] / total * (2 * rng.uniform() - 1)!r}"]
        for t in range(terms):
            freq = [int(rng.uniform() * 3) - 1 + (1 if i == t % m else 0) for i in range(m)]
            if not any(freq):
                freq[t % m] = 1
            arg = " + ".join(f"{f}*x{i + 1}" for i, f in enumerate(freq) if f)
            fn = "sin" if rng.uniform() < 0.5 else "cos"
            coeff = budget * weights[t + 1] / total * (2 * rng.uniform() - 1)
            parts.append(f"{coeff!r}*{fn}({arg} + {2 * math.pi * rng.uniform()!r})")
        out.append(" + ".join(parts))
    return out


# --------------------------------------------------------------------------
# configuration


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing key {key!r} in {where}")
    return block[key]


@dataclass
class FlowConfig:
    eta: float = 1.0
    max_steps: int = 10_000
    tol: float = 1e-6
    modes: int | None = None
    k: int | None = None


@dataclass
class RunConfig:
    domain: DomainChart
    target: TargetGeometry
    map: SmoothMap
    orders: tuple[int, ...]
    nodes: int = DEFAULT_NODES
    sample_count: int = 50
    seed: int = 0
    omega: ExprMetric | None = None
    diffeo: Any = None
    flow: FlowConfig | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, cfg: dict) -> RunConfig:
        if not isinstance(cfg, dict):
            raise ConfigError("configuration must be a JSON object")
        dom = _require(cfg, "domain", "configuration")
        m = int(_require(dom, "dim", "domain"))
        if not 1 <= m <= 3:
            raise ConfigError(f"domain dimension must be 1..3, got {m}")
        metric = dom.get("metric", [["1" if i == j else "0" for j in range(m)] for i in range(m)])
        box = dom.get("box", [[0.0, 2 * math.pi]] * m)
        periodic = dom.get("periodic", [True] * m)
        metric = [[str(e) for e in row] for row in metric]
        if len(metric) != m:
            raise ConfigError("domain metric size does not match domain dim")
        domain = DomainChart.from_strings(metric, box, periodic)

        tgt = _require(cfg, "target", "configuration")
        if "catalog" in tgt:
            target = TargetGeometry.catalog(tgt["catalog"], int(tgt.get("dim", 2)), float(tgt.get("radius", 1.0)))
        elif "metric" in tgt:
            target = TargetGeometry.from_strings([[str(e) for e in row] for row in tgt["metric"]])
        else:
            raise ConfigError("target needs either 'catalog' or 'metric'")

        comps = _require(cfg, "map", "configuration")
        if not isinstance(comps, list):
            raise ConfigError("map must be a list of expressions")
        phi = SmoothMap.from_strings([str(c) for c in comps], domain, target)

        orders = tuple(int(k) for k in cfg.get("orders", [2]))
        for k in orders:
            if not 1 <= k <= MAX_K:
                raise ConfigError(f"orders must lie in 1..{MAX_K}, got {k}")
        grid = cfg.get("grid", {})
        samples = cfg.get("samples", {})
        nodes = int(grid.get("nodes", DEFAULT_NODES))
        count = int(samples.get("count", 50))
        seed = int(samples.get("seed", 0))
        if count < 0:
            raise ConfigError("samples.count must be nonnegative")

        omega = None
        if cfg.get("omega") is not None:
            rows = [[str(e) for e in row] for row in cfg["omega"]]
            if len(rows) != m:
                raise ConfigError("omega must be an m x m matrix")
            omega = ExprMetric.from_strings(rows, "x")

        diffeo = None
        if cfg.get("diffeo") is not None:
            from .variation import Diffeo

            d = cfg["diffeo"]
            diffeo = Diffeo.from_strings([str(e) for e in _require(d, "forward", "diffeo")],
                                         d.get("inverse"), domain)

        flow = None
        if cfg.get("flow") is not None:
            f = cfg["flow"]
            flow = FlowConfig(float(f.get("eta", 1.0)), int(f.get("max_steps", 10_000)), float(f.get("tol", 1e-6)),
                              f.get("modes"), f.get("k"))
        return cls(domain, target, phi, orders, nodes, count, seed, omega, diffeo, flow, cfg)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    def points(self) -> np.ndarray:
        return sample_points(self.domain, self.sample_count, self.seed)

    def grid(self) -> QuadratureGrid:
        return QuadratureGrid(self.domain, self.nodes)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ReportRow:
    check: str
    k: int
    where: str
    residual: float
    scale: float
    tolerance: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.relative)) and self.relative <= self.tolerance


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, check: str, k: int, where: str, residual: float, scale: float, tolerance: float | None = None):
        tol = TOLERANCES[check] if tolerance is None else tolerance
        self.rows.append(ReportRow(check, k, where, float(residual), float(scale), tol))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[ReportRow]:
        return [r for r in self.rows if not r.passed]


def _fmt(v: float) -> str:
    return repr(float(v))


def _where(x: np.ndarray) -> str:
    return "x=" + ";".join(_fmt(c) for c in np.atleast_1d(x))


def emit_report(report: Report, fmt: str = "csv") -> bytes:
    """Serialize a report; CSV columns are fixed, text is a summary with the worst rows."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.rows:
            w.writerow([r.check, r.k, r.where, _fmt(r.residual), _fmt(r.scale), _fmt(r.relative),
                        _fmt(r.tolerance), "pass" if r.passed else "fail"])
        return buf.getvalue().encode()
    if fmt == "text":
        lines = []
        fails = report.failures()
        lines.append(f"{len(report.rows)} checks, {len(fails)} failed")
        groups: dict[tuple[str, int], list[ReportRow]] = {}
        for r in report.rows:
            groups.setdefault((r.check, r.k), []).append(r)
        for (check, k), rows in groups.items():
            worst = max(rows, key=lambda r: r.relative / r.tolerance)
            status = "ok" if all(r.passed for r in rows) else "FAIL"
            lines.append(f"  {status:4s} {check:22s} k={k} rows={len(rows):4d} worst relative "
                         f"{worst.relative:.3e} (tol {worst.tolerance:.0e}) at {worst.where}")
        if fails:
            lines.append("worst offenders:")
            for r in sorted(fails, key=lambda r: -r.relative / r.tolerance)[:5]:
                lines.append(f"  {r.check} k={r.k} {r.where}: relative {r.relative:.3e} > {r.tolerance:.0e}")
        return ("\n".join(lines) + "\n").encode()
    raise ConfigError(f"unknown report format {fmt!r}")


# --------------------------------------------------------------------------
# verification


def _pointwise(config: RunConfig, report: Report, k: int, pts: np.ndarray) -> None:
    if len(pts) == 0:
        return
    cons = conservation_check(config.map, pts, k)
    res = np.max(np.abs(cons.residual), axis=0)
    for p, r, s in zip(pts, res, cons.scale):
        report.add("conservation", k, _where(p), r, s)

    pb = Pullback(config.map, pts, max(required_order(k, "stress"), 1))
    tower = None if k == 1 else pb.tower(k - 2, last_gradient=True)
    contracted = trace_contracted(stress_k(tower, pb, k), pb)
    closed = trace_closed_form(tower, pb, k)
    scale = trace_scale(tower, pb, k)
    for p, a, b, s in zip(pts, contracted, closed, scale):
        report.add("trace_pointwise", k, _where(p), abs(a - b), s)


def integrated_trace(config: RunConfig, k: int, grid: QuadratureGrid) -> tuple[float, float, float]:
    """``(int tr S_k dV, (m/2 - k) E_k, E_k)``."""
    dens = np.empty(len(grid.points))
    order = max(required_order(k, "stress"), 1)
    for sl, pts in grid.chunks():
        pb = Pullback(config.map, pts, order)
        tower = None if k == 1 else pb.tower(k - 2, last_gradient=True)
        dens[sl] = trace_contracted(stress_k(tower, pb, k), pb)
    lhs = grid.integrate(dens)
    e = energy(config.map, k, grid)
    return lhs, integrated_trace_factor(config.domain.dim, k) * e, e


def verify(config: RunConfig) -> Report:
    """Run every check the configuration enables."""
    from .variation import diffeo_invariance_report, first_variation_check

    report = Report()
    pts = config.points()
    grid = config.grid() if config.domain.fully_periodic else None
    for k in config.orders:
        _pointwise(config, report, k, pts)
        if grid is None:
            continue
        lhs, rhs, e = integrated_trace(config, k, grid)
        report.add("trace_integrated", k, "integral", abs(lhs - rhs), max(abs(lhs), abs(rhs), abs(e)))
        if config.omega is not None:
            fv = first_variation_check(config.map, k, config.omega, grid)
            report.add("first_variation", k, "integral", fv.residual, fv.scale)
        if config.diffeo is not None:
            inv = diffeo_invariance_report(config.map, config.diffeo, k, grid, pts)
            for name, r, s, _ in inv.rows():
                report.add(f"invariance_{name}", k, "integral" if name == "energy" else "max over samples", r, s)
    return report


def energies(config: RunConfig, orders: Iterable[int]) -> dict[int, float]:
    grid = config.grid()
    return {k: energy(config.map, k, grid) for k in orders}
