"""Truncated multivariate Taylor polynomials ("jets").

A :class:`Jet` stores the Taylor coefficients of a scalar function around a
point, for every multi-index of total degree at most ``order``.  Coefficients
are laid out graded-lexicographically: degree 0 first, then degree 1 with
``x1`` before ``x2``, and so on.  Because the layout is graded, truncating to a
lower order is a prefix slice.

Coefficient arrays carry optional trailing *batch* axes, so one jet can hold
the expansions of the same expression around many points at once.  All
arithmetic broadcasts over the batch.

Differentiating a jet lowers its order by one.  When two jets of different
order meet in an arithmetic operation the result is truncated to the lower
order, which is the only order at which the product is actually known.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, JetOrderError

MAX_VARS = 4
MAX_ORDER = 12


# --------------------------------------------------------------------------
# index tables


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def multi_indices(num_vars: int, order: int) -> np.ndarray:
    """All multi-indices of degree <= order, graded-lex, shape (ncoef, num_vars)."""
    rows = [c for d in range(order + 1) for c in _compositions(d, num_vars)]
    out = np.array(rows, dtype=np.int64).reshape(len(rows), num_vars)
    out.setflags(write=False)
    return out


def num_coeffs(num_vars: int, order: int) -> int:
    return math.comb(num_vars + order, order)


def _codes(mi: np.ndarray, base: int) -> np.ndarray:
    weights = base ** np.arange(mi.shape[1], dtype=np.int64)
    return mi @ weights


@lru_cache(maxsize=None)
def _lookup(num_vars: int, order: int):
    mi = multi_indices(num_vars, order)
    codes = _codes(mi, 2 * order + 2)
    perm = np.argsort(codes)
    return codes[perm], perm


def _index_of(num_vars: int, order: int, targets: np.ndarray) -> np.ndarray:
    sorted_codes, perm = _lookup(num_vars, order)
    pos = np.searchsorted(sorted_codes, _codes(targets, 2 * order + 2))
    return perm[pos]


@lru_cache(maxsize=None)
def _mul_table(num_vars: int, order: int):
    mi = multi_indices(num_vars, order)
    deg = mi.sum(axis=1)
    a, b = np.nonzero(deg[:, None] + deg[None, :] <= order)
    k = _index_of(num_vars, order, mi[a] + mi[b])
    perm = np.lexsort((b, k))
    a, b, k = a[perm], b[perm], k[perm]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return a, b, starts


@lru_cache(maxsize=None)
def _deriv_table(num_vars: int, order: int, var: int):
    lower = multi_indices(num_vars, order - 1)
    shifted = lower.copy()
    shifted[:, var] += 1
    src = _index_of(num_vars, order, shifted)
    factor = shifted[:, var].astype(float)
    return src, factor


@lru_cache(maxsize=None)
def _factorials(num_vars: int, order: int) -> np.ndarray:
    mi = multi_indices(num_vars, order)
    return np.array([math.prod(math.factorial(int(e)) for e in row) for row in mi], dtype=float)


# --------------------------------------------------------------------------
# the jet type


class Jet:
    """Truncated Taylor polynomial of a scalar function of ``num_vars`` variables."""

    __slots__ = ("coeffs", "num_vars", "order")
    __array_priority__ = 100.0

    def __init__(self, coeffs, num_vars: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if not 1 <= num_vars <= MAX_VARS:
            raise ValueError(f"num_vars must be in 1..{MAX_VARS}, got {num_vars}")
        if not 0 <= order <= MAX_ORDER:
            raise JetOrderError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
        if coeffs.ndim == 0 or coeffs.shape[0] != num_coeffs(num_vars, order):
            raise ValueError(
                f"expected {num_coeffs(num_vars, order)} coefficients for "
                f"num_vars={num_vars}, order={order}"
            )
        self.coeffs = coeffs
        self.num_vars = num_vars
        self.order = order

    def __repr__(self) -> str:
        return f"Jet(num_vars={self.num_vars}, order={self.order}, batch={self.batch_shape})"

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray | float:
        v = self.coeffs[0]
        return float(v) if v.ndim == 0 else v

    def coeff(self, beta: Sequence[int]):
        beta = np.asarray(beta, dtype=np.int64).reshape(1, self.num_vars)
        if beta.min() < 0 or beta.sum() > self.order:
            raise JetOrderError(f"multi-index {tuple(beta[0])} exceeds order {self.order}")
        return self.coeffs[_index_of(self.num_vars, self.order, beta)[0]]

    def partial(self, beta: Sequence[int]):
        """Mixed partial derivative at the expansion point."""
        c = self.coeff(beta)
        return c * math.prod(math.factorial(int(b)) for b in beta)

    def partials(self) -> np.ndarray:
        """All partial derivatives, in coefficient layout."""
        f = _factorials(self.num_vars, self.order)
        return self.coeffs * f.reshape((-1,) + (1,) * len(self.batch_shape))

    def truncate(self, order: int) -> Jet:
        if order == self.order:
            return self
        if order > self.order or order < 0:
            raise JetOrderError(f"cannot truncate order-{self.order} jet to order {order}")
        return Jet(self.coeffs[: num_coeffs(self.num_vars, order)], self.num_vars, order)

    def derivative(self, var: int) -> Jet:
        """Jet of the partial derivative in variable ``var``; order drops by one."""
        if not 0 <= var < self.num_vars:
            raise IndexError(f"variable index {var} out of range")
        if self.order == 0:
            raise JetOrderError("jet order exhausted: cannot differentiate an order-0 jet")
        src, factor = _deriv_table(self.num_vars, self.order, var)
        fac = factor.reshape((-1,) + (1,) * len(self.batch_shape))
        return Jet(self.coeffs[src] * fac, self.num_vars, self.order - 1)

    def without_constant(self) -> Jet:
        c = self.coeffs.copy()
        c[0] = 0.0
        return Jet(c, self.num_vars, self.order)

    # -- arithmetic ---------------------------------------------------------

    def _align(self, other: Jet) -> tuple[Jet, Jet]:
        if other.num_vars != self.num_vars:
            raise ValueError(f"jet num_vars mismatch: {self.num_vars} vs {other.num_vars}")
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        nd = max(a.coeffs.ndim, b.coeffs.ndim)
        return a._lifted(nd), b._lifted(nd)

    def _lifted(self, ndim: int) -> Jet:
        # left-pad batch axes so numpy aligns batch dims, not the coefficient axis
        c = self.coeffs
        if c.ndim >= ndim:
            return self
        c = c.reshape(c.shape[:1] + (1,) * (ndim - c.ndim) + c.shape[1:])
        return Jet(c, self.num_vars, self.order)

    def _scalar(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float)

    def __neg__(self) -> Jet:
        return Jet(-self.coeffs, self.num_vars, self.order)

    def __pos__(self) -> Jet:
        return self

    def __add__(self, other) -> Jet:
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs + b.coeffs, a.num_vars, a.order)
        s = self._scalar(other)
        shape = np.broadcast_shapes(self.batch_shape, s.shape)
        c = np.array(np.broadcast_to(self.coeffs, self.coeffs.shape[:1] + shape))
        c[0] += s
        return Jet(c, self.num_vars, self.order)

    __radd__ = __add__

    def __sub__(self, other) -> Jet:
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs - b.coeffs, a.num_vars, a.order)
        return self + (-self._scalar(other))

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __mul__(self, other) -> Jet:
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(_mul_coeffs(a.coeffs, b.coeffs, a.num_vars, a.order), a.num_vars, a.order)
        s = self._scalar(other)
        return Jet(self._lifted(s.ndim + 1).coeffs * s, self.num_vars, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if isinstance(other, Jet):
            return self * reciprocal(other)
        s = self._scalar(other)
        if np.any(s == 0):
            raise DomainError("division by zero")
        return Jet(self._lifted(s.ndim + 1).coeffs / s, self.num_vars, self.order)

    def __rtruediv__(self, other) -> Jet:
        return reciprocal(self) * other

    def __pow__(self, exponent) -> Jet:
        if isinstance(exponent, (int, np.integer)):
            return integer_power(self, int(exponent))
        return pow_real(self, float(exponent))


def _mul_coeffs(a: np.ndarray, b: np.ndarray, num_vars: int, order: int) -> np.ndarray:
    if order == 0:
        return a * b
    ia, ib, starts = _mul_table(num_vars, order)
    return np.add.reduceat(a[ia] * b[ib], starts, axis=0)


# --------------------------------------------------------------------------
# constructors


def jet_constant(value, num_vars: int, order: int) -> Jet:
    value = np.asarray(value, dtype=float)
    c = np.zeros((num_coeffs(num_vars, order),) + value.shape)
    c[0] = value
    return Jet(c, num_vars, order)


def jet_variable(index: int, value, num_vars: int, order: int) -> Jet:
    """The coordinate function ``x^index`` expanded around ``value``."""
    if not 0 <= index < num_vars:
        raise IndexError(f"variable index {index} out of range for {num_vars} variables")
    j = jet_constant(value, num_vars, order)
    if order >= 1:
        j.coeffs[1 + index] = 1.0
    return j


def jet_variables(point, order: int) -> list[Jet]:
    """Coordinate jets for every component of ``point`` (last axis = coordinates)."""
    point = np.asarray(point, dtype=float)
    if point.ndim == 0:
        point = point.reshape(1)
    nv = point.shape[-1]
    return [jet_variable(i, point[..., i], nv, order) for i in range(nv)]


# --------------------------------------------------------------------------
# univariate composition


def _compose_series(a: Jet, coeffs: list) -> Jet:
    """Evaluate sum_n coeffs[n] * (a - a0)**n by Horner's rule."""
    t = a.without_constant()
    out = jet_constant(coeffs[a.order], a.num_vars, a.order) if a.order > 0 else None
    if out is None:
        return jet_constant(coeffs[0], a.num_vars, 0)
    for n in range(a.order - 1, -1, -1):
        out = out * t + coeffs[n]
    return out


def reciprocal(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 == 0):
        raise DomainError("division by a jet with zero constant term")
    inv = 1.0 / a0
    coeffs = [(-1.0) ** n * inv ** (n + 1) for n in range(a.order + 1)]
    return _compose_series(a, coeffs)


def integer_power(a: Jet, n: int) -> Jet:
    if n < 0:
        return integer_power(reciprocal(a), -n)
    result = jet_constant(np.ones(a.batch_shape), a.num_vars, a.order)
    base = a
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def exp(a: Jet) -> Jet:
    e = np.exp(a.coeffs[0])
    return _compose_series(a, [e / math.factorial(n) for n in range(a.order + 1)])


def sin(a: Jet) -> Jet:
    s, c = np.sin(a.coeffs[0]), np.cos(a.coeffs[0])
    cycle = (s, c, -s, -c)
    return _compose_series(a, [cycle[n % 4] / math.factorial(n) for n in range(a.order + 1)])


def cos(a: Jet) -> Jet:
    s, c = np.sin(a.coeffs[0]), np.cos(a.coeffs[0])
    cycle = (c, -s, -c, s)
    return _compose_series(a, [cycle[n % 4] / math.factorial(n) for n in range(a.order + 1)])


def log(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise DomainError("log of a jet with non-positive constant term")
    coeffs = [np.log(a0)] + [(-1.0) ** (n + 1) / (n * a0**n) for n in range(1, a.order + 1)]
    return _compose_series(a, coeffs)


def pow_real(a: Jet, p: float) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise DomainError(f"real power {p} of a jet with non-positive constant term")
    coeffs = []
    binom = 1.0
    for n in range(a.order + 1):
        coeffs.append(binom * a0 ** (p - n))
        binom *= (p - n) / (n + 1)
    return _compose_series(a, coeffs)


def sqrt(a: Jet) -> Jet:
    return pow_real(a, 0.5)


ELEMENTARY: dict[str, Callable[..., Jet]] = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "pow_real": pow_real,
}


# --------------------------------------------------------------------------
# functional surface


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    """Strict binary arithmetic: both jets must share num_vars and order."""
    if a.num_vars != b.num_vars or a.order != b.order:
        raise ValueError(
            f"jet shape mismatch: ({a.num_vars}, {a.order}) vs ({b.num_vars}, {b.order})"
        )
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown jet operation {op!r}")


def jet_elementary(name: str, a: Jet, p: float | None = None) -> Jet:
    try:
        fn = ELEMENTARY[name]
    except KeyError:
        raise ValueError(f"unknown elementary function {name!r}") from None
    if name == "pow_real":
        if p is None:
            raise ValueError("pow_real needs an exponent")
        return fn(a, p)
    return fn(a)


def extract_partial(a: Jet, beta: Sequence[int]):
    return a.partial(beta)


def compose_many(polys: Sequence[Jet], deltas: Sequence[Jet]) -> list[Jet]:
    """Substitute nilpotent jets into Taylor polynomials.

    Each ``poly`` is a jet in ``len(deltas)`` variables, expanded around some
    base point ``y0``; each ``delta`` is a jet (in other variables) of
    ``y - y0`` with zero constant term.  Returns the jets of ``poly(y)``.
    """
    ny = len(deltas)
    if any(p.num_vars != ny for p in polys):
        raise ValueError("polynomial variable count must equal the number of substituted jets")
    nx = deltas[0].num_vars
    order = min(min(d.order for d in deltas), min(p.order for p in polys))
    deltas = [d.truncate(order) for d in deltas]
    if any(np.any(d.coeffs[0] != 0) for d in deltas):
        raise ValueError("substituted jets must have zero constant term")
    mi = multi_indices(ny, order)
    batch = np.broadcast_shapes(*(d.batch_shape for d in deltas), *(p.batch_shape for p in polys))
    monos: list[Jet] = [jet_constant(np.ones(batch), nx, order)]
    for row in mi[1:]:
        v = int(np.flatnonzero(row)[0])
        parent = row.copy()
        parent[v] -= 1
        idx = _index_of(ny, order, parent.reshape(1, -1))[0]
        monos.append(monos[idx] * deltas[v])
    nb = len(batch) + 1
    stack = np.stack([np.broadcast_to(m._lifted(nb).coeffs, m.coeffs.shape[:1] + batch) for m in monos])
    out = []
    for p in polys:
        pc = p.truncate(order)._lifted(nb).coeffs
        out.append(Jet(np.einsum("p...,px...->x...", pc, stack), nx, order))
    return out


def compose(poly: Jet, deltas: Sequence[Jet]) -> Jet:
    return compose_many([poly], deltas)[0]
