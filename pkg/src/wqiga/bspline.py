"""Univariate B-spline spaces on open knot vectors.

Function indices are 0-based throughout. Knot vectors live on [0, 1] and
have maximal regularity (simple interior knots). Evaluation on a knot takes
the right limit, except at x = 1 where the left limit is used.
"""
from dataclasses import dataclass
from functools import cached_property, reduce
import operator

import numpy as np


class KnotVector:
    """Open knot vector of degree `p` with simple interior knots.

    Args:
        p (int): spline degree, at least 1.
        breakpoints (array_like): strictly increasing distinct knots,
            starting at 0 and ending at 1.
    """

    def __init__(self, p, breakpoints):
        p = int(p)
        if p < 1:
            raise ValueError('degree must be at least 1, got %d' % p)
        chi = np.asarray(breakpoints, dtype=float)
        if chi.ndim != 1 or len(chi) < 2:
            raise ValueError('need at least two breakpoints')
        if np.any(np.diff(chi) <= 0):
            raise ValueError('breakpoints must be strictly increasing')
        if chi[0] != 0.0 or chi[-1] != 1.0:
            raise ValueError('breakpoints must span [0, 1], got [%g, %g]'
                             % (chi[0], chi[-1]))
        self.p = p
        self.breakpoints = chi
        self.knots = np.concatenate([np.repeat(chi[0], p), chi,
                                     np.repeat(chi[-1], p)])

    @classmethod
    def uniform(cls, p, nel):
        return cls(p, np.linspace(0.0, 1.0, nel + 1))

    @classmethod
    def from_knots(cls, knots, p):
        """Build from an explicit open knot list, validating its structure."""
        knots = np.asarray(knots, dtype=float)
        chi, mult = np.unique(knots, return_counts=True)
        if mult[0] != p + 1 or mult[-1] != p + 1:
            raise ValueError('end knots must be repeated exactly p+1 times')
        if np.any(mult[1:-1] != 1):
            raise ValueError('interior knots must be simple (maximal regularity)')
        return cls(p, chi)

    @property
    def nel(self):
        return len(self.breakpoints) - 1

    @property
    def ndof(self):
        return len(self.knots) - self.p - 1

    @property
    def nknots(self):
        return len(self.knots)

    @property
    def h(self):
        """Maximal knot-span length."""
        return float(np.max(np.diff(self.breakpoints)))

    def support(self, i):
        """Closed support interval of function `i`."""
        return self.knots[i], self.knots[i + self.p + 1]

    def find_spans(self, x, side='right'):
        """Index of the knot span containing each point (as index into knots).

        ``side='left'`` assigns a point on an interior knot to the span on its
        left, giving left limits of the piecewise polynomials.
        """
        x = np.asarray(x, dtype=float)
        span = np.searchsorted(self.knots, x, side=side) - 1
        return np.clip(span, self.p, self.ndof - 1)

    def __repr__(self):
        return 'KnotVector(p=%d, nel=%d)' % (self.p, self.nel)


def _check_domain(x):
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError('evaluation points must lie in [0, 1]')


def basis_and_derivs(kv, x, side='right'):
    """Evaluate all nonzero basis functions and first derivatives at points.

    Triangular Cox-de Boor recursion, vectorized over the points.

    Returns:
        tuple: ``(first, values, derivs)`` where ``first`` has shape ``(n,)``
        and holds the index of the first nonzero function at each point, and
        ``values``, ``derivs`` have shape ``(n, p+1)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(x)
    p, t = kv.p, kv.knots
    span = kv.find_spans(x, side)
    n = len(x)
    left = np.empty((n, p + 1))
    right = np.empty((n, p + 1))
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    lower = None
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        if j == p:
            lower = N[:, :p].copy()
        saved = np.zeros(n)
        for r in range(j):
            tmp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * tmp
            saved = left[:, j - r] * tmp
        N[:, j] = saved
    # derivative from the degree p-1 values on the same span
    D = np.zeros((n, p + 1))
    for r in range(p):
        idx = span - p + 1 + r
        denom = t[idx + p] - t[idx]
        term = p * lower[:, r] / denom
        D[:, r + 1] += term
        D[:, r] -= term
    return span - p, N, D


def nonzero_basis_at(kv, x):
    """Nonzero basis values and derivatives at a single point."""
    first, vals, ders = basis_and_derivs(kv, [x])
    return int(first[0]), vals[0], ders[0]


def _eval_single(kv, i, x, deriv):
    if not 0 <= i < kv.ndof:
        raise IndexError('function index %d out of range [0, %d)' % (i, kv.ndof))
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    first, vals, ders = basis_and_derivs(kv, x.ravel())
    table = ders if deriv else vals
    r = i - first
    ok = (r >= 0) & (r <= kv.p)
    out = np.where(ok, table[np.arange(len(r)), np.clip(r, 0, kv.p)], 0.0)
    return float(out[0]) if scalar else out.reshape(x.shape)


def eval_basis(kv, i, x):
    """Value of the `i`-th B-spline at `x` (scalar or array)."""
    return _eval_single(kv, i, x, False)


def eval_basis_deriv(kv, i, x):
    """First derivative of the `i`-th B-spline at `x` (scalar or array)."""
    return _eval_single(kv, i, x, True)


def collocation(kv, x, deriv=0, side='right'):
    """Dense matrix ``(len(x), ndof)`` of basis values (or derivatives) at `x`."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    first, vals, ders = basis_and_derivs(kv, x, side)
    table = ders if deriv else vals
    A = np.zeros((len(x), kv.ndof))
    rows = np.repeat(np.arange(len(x)), kv.p + 1)
    cols = (first[:, None] + np.arange(kv.p + 1)).ravel()
    A[rows, cols] = table.ravel()
    return A


@dataclass(frozen=True)
class IndexSets:
    """Locality bookkeeping of a univariate space.

    ``spans[i]`` holds the knot-span (element) indices inside the support of
    function `i`; ``interactions[i]`` holds the functions `j` whose product
    with function `i` does not vanish identically. Both are sorted arrays.
    """
    spans: tuple
    interactions: tuple

    @property
    def nnz(self):
        return sum(len(I) for I in self.interactions)


def build_index_sets(kv):
    p, n, nel = kv.p, kv.ndof, kv.nel
    # function i lives on elements max(0, i-p) .. min(i, nel-1)
    first_el = np.maximum(np.arange(n) - p, 0)
    last_el = np.minimum(np.arange(n), nel - 1)
    spans = tuple(np.arange(a, b + 1) for a, b in zip(first_el, last_el))
    interactions = tuple(
        np.flatnonzero((first_el <= last_el[i]) & (last_el >= first_el[i]))
        for i in range(n))
    return IndexSets(spans, interactions)


class SplineSpace:
    """Tensor-product spline space, one :class:`KnotVector` per direction.

    Multi-indices are linearized with the first direction running fastest.
    """

    def __init__(self, kvs):
        if isinstance(kvs, KnotVector):
            kvs = (kvs,)
        self.kvs = tuple(kvs)

    @classmethod
    def uniform(cls, p, nel, d):
        return cls([KnotVector.uniform(p, nel) for _ in range(d)])

    @property
    def dim(self):
        return len(self.kvs)

    @property
    def shape(self):
        return tuple(kv.ndof for kv in self.kvs)

    @property
    def ndof(self):
        return reduce(operator.mul, self.shape, 1)

    @property
    def nel(self):
        return reduce(operator.mul, (kv.nel for kv in self.kvs), 1)

    @cached_property
    def index_sets(self):
        return tuple(build_index_sets(kv) for kv in self.kvs)

    def linear_index(self, multi):
        return np.ravel_multi_index(tuple(multi), self.shape, order='F')

    def multi_index(self, lin):
        return np.unravel_index(lin, self.shape, order='F')
