"""Weighted quadrature rules for univariate B-spline spaces.

For each test function `i` four rules are built on one global point grid.
The tag ``(a, b)`` names the derivative order of the test function (`a`,
folded into the weights) and of the trial function (`b`, sampled at the
points). Rule ``(a, b)`` of row `i` integrates ``D^b B_j`` exactly against
``D^a B_i`` for every interacting `j`.

The trial derivatives of a row sum to zero, so the ``b = 1`` systems keep
one free direction. On interior rows the minimum-norm choice alone drops a
degree of polynomial exactness for even `p`, which costs one order of L2
convergence. Interior ``b = 1`` rules therefore also use the two knots that
bound the support, and spend the free directions on integrating the local
monomials of degree `p` to `p+2`; minimum norm decides what is left.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .bspline import basis_and_derivs, build_index_sets, collocation

DERIV_PAIRS = ((0, 0), (1, 0), (0, 1), (1, 1))

# relative singular-value cutoff of the minimum-norm solve; the trial-value
# matrices reach condition numbers near 1e13 at p=8 on non-uniform knots
RANK_TOL = 1e-14
# exactness residual accepted by solve_weights, relative to max(1, |rhs|)
RESIDUAL_TOL = 1e-11
_DEDUP_TOL = 1e-14
# extra monomial degrees, relative to p, targeted by the b = 1 families
_EXTRA_DEGREES = (0, 1, 2)
# relative cutoff of the monomial fit; on symmetric rows one target is
# redundant and leaves a round-off singular value
FIT_RCOND = 1e-8


class SingularSystem(np.linalg.LinAlgError):
    """Exactness system for a weight family has no solution."""

    def __init__(self, direction, index, a, b, detail=''):
        self.direction, self.index, self.a, self.b = direction, index, a, b
        super().__init__('exactness system not solvable for direction %d, '
                         'function %d, rule (%d,%d)%s'
                         % (direction, index, a, b, detail))


@dataclass(frozen=True)
class PointGrid:
    """Global quadrature points of one direction and per-function active sets.

    ``active[i]`` holds the points of the open support of function `i` (the
    closed support when it touches a boundary span). ``extended[i]`` adds
    the two knots that bound an interior support; weight vectors are stored
    on it, and rules that sample trial values put zero weight on the extra
    points.
    """
    points: np.ndarray
    active: tuple
    extended: tuple

    @property
    def npts(self):
        return len(self.points)

    def value_mask(self, i):
        """Flags of ``extended[i]`` that belong to ``active[i]``."""
        return np.isin(self.extended[i], self.active[i])


def _dedup(x):
    x = np.sort(x)
    keep = np.concatenate([[True], np.diff(x) > _DEDUP_TOL])
    return x[keep]


def build_point_grid(kv):
    """Knots and midpoints of interior spans, p+1 equispaced points on boundary spans.

    Boundary-span points include both span endpoints. Functions whose support
    touches a boundary span take the points of their closed support as the
    active set: the open one can hold fewer points than there are exactness
    conditions, and the extra points markedly improve the conditioning of
    the weight systems.
    """
    chi, p, nel = kv.breakpoints, kv.p, kv.nel
    pts = [chi]
    for e in range(nel):
        a, b = chi[e], chi[e + 1]
        if e == 0 or e == nel - 1:
            pts.append(np.linspace(a, b, p + 1))
        else:
            pts.append([0.5 * (a + b)])
    x = _dedup(np.concatenate(pts))
    x[0], x[-1] = 0.0, 1.0

    sets = build_index_sets(kv)
    active, extended = [], []
    for i in range(kv.ndof):
        lo, hi = kv.support(i)
        spans = sets.spans[i]
        closed = np.flatnonzero((x >= lo) & (x <= hi))
        if spans[0] == 0 or spans[-1] == nel - 1:
            active.append(closed)
        else:
            active.append(np.flatnonzero((x > lo) & (x < hi)))
        extended.append(closed)
    return PointGrid(x, tuple(active), tuple(extended))


@dataclass(frozen=True)
class GaussRule:
    """Element-wise Gauss-Legendre rule: ``points`` and ``weights`` of shape (nel, g)."""
    points: np.ndarray
    weights: np.ndarray

    @property
    def g(self):
        return self.points.shape[1]


def gauss_rule(kv, points_per_span):
    if points_per_span < 1:
        raise ValueError('need at least one point per span')
    xg, wg = np.polynomial.legendre.leggauss(points_per_span)
    a, b = kv.breakpoints[:-1, None], kv.breakpoints[1:, None]
    pts = 0.5 * (a + b) + 0.5 * (b - a) * xg
    wts = 0.5 * (b - a) * wg
    return GaussRule(pts, wts)


@dataclass(frozen=True)
class ExactIntegralTable:
    """``table[(a, b)][i, j]`` is the integral of ``D^a B_i * D^b B_j`` on [0, 1]."""
    table: dict

    def __getitem__(self, ab):
        return self.table[ab]


def exact_integrals(kv, sets=None):
    """Exact univariate integrals by element-wise Gauss with p+1 points."""
    p, n = kv.p, kv.ndof
    rule = gauss_rule(kv, p + 1)
    first, vals, ders = basis_and_derivs(kv, rule.points.ravel())
    w = rule.weights.ravel()
    # local functions are first .. first+p on every point of an element
    first = first.reshape(kv.nel, -1)[:, 0]
    vals = vals.reshape(kv.nel, -1, p + 1)
    ders = ders.reshape(kv.nel, -1, p + 1)
    wk = w.reshape(kv.nel, -1)
    fam = {0: vals, 1: ders}
    out = {}
    for a, b in DERIV_PAIRS:
        loc = np.einsum('eg,egi,egj->eij', wk, fam[a], fam[b])
        M = np.zeros((n, n))
        for e in range(kv.nel):
            f = first[e]
            M[f:f + p + 1, f:f + p + 1] += loc[e]
        out[(a, b)] = M
    return ExactIntegralTable(out)


def min_norm_solve(A, rhs):
    """Minimum Euclidean-norm least-squares solution via the SVD.

    Returns ``(x, rank)``.
    """
    x, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=RANK_TOL)
    return x, rank


def completed_solve(A, rhs, P, target, rank=None):
    """Solve ``A x = rhs`` exactly, then fit ``P x ~ target`` in the null space of `A`.

    Among all solutions of the first system, the returned one minimizes
    ``|P x - target|`` and, within those, the Euclidean norm. With a trivial
    null space this is :func:`min_norm_solve`.

    `rank` overrides the numerical rank when it is known structurally, so
    that a round-off singular value near the cutoff cannot change the
    dimension of the null space from row to row.

    Returns ``(x, rank)`` with the rank used.
    """
    U, s, Vt = np.linalg.svd(A)
    if rank is None:
        rank = int(np.count_nonzero(s > RANK_TOL * s[0])) if s.size else 0
    x = Vt[:rank].T @ ((U[:, :rank].T @ rhs) / s[:rank])
    N = Vt[rank:].T
    if N.shape[1] and P.shape[0]:
        z, *_ = np.linalg.lstsq(P @ N, target - P @ x, rcond=FIT_RCOND)
        x = x + N @ z
    return x, rank


def trial_tables(kv, x):
    """Basis values and derivatives at `x`, the latter as the mean of both one-sided limits.

    Derivatives of degree-1 splines jump at the knots; the mean is the
    natural sample there and coincides with either limit for p >= 2.
    """
    D0 = collocation(kv, x, 0)
    D1 = 0.5 * (collocation(kv, x, 1, 'right') + collocation(kv, x, 1, 'left'))
    return D0, D1


def _monomial_moments(kv, x):
    """Sampled local monomials and their exact moments against every ``D^a B_i``.

    Monomials are centred and scaled on each support. Returns ``(P, m)`` with
    ``P[i]`` of shape ``(k, len(x))`` and ``m[a][i]`` of shape ``(k,)``.
    """
    p = kv.p
    rule = gauss_rule(kv, p + 2)
    xg, wg = rule.points.ravel(), rule.weights.ravel()
    Dg = collocation(kv, xg, 0), collocation(kv, xg, 1)
    degrees = [p + e for e in _EXTRA_DEGREES]
    P, m = [], ({}, {})
    for i in range(kv.ndof):
        lo, hi = kv.support(i)
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        P.append(np.array([((x - c) / h) ** k for k in degrees]))
        G = np.array([((xg - c) / h) ** k for k in degrees])
        for a in (0, 1):
            m[a][i] = G @ (wg * Dg[a][:, i])
    return P, m


@dataclass
class WqRule:
    """Weighted quadrature rules of one direction.

    ``weights[(a, b)][i]`` is the weight vector of row `i` on the points
    ``grid.points[grid.extended[i]]``.
    """
    kv: object
    grid: PointGrid
    sets: object
    integrals: ExactIntegralTable
    weights: dict
    basis: tuple       # dense (npts, ndof) collocation tables for D^0, D^1
    max_residual: float = 0.0

    @property
    def points(self):
        return self.grid.points

    def trial_matrix(self, i, b=0):
        """``(#I_i, #extended_i)`` matrix of ``D^b B_j`` at the points of row `i`."""
        return self.basis[b][np.ix_(self.grid.extended[i], self.sets.interactions[i])].T

    def dense_weights(self, ab):
        """Weights of all rows as a dense ``(ndof, npts)`` array, zero off the active sets."""
        W = np.zeros((self.kv.ndof, self.grid.npts))
        for i, w in enumerate(self.weights[ab]):
            W[i, self.grid.extended[i]] = w
        return W


def solve_weights(kv, grid=None, table=None, sets=None, direction=0):
    """Solve the exactness systems for all rows and all four weight families.

    Raises:
        SingularSystem: the trial-value matrix of a row is rank deficient, or
            the minimum-norm solution leaves a residual above tolerance.
    """
    grid = grid if grid is not None else build_point_grid(kv)
    sets = sets if sets is not None else build_index_sets(kv)
    table = table if table is not None else exact_integrals(kv, sets)
    basis = trial_tables(kv, grid.points)
    P, moments = _monomial_moments(kv, grid.points)
    weights = {ab: [] for ab in DERIV_PAIRS}
    worst = 0.0
    for i in range(kv.ndof):
        Q, I = grid.extended[i], sets.interactions[i]
        if len(grid.active[i]) < len(I):
            raise SingularSystem(direction, i, 0, 0, ': %d points for %d conditions'
                                 % (len(grid.active[i]), len(I)))
        m = grid.value_mask(i)
        # boundary rows hold many points and ill-conditioned monomial fits
        interior = not m.all()
        for a, b in DERIV_PAIRS:
            A = basis[b][np.ix_(Q, I)].T
            rhs = table[(a, b)][i, I]
            if b == 0:
                w = np.zeros(len(Q))
                w[m], rank = min_norm_solve(A[:, m], rhs)
            elif interior:
                # the trial derivatives sum to zero, one structural null
                # direction; for p = 1 the averaged jumps of the neighbours
                # outside I break that identity at the support ends
                w, rank = completed_solve(A, rhs, P[i][:, Q], moments[a][i],
                                          len(I) - 1 if kv.p > 1 else None)
            else:
                w, rank = min_norm_solve(A, rhs)
            if b == 0 and rank < len(I):
                raise SingularSystem(direction, i, a, b, ': rank %d < %d' % (rank, len(I)))
            res = np.max(np.abs(A @ w - rhs)) / max(1.0, np.max(np.abs(rhs)))
            if res > RESIDUAL_TOL:
                raise SingularSystem(direction, i, a, b, ': residual %.3g' % res)
            worst = max(worst, res)
            weights[(a, b)].append(w)
    return WqRule(kv, grid, sets, table, weights, basis, worst)


def exactness_residual(rule):
    """Largest absolute exactness defect over all rows, families and trial functions."""
    worst = 0.0
    for i in range(rule.kv.ndof):
        I = rule.sets.interactions[i]
        for a, b in DERIV_PAIRS:
            got = rule.trial_matrix(i, b) @ rule.weights[(a, b)][i]
            worst = max(worst, np.max(np.abs(got - rule.integrals[(a, b)][i, I])))
    return worst


def apply_rule(weights, values):
    """Weighted sum of sampled integrand values."""
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    if weights.shape != values.shape:
        raise ValueError('weights and values differ in length: %s vs %s'
                         % (weights.shape, values.shape))
    return float(weights @ values)


def dump_rules(rules, path):
    """Write points and weights of every row and family as CSV.

    Columns: ``l, i, a, b, q, x, w`` with 0-based direction `l`, row `i` and
    global point index `q`. Only points a family may use are listed.
    """
    with open(path, 'w', newline='') as f:
        out = csv.writer(f)
        out.writerow(['l', 'i', 'a', 'b', 'q', 'x', 'w'])
        for l, rule in enumerate(rules):
            x = rule.points
            for a, b in DERIV_PAIRS:
                for i, w in enumerate(rule.weights[(a, b)]):
                    Q = rule.grid.extended[i]
                    if b == 0:
                        m = rule.grid.value_mask(i)
                        Q, w = Q[m], w[m]
                    for q, wq in zip(Q, w):
                        out.writerow([l, i, a, b, int(q), repr(float(x[q])), repr(float(wq))])
