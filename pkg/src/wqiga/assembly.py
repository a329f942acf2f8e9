"""Row-loop weighted-quadrature assembly, the element-loop Gauss oracle, and CSR building.

WQ assembly computes every row block by sum factorization: the coefficient
values at the active points of the row are contracted direction by
direction, last direction first, with the matrices ``B^(l,i_l) W^(l,i_l)``
(trial values times row weights). Rows are independent; they are processed
in vectorized chunks of rows that share padded block shapes.
"""
import concurrent.futures
from dataclasses import dataclass, field
import functools
import itertools
import time

import numpy as np
import scipy.io
import scipy.sparse

from .bspline import SplineSpace, basis_and_derivs
from .geometry import (IdentityMap, eval_mass_coefficient_grid,
                       eval_stiffness_coefficient_grid)
from .quadrature import gauss_rule, solve_weights
from .tensor import mode_product_batched

CHUNK_ENTRIES = 1 << 22


class CsrBuilder:
    """Collects complete matrix rows in any order and emits a CSR matrix.

    Each row must be added exactly once; column lists must be strictly
    increasing. The result does not depend on the insertion order.
    """

    def __init__(self, nrows, ncols=None):
        self.shape = (nrows, nrows if ncols is None else ncols)
        self._chunks = []
        self._seen = np.zeros(nrows, dtype=bool)

    def add_row(self, i, cols, vals):
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if cols.shape != vals.shape or cols.ndim != 1:
            raise ValueError('row %d: columns and values differ in shape' % i)
        self.add_compact(np.array([i]), np.array([len(cols)]), cols, vals)

    def add_rows(self, rows, cols, vals, mask):
        """Add several rows given as padded ``(nb, K)`` blocks with a validity mask."""
        mask = np.asarray(mask, dtype=bool)
        self.add_compact(rows, mask.sum(axis=1), np.asarray(cols)[mask], np.asarray(vals)[mask])

    def add_compact(self, rows, counts, cols, vals):
        """Add rows whose entries are concatenated in row order; ``counts[k]`` per row."""
        rows = np.asarray(rows, dtype=np.int64)
        if np.any((rows < 0) | (rows >= self.shape[0])):
            raise IndexError('row index out of range')
        if len(np.unique(rows)) != len(rows) or np.any(self._seen[rows]):
            dup = rows[self._seen[rows]] if np.any(self._seen[rows]) else rows
            raise ValueError('duplicate row %d' % dup[0])
        counts = np.asarray(counts, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if counts.shape != rows.shape or cols.shape != vals.shape or counts.sum() != len(cols):
            raise ValueError('row counts do not match the number of entries')
        self._seen[rows] = True
        self._chunks.append((rows, counts, cols, vals))

    def finalize(self):
        if not np.all(self._seen):
            raise ValueError('missing row %d' % np.flatnonzero(~self._seen)[0])
        counts = np.zeros(self.shape[0], dtype=np.int64)
        for rows, cnt, _, _ in self._chunks:
            counts[rows] = cnt
        nnz = int(counts.sum())
        # the index type scipy would pick, so the constructor does not copy
        itype = np.int32 if max(nnz, *self.shape) < np.iinfo(np.int32).max else np.int64
        indptr = np.zeros(self.shape[0] + 1, dtype=itype)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(nnz, dtype=itype)
        data = np.empty(nnz)
        for rows, cnt, cols, vals in self._chunks:
            if len(rows) and np.all(np.diff(rows) == 1):
                dest = slice(indptr[rows[0]], indptr[rows[-1] + 1])
            else:
                start = np.repeat(indptr[rows] - np.cumsum(cnt) + cnt, cnt)
                dest = start + np.arange(len(cols))
            indices[dest] = cols
            data[dest] = vals
        if nnz and (indices.max() >= self.shape[1] or indices.min() < 0):
            raise IndexError('column index out of range')
        return scipy.sparse.csr_matrix((data, indices, indptr), shape=self.shape)


def build_sparse_from_rows(nrows, rows, ncols=None):
    """Build a CSR matrix from an iterable of ``(row, cols, vals)`` triples."""
    builder = CsrBuilder(nrows, ncols)
    for i, cols, vals in rows:
        cols = np.asarray(cols)
        if np.any(np.diff(cols) <= 0):
            raise ValueError('row %d: column indices not strictly increasing' % i)
        builder.add_row(i, cols, vals)
    return builder.finalize()


def sparsity_pattern(space):
    """CSR pattern whose row `i` holds exactly the interacting functions of `i`."""
    first, sizes = _interaction_bounds(space)
    n = space.ndof
    multi = space.multi_index(np.arange(n))
    counts = np.ones(n, dtype=np.int64)
    for l in range(space.dim):
        counts *= sizes[l][multi[l]]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, first, sizes


def _interaction_bounds(space):
    first = [np.array([I[0] for I in s.interactions]) for s in space.index_sets]
    sizes = [np.array([len(I) for I in s.interactions]) for s in space.index_sets]
    return first, sizes


# ---------------------------------------------------------------------------
# WQ assembly

@dataclass
class _Padded:
    """Padded per-direction row data: active points, interactions and the
    ``(n, Imax, Qmax)`` matrices ``B^(b) W^(a,b)`` of each weight family."""
    Q: np.ndarray
    Qlen: np.ndarray
    I: np.ndarray
    Ilen: np.ndarray
    BW: dict


def _pad_rule(rule):
    n = rule.kv.ndof
    act, inter = rule.grid.extended, rule.sets.interactions
    Qlen = np.array([len(q) for q in act])
    Ilen = np.array([len(I) for I in inter])
    Qm, Im = Qlen.max(), Ilen.max()
    Q = np.zeros((n, Qm), dtype=np.int64)
    I = np.zeros((n, Im), dtype=np.int64)
    BW = {}
    for i in range(n):
        Q[i, :Qlen[i]] = act[i]
        I[i, :Ilen[i]] = inter[i]
    for ab, ws in rule.weights.items():
        A = np.zeros((n, Im, Qm))
        for i in range(n):
            A[i, :Ilen[i], :Qlen[i]] = rule.trial_matrix(i, ab[1]) * ws[i]
        BW[ab] = A
    return _Padded(Q, Qlen, I, Ilen, BW)


@dataclass
class WqAssembler:
    """Precomputed WQ data of a tensor-product space (rules, padded row matrices)."""
    space: SplineSpace
    rules: list
    padded: list = field(default=None)

    @classmethod
    def build(cls, space):
        rules = [solve_weights(kv, direction=l) for l, kv in enumerate(space.kvs)]
        return cls(space, rules)

    def __post_init__(self):
        if self.padded is None:
            self.padded = [_pad_rule(r) for r in self.rules]

    @property
    def grid(self):
        return tuple(r.points for r in self.rules)

    @property
    def max_residual(self):
        return max(r.max_residual for r in self.rules)

    def row_flops(self, terms=1):
        """FLOPs of the sum-factorized row blocks (unpadded sizes), summed over rows."""
        d = self.space.dim
        multi = self.space.multi_index(np.arange(self.space.ndof))
        Qs = [p.Qlen[m] for p, m in zip(self.padded, multi)]
        Is = [p.Ilen[m] for p, m in zip(self.padded, multi)]
        shape = [q.astype(np.int64) for q in Qs]
        total = np.zeros(self.space.ndof, dtype=np.int64)
        for l in reversed(range(d)):
            total += 2 * Is[l] * np.prod(shape, axis=0)
            shape[l] = Is[l].astype(np.int64)
        return int(total.sum()) * terms


def _row_chunks(space, padded):
    vol = np.prod([p.Q.shape[1] for p in padded]) + np.prod([p.I.shape[1] for p in padded])
    step = max(1, CHUNK_ENTRIES // int(vol))
    n = space.ndof
    for start in range(0, n, step):
        rows = np.arange(start, min(n, start + step))
        yield rows, space.multi_index(rows)


def _gather(coeff, padded, multi):
    d = len(padded)
    idx = []
    for l in range(d):
        q = padded[l].Q[multi[l]]
        shape = [len(multi[l])] + [1] * d
        shape[l + 1] = q.shape[1]
        idx.append(q.reshape(shape))
    return coeff[tuple(idx)]


def _contract(C, padded, multi, families):
    for l in reversed(range(len(padded))):
        C = mode_product_batched(C, l, padded[l].BW[families[l]][multi[l]])
    return C


def _columns(space, padded, multi):
    """Padded column indices and validity mask, ascending linear order per row."""
    d = space.dim
    nb = len(multi[0])
    lin = np.zeros((nb,) + tuple(p.I.shape[1] for p in padded), dtype=np.int64)
    mask = np.ones_like(lin, dtype=bool)
    stride = 1
    for l in range(d):
        shape = [nb] + [1] * d
        shape[l + 1] = padded[l].I.shape[1]
        j = padded[l].I[multi[l]].reshape(shape)
        ok = (np.arange(padded[l].I.shape[1]) < padded[l].Ilen[multi[l]][:, None]).reshape(shape)
        lin = lin + stride * j
        mask = mask & ok
        stride *= space.shape[l]
    # first direction fastest: flatten with axes reversed
    order = (0,) + tuple(range(d, 0, -1))
    return lin.transpose(order).reshape(nb, -1), mask.transpose(order).reshape(nb, -1)


def _flatten_block(B, d):
    order = (0,) + tuple(range(d, 0, -1))
    return B.transpose(order).reshape(B.shape[0], -1)


def _stiffness_families(d, l, m):
    fam = []
    for k in range(d):
        if k == l == m:
            fam.append((1, 1))
        elif k == l:
            fam.append((1, 0))
        elif k == m:
            fam.append((0, 1))
        else:
            fam.append((0, 0))
    return fam


@dataclass
class Timings:
    products: float = 0.0
    sparse: float = 0.0
    flops: int = 0


def _row_blocks(space, padded, terms, chunk):
    rows, multi = chunk
    acc = None
    for coeff, fam in terms:
        R = _contract(_gather(coeff, padded, multi), padded, multi, fam)
        acc = R if acc is None else acc + R
    cols, mask = _columns(space, padded, multi)
    # compact triplets, as handed to the sparse constructor
    return rows, mask.sum(axis=1), cols[mask], _flatten_block(acc, space.dim)[mask]


def _assemble_wq(wq, terms, timings=None, threads=1):
    """Shared row loop. `terms` is a list of ``(coeff_grid, families)``."""
    space, padded = wq.space, wq.padded
    for coeff, _ in terms:
        expect = tuple(len(x) for x in wq.grid)
        if coeff.shape != expect:
            raise ValueError('coefficient grid has shape %s, expected %s' % (coeff.shape, expect))
    t0 = time.perf_counter()
    chunks = _row_chunks(space, padded)
    work = functools.partial(_row_blocks, space, padded, terms)
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(work, chunks))
    else:
        blocks = [work(c) for c in chunks]
    t1 = time.perf_counter()
    builder = CsrBuilder(space.ndof)
    for rows, counts, cols, vals in blocks:
        builder.add_compact(rows, counts, cols, vals)
    M = builder.finalize()
    t2 = time.perf_counter()
    if timings is not None:
        timings.products += t1 - t0
        timings.sparse += t2 - t1
        timings.flops += wq.row_flops(len(terms))
    return M


def assemble_mass_wq(wq, coeff, timings=None, threads=1):
    """Mass matrix by row-loop weighted quadrature.

    Args:
        wq (WqAssembler): rules of the space.
        coeff (ndarray): coefficient `c` on the full WQ point grid.
    """
    d = wq.space.dim
    return _assemble_wq(wq, [(np.asarray(coeff, dtype=float), [(0, 0)] * d)], timings, threads)


def assemble_stiffness_wq(wq, coeffs, timings=None, threads=1):
    """Stiffness matrix by row-loop weighted quadrature.

    `coeffs` has shape ``(d, d) + grid`` and holds ``c_{l,m}``; the `d**2`
    terms are accumulated per row before the sparse write.
    """
    d = wq.space.dim
    coeffs = np.asarray(coeffs, dtype=float)
    terms = [(coeffs[l, m], _stiffness_families(d, l, m))
             for l in range(d) for m in range(d)]
    return _assemble_wq(wq, terms, timings, threads)


# ---------------------------------------------------------------------------
# SGQ element-loop oracle

def _element_tables(kv, g):
    rule = gauss_rule(kv, g)
    first, vals, ders = basis_and_derivs(kv, rule.points.ravel())
    return (rule, first.reshape(kv.nel, g)[:, 0],
            vals.reshape(kv.nel, g, -1), ders.reshape(kv.nel, g, -1))


def _kron_all(mats):
    # first direction fastest in both rows and columns
    out = mats[0]
    for A in mats[1:]:
        out = np.kron(A, out)
    return out


def _assemble_sgq(space, geo, kind, g=None, reaction=None):
    d = space.dim
    geo = geo if geo is not None else IdentityMap(d)
    gs = [kv.p + 1 if g is None else g for kv in space.kvs]
    tabs = [_element_tables(kv, gl) for kv, gl in zip(space.kvs, gs)]
    grid = tuple(t[0].points.ravel() for t in tabs)
    if kind == 'mass':
        coeff = eval_mass_coefficient_grid(geo, grid, reaction)
    else:
        coeff = eval_stiffness_coefficient_grid(geo, grid)

    indptr, ifirst, isizes = sparsity_pattern(space)
    data = np.zeros(indptr[-1])
    p = [kv.p for kv in space.kvs]

    for e in itertools.product(*(range(kv.nel) for kv in space.kvs)):
        f = [t[1][e[l]] for l, t in enumerate(tabs)]
        V = [t[2][e[l]] for l, t in enumerate(tabs)]
        D = [t[3][e[l]] for l, t in enumerate(tabs)]
        w = _kron_all([t[0].weights[e[l]][None, :] for l, t in enumerate(tabs)]).ravel()
        sl = tuple(slice(e[l] * gs[l], (e[l] + 1) * gs[l]) for l in range(d))
        if kind == 'mass':
            N = _kron_all(V)
            cw = w * coeff[sl].ravel(order='F')
            local = (N.T * cw) @ N
        else:
            G = []
            for l in range(d):
                G.append(_kron_all([D[k] if k == l else V[k] for k in range(d)]))
            local = 0.0
            for l in range(d):
                Gt = G[l].T
                for m in range(d):
                    cw = w * coeff[(l, m) + sl].ravel(order='F')
                    local = local + (Gt * cw) @ G[m]
        data[_local_positions(space, indptr, ifirst, isizes, f, p)] += local
    cols = np.empty(indptr[-1], dtype=np.int64)
    _fill_pattern_columns(space, indptr, cols)
    return scipy.sparse.csr_matrix((data, cols, indptr), shape=(space.ndof, space.ndof))


def _local_positions(space, indptr, ifirst, isizes, first, p):
    """CSR data positions of an element block, rows and columns first-direction fastest."""
    d = space.dim
    # axes ordered (a_d .. a_1, b_d .. b_1) so that C-order flattening runs a_1 fastest
    off, width, row, stride = 0, 1, 0, 1
    for l in range(d):
        a = first[l] + np.arange(p[l] + 1)
        ashape = [1] * (2 * d)
        ashape[d - 1 - l] = len(a)
        abshape = list(ashape)
        abshape[2 * d - 1 - l] = len(a)
        offl = a[None, :] - ifirst[l][a][:, None]
        off = off + width * offl.reshape(abshape)
        width = width * isizes[l][a].reshape(ashape)
        row = row + stride * a.reshape(ashape)
        stride *= space.shape[l]
    pos = indptr[row] + off
    n = int(np.prod([q + 1 for q in p]))
    return pos.reshape(n, n)


def _fill_pattern_columns(space, indptr, cols):
    padded_I = []
    for s in space.index_sets:
        n = len(s.interactions)
        m = max(len(I) for I in s.interactions)
        P = np.zeros((n, m), dtype=np.int64)
        L = np.array([len(I) for I in s.interactions])
        for i, I in enumerate(s.interactions):
            P[i, :len(I)] = I
        padded_I.append(_Padded(P, L, P, L, None))
    for rows, multi in _row_chunks(space, padded_I):
        c, mask = _columns(space, padded_I, multi)
        dest = indptr[rows][:, None] + np.cumsum(mask, axis=1) - 1
        cols[dest[mask]] = c[mask]


def assemble_mass_sgq(space, geo=None, g=None, reaction=None):
    """Mass matrix by the element loop with ``g`` (default p+1) Gauss points per direction."""
    return _assemble_sgq(space, geo, 'mass', g, reaction)


def assemble_stiffness_sgq(space, geo=None, g=None):
    """Stiffness matrix by the element loop with Gauss quadrature."""
    return _assemble_sgq(space, geo, 'stiffness', g)


def restrict(M, keep):
    """Row/column restriction to the index set `keep` (e.g. interior functions)."""
    keep = np.asarray(keep)
    return M[keep][:, keep]


def boundary_dofs(space):
    """Linear indices of functions that do not vanish on the domain boundary."""
    multi = space.multi_index(np.arange(space.ndof))
    on = np.zeros(space.ndof, dtype=bool)
    for l, kv in enumerate(space.kvs):
        on |= (multi[l] == 0) | (multi[l] == kv.ndof - 1)
    return np.flatnonzero(on)


# ---------------------------------------------------------------------------
# Matrix Market I/O

def write_matrix_market(path, M, **meta):
    """Write `M` in coordinate real general format; `meta` lands in header comments."""
    comment = '\n'.join('%s: %s' % kv for kv in meta.items())
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(M), comment=comment,
                     field='real', precision=17, symmetry='general')


def read_matrix_market(path):
    return scipy.sparse.csr_matrix(scipy.io.mmread(str(path)))
