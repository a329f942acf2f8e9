"""Geometry maps from the parametric cube and the pulled-back PDE coefficients.

Point grids are tuples of 1D coordinate arrays, one per direction; all grid
quantities are tensors over their Cartesian product (first axis = first
direction). Jacobians are stored as ``J[..., a, l] = dF_a / dzeta_l``.
"""
import json

import numpy as np

from .bspline import KnotVector, SplineSpace, collocation
from .tensor import mode_product


class DegenerateGeometry(ValueError):
    """The Jacobian determinant is not positive somewhere on the grid."""


class GeometryMap:
    """Base class; subclasses provide :meth:`jacobian_grid` and :meth:`evaluate_grid`."""

    dim = None

    def jacobian_grid(self, grid):
        raise NotImplementedError

    def evaluate_grid(self, grid):
        raise NotImplementedError

    def jacobian(self, zeta):
        """Jacobian matrix at a single parametric point."""
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        J = self.jacobian_grid(tuple(np.array([z]) for z in zeta))
        return J.reshape(self.dim, self.dim)

    def __call__(self, zeta):
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        return self.evaluate_grid(tuple(np.array([z]) for z in zeta)).reshape(self.dim)


class IdentityMap(GeometryMap):

    def __init__(self, dim):
        self.dim = dim

    def jacobian_grid(self, grid):
        shape = tuple(len(x) for x in grid)
        return np.broadcast_to(np.eye(self.dim), shape + (self.dim, self.dim)).copy()

    def evaluate_grid(self, grid):
        return np.stack(np.meshgrid(*grid, indexing='ij'), axis=-1)


class SplineMap(GeometryMap):
    """Tensor-product spline map ``F(zeta) = sum_i C_i B_i(zeta)``.

    Args:
        space (SplineSpace): geometry space (its degree may differ from the
            analysis space).
        control (ndarray): control points of shape ``space.shape + (dim,)``.
    """

    def __init__(self, space, control):
        self.space = space if isinstance(space, SplineSpace) else SplineSpace(space)
        self.dim = self.space.dim
        self.control = np.asarray(control, dtype=float)
        if self.control.shape != self.space.shape + (self.dim,):
            raise ValueError('control points have shape %s, expected %s'
                             % (self.control.shape, self.space.shape + (self.dim,)))

    def _apply(self, grid, derivs):
        T = self.control
        for l, (kv, x) in enumerate(zip(self.space.kvs, grid)):
            T = mode_product(T, l, collocation(kv, x, derivs[l]))
        return T

    def evaluate_grid(self, grid):
        return self._apply(grid, [0] * self.dim)

    def jacobian_grid(self, grid):
        cols = []
        for l in range(self.dim):
            derivs = [0] * self.dim
            derivs[l] = 1
            cols.append(self._apply(grid, derivs))
        return np.stack(cols, axis=-1)


class CallableMap(GeometryMap):
    """Closed-form map given as callables.

    Args:
        dim (int): parametric dimension.
        fmap: ``fmap(*coords)`` returns the physical coordinates with shape
            ``coords[0].shape + (dim,)``; coords are broadcast ``ij`` meshes.
        jac: ``jac(*coords)`` returns the Jacobian, shape ``... + (dim, dim)``.
    """

    def __init__(self, dim, fmap, jac):
        self.dim, self._f, self._jac = dim, fmap, jac

    def evaluate_grid(self, grid):
        return np.asarray(self._f(*np.meshgrid(*grid, indexing='ij')), dtype=float)

    def jacobian_grid(self, grid):
        return np.asarray(self._jac(*np.meshgrid(*grid, indexing='ij')), dtype=float)


def affine_map(A, b=None):
    """Affine map ``zeta -> A zeta + b`` written as a degree-1 spline."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    space = SplineSpace([KnotVector(1, [0.0, 1.0]) for _ in range(d)])
    corners = np.stack(np.meshgrid(*([[0.0, 1.0]] * d), indexing='ij'), axis=-1)
    return SplineMap(space, corners @ A.T + b)


def interpolate_map(fmap, dim, p=3, nel=4):
    """Spline approximation of a smooth map by least squares on Greville-like samples."""
    kvs = [KnotVector.uniform(p, nel) for _ in range(dim)]
    space = SplineSpace(kvs)
    samples = [np.linspace(0, 1, 3 * kv.ndof) for kv in kvs]
    pinvs = [np.linalg.pinv(collocation(kv, x)) for kv, x in zip(kvs, samples)]
    vals = np.asarray(fmap(*np.meshgrid(*samples, indexing='ij')), dtype=float)
    for l, P in enumerate(pinvs):
        vals = mode_product(vals, l, P)
    return SplineMap(space, vals)


def det_cofactor(J):
    """Determinant of stacked ``(..., d, d)`` matrices by cofactor expansion (d <= 3)."""
    d = J.shape[-1]
    if d == 1:
        return J[..., 0, 0].copy()
    if d == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if d == 3:
        return (J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
                - J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
                + J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]))
    return np.linalg.det(J)


def adjugate(J):
    """Adjugate of stacked ``(..., d, d)`` matrices, so that ``J @ adj(J) = det(J) I``."""
    d = J.shape[-1]
    if d == 1:
        return np.ones_like(J)
    if d == 2:
        adj = np.empty_like(J)
        adj[..., 0, 0] = J[..., 1, 1]
        adj[..., 1, 1] = J[..., 0, 0]
        adj[..., 0, 1] = -J[..., 0, 1]
        adj[..., 1, 0] = -J[..., 1, 0]
        return adj
    if d == 3:
        adj = np.empty_like(J)
        for r in range(3):
            for c in range(3):
                rows = [k for k in range(3) if k != c]
                cols = [k for k in range(3) if k != r]
                minor = (J[..., rows[0], cols[0]] * J[..., rows[1], cols[1]]
                         - J[..., rows[0], cols[1]] * J[..., rows[1], cols[0]])
                adj[..., r, c] = (-1) ** (r + c) * minor
        return adj
    return np.linalg.inv(J) * np.linalg.det(J)[..., None, None]


def _check_positive(det):
    bad = det <= 0
    if np.any(bad):
        raise DegenerateGeometry('Jacobian determinant not positive at %d of %d grid points '
                                 '(min %.3g)' % (np.count_nonzero(bad), det.size, det.min()))


def _reaction_values(reaction, grid):
    if reaction is None:
        return 1.0
    return np.asarray(reaction(*np.meshgrid(*grid, indexing='ij')), dtype=float)


def eval_mass_coefficient_grid(geo, grid, reaction=None):
    """``c = det(DF) * reaction`` on the tensor grid.

    `reaction` is an optional callable of the parametric ``ij`` meshes.
    """
    det = det_cofactor(geo.jacobian_grid(grid))
    _check_positive(det)
    return det * _reaction_values(reaction, grid)


def eval_stiffness_coefficient_grid(geo, grid):
    """``c_{l,m} = [DF^{-1} DF^{-T}]_{l,m} det(DF)`` as an array of shape ``(d, d) + grid``."""
    J = geo.jacobian_grid(grid)
    det = det_cofactor(J)
    _check_positive(det)
    # DF^{-1} DF^{-T} det = adj adj^T / det
    adj = adjugate(J)
    C = np.einsum('...la,...ma->...lm', adj, adj) / det[..., None, None]
    return np.moveaxis(np.moveaxis(C, -1, 0), -1, 0)


def load_geometry(path):
    """Read a spline geometry from JSON.

    Keys: ``degree`` (list, one per direction), ``knots`` (list of full open
    knot vectors) and ``control_points`` (flat list of ``dim``-vectors, first
    direction running fastest).
    """
    with open(path) as f:
        data = json.load(f)
    kvs = [KnotVector.from_knots(k, p) for p, k in zip(data['degree'], data['knots'])]
    space = SplineSpace(kvs)
    cp = np.asarray(data['control_points'], dtype=float)
    dim = space.dim
    if cp.shape != (space.ndof, dim):
        raise ValueError('%s: expected %d control points of dimension %d, got shape %s'
                         % (path, space.ndof, dim, cp.shape))
    control = cp.reshape(space.shape + (dim,), order='F')
    return SplineMap(space, control)


def save_geometry(geo, path):
    cp = geo.control.reshape(-1, geo.dim, order='F')
    data = {'degree': [kv.p for kv in geo.space.kvs],
            'knots': [kv.knots.tolist() for kv in geo.space.kvs],
            'control_points': cp.tolist()}
    with open(path, 'w') as f:
        json.dump(data, f, indent=1)
