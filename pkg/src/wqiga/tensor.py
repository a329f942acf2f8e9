"""Dense tensors and m-mode matrix-tensor products.

A tensor is a plain :class:`numpy.ndarray` of shape ``(n_1, ..., n_d)``;
entry ``X[k_1, ..., k_d]`` corresponds to the linear index with ``k_1``
running fastest (``order='F'``), matching the multi-index linearization of
:class:`~wqiga.bspline.SplineSpace`. Modes are 0-based axis numbers.
"""
import numpy as np


class FlopCounter:
    """Accumulates the multiply-add count of mode products (2 FLOPs each)."""

    def __init__(self):
        self.flops = 0

    def add(self, t, shape):
        self.flops += 2 * int(t) * int(np.prod(shape, dtype=np.int64))

    def reset(self):
        self.flops = 0


def mode_product_flops(t, shape):
    return 2 * int(t) * int(np.prod(shape, dtype=np.int64))


def mode_product(X, m, A, counter=None):
    """Compute ``X x_m A``: contract axis `m` of `X` with the columns of `A`.

    ``(X x_m A)[..., k, ...] = sum_j A[k, j] X[..., j, ...]``
    """
    X = np.asarray(X)
    A = np.asarray(A)
    if A.ndim != 2 or not 0 <= m < X.ndim or A.shape[1] != X.shape[m]:
        raise ValueError('cannot apply %s matrix along mode %d of tensor %s'
                         % (A.shape, m, X.shape))
    if counter is not None:
        counter.add(A.shape[0], X.shape)
    Y = np.tensordot(A, X, axes=(1, m))
    return np.moveaxis(Y, 0, m)


def mode_product_batched(X, m, A):
    """Mode product over a leading batch axis.

    `X` has shape ``(nb, n_1, ..., n_d)`` and `A` has shape ``(nb, t, n_m)``;
    batch entry `b` computes ``X[b] x_m A[b]``.
    """
    Xm = np.moveaxis(X, m + 1, -1)
    Y = np.matmul(Xm.reshape(X.shape[0], -1, X.shape[m + 1]), A.transpose(0, 2, 1))
    Y = Y.reshape(Xm.shape[:-1] + (A.shape[1],))
    return np.moveaxis(Y, -1, m + 1)


def extract_subtensor(X, index_lists):
    """Gather the sub-tensor ``X[I_1 x ... x I_d]`` as a copy."""
    X = np.asarray(X)
    if len(index_lists) != X.ndim:
        raise ValueError('need one index list per axis')
    idx = []
    for ax, I in enumerate(index_lists):
        I = np.asarray(I, dtype=np.intp)
        if I.size and (I.min() < 0 or I.max() >= X.shape[ax]):
            raise IndexError('index out of bounds on axis %d (size %d)' % (ax, X.shape[ax]))
        if np.any(np.diff(I) <= 0):
            raise ValueError('index lists must be strictly increasing')
        idx.append(I)
    return X[np.ix_(*idx)]


def linear_to_multi(lin, shape):
    return np.unravel_index(lin, shape, order='F')


def multi_to_linear(multi, shape):
    return np.ravel_multi_index(tuple(multi), shape, order='F')
