import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wqiga.bspline import (KnotVector, SplineSpace, build_index_sets, collocation, eval_basis,
                           eval_basis_deriv, nonzero_basis_at)


def jittered(p, nel, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.5, 1.5, nel)
    bp = np.concatenate([[0.0], np.cumsum(h)]) / h.sum()
    bp[-1] = 1.0
    return KnotVector(p, bp)


def test_knot_vector_counts():
    kv = KnotVector.uniform(3, 7)
    assert kv.nel == 7
    assert kv.ndof == 10
    assert kv.nknots == kv.ndof + kv.p + 1
    assert np.all(kv.knots[:4] == 0) and np.all(kv.knots[-4:] == 1)
    assert kv.h == pytest.approx(1 / 7)


def test_from_knots_round_trip():
    kv = KnotVector.uniform(2, 5)
    kv2 = KnotVector.from_knots(kv.knots, 2)
    assert np.array_equal(kv2.breakpoints, kv.breakpoints)


@pytest.mark.parametrize('args', [(0, [0, 1]), (2, [0, 0.5, 0.5, 1]), (2, [0.1, 1]), (1, [0, 2])])
def test_knot_vector_rejects_bad_input(args):
    with pytest.raises(ValueError):
        KnotVector(*args)


def test_from_knots_rejects_repeated_interior_knot():
    with pytest.raises(ValueError):
        KnotVector.from_knots([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)


def test_hat_function_peak_and_slope():
    kv = KnotVector.uniform(1, 10)
    assert eval_basis(kv, 4, 0.4) == pytest.approx(1.0)
    assert eval_basis_deriv(kv, 4, 0.35) == pytest.approx(10.0)
    assert eval_basis_deriv(kv, 4, 0.45) == pytest.approx(-10.0)


def test_quadratic_values_at_knots_and_midpoints():
    # interior p=2 function: 1/2 at the two interior knots of its support,
    # 3/4 at the central midpoint, 1/8 at the outer midpoints
    kv = KnotVector.uniform(2, 10)
    i = 5                      # support [0.3, 0.6]
    h = kv.h
    assert eval_basis(kv, i, 0.3 + 1.5 * h) == pytest.approx(0.75)
    assert eval_basis(kv, i, 0.3 + 0.5 * h) == pytest.approx(0.125)
    assert eval_basis(kv, i, 0.3 + 2.5 * h) == pytest.approx(0.125)
    assert eval_basis(kv, i, 0.3 + h) == pytest.approx(0.5)
    assert eval_basis(kv, i, 0.3 + 2 * h) == pytest.approx(0.5)


def test_left_limit_at_one():
    kv = KnotVector.uniform(3, 4)
    assert eval_basis(kv, kv.ndof - 1, 1.0) == pytest.approx(1.0)
    assert eval_basis_deriv(kv, kv.ndof - 1, 1.0) == pytest.approx(3 / kv.h)


def test_index_out_of_range():
    kv = KnotVector.uniform(2, 4)
    with pytest.raises(IndexError):
        eval_basis(kv, kv.ndof, 0.5)
    with pytest.raises(IndexError):
        eval_basis_deriv(kv, -1, 0.5)
    with pytest.raises(ValueError):
        eval_basis(kv, 0, 1.5)


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 8), nel=st.integers(1, 20), seed=st.integers(0, 2 ** 16))
def test_partition_of_unity_and_derivative_sum(p, nel, seed):
    kv = jittered(p, nel, seed)
    x = np.random.default_rng(seed).uniform(0, 1, 100)
    assert np.max(np.abs(collocation(kv, x).sum(1) - 1)) <= 1e-14
    D = collocation(kv, x, 1)
    assert np.max(np.abs(D.sum(1))) <= 1e-11 * max(1.0, np.abs(D).max())


@settings(max_examples=25, deadline=None)
@given(p=st.integers(1, 7), seed=st.integers(0, 2 ** 16))
def test_derivative_matches_central_difference(p, seed):
    kv = jittered(p, 6, seed)
    rng = np.random.default_rng(seed)
    # keep clear of knots, where derivatives of low degree jump
    x = rng.uniform(0.05, 0.95, 30)
    x = x[np.min(np.abs(x[:, None] - kv.breakpoints[None, :]), axis=1) > 1e-3]
    eps = 1e-7
    fd = (collocation(kv, x + eps) - collocation(kv, x - eps)) / (2 * eps)
    assert np.max(np.abs(fd - collocation(kv, x, 1))) <= 1e-6


def test_nonzero_basis_consistency():
    rng = np.random.default_rng(3)
    kv = jittered(4, 9, 3)
    for _ in range(1000):
        i = int(rng.integers(kv.ndof))
        x = float(rng.uniform())
        first, vals, ders = nonzero_basis_at(kv, x)
        ref = eval_basis(kv, i, x)
        got = vals[i - first] if first <= i <= first + kv.p else 0.0
        assert abs(got - ref) <= 1e-14


def test_nonzero_basis_inside_span_and_at_breakpoint():
    kv = KnotVector.uniform(3, 5)
    first, vals, _ = nonzero_basis_at(kv, 0.5)
    assert len(vals) == 4 and vals.sum() == pytest.approx(1.0)
    _, vals, _ = nonzero_basis_at(kv, 0.4)
    assert np.count_nonzero(np.abs(vals) > 1e-15) == 3


def test_local_support():
    kv = jittered(3, 8, 1)
    x = np.linspace(0, 1, 501)
    B = collocation(kv, x)
    for i in range(kv.ndof):
        lo, hi = kv.support(i)
        outside = (x < lo) | (x > hi)
        assert np.all(B[outside, i] == 0)


@pytest.mark.parametrize('p', range(1, 7))
@pytest.mark.parametrize('nel', [3, 10, 37])
def test_interaction_sets(p, nel):
    kv = KnotVector.uniform(p, nel)
    sets = build_index_sets(kv)
    assert sets.nnz == (2 * p + 1) * kv.ndof - p * (p + 1)
    for i, I in enumerate(sets.interactions):
        assert len(I) <= 2 * p + 1
        assert len(sets.spans[i]) <= p + 1
        for j in I:
            assert i in sets.interactions[j]
    assert list(sets.interactions[0]) == list(range(p + 1))


def test_interior_row_has_five_interactions_for_quadratics():
    sets = build_index_sets(KnotVector.uniform(2, 10))
    assert len(sets.interactions[5]) == 5


def test_space_linear_index_first_direction_fastest():
    space = SplineSpace([KnotVector.uniform(1, 2), KnotVector.uniform(2, 2)])
    assert space.shape == (3, 4)
    assert space.ndof == 12
    assert space.linear_index((1, 0)) == 1
    assert space.linear_index((0, 1)) == 3
    m = space.multi_index(np.arange(12))
    assert np.array_equal(space.linear_index(m), np.arange(12))
