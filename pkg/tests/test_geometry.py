import numpy as np
import pytest

from wqiga.bspline import KnotVector, SplineSpace
from wqiga.geometry import (CallableMap, DegenerateGeometry, IdentityMap, SplineMap, adjugate,
                            affine_map, det_cofactor, eval_mass_coefficient_grid,
                            eval_stiffness_coefficient_grid, interpolate_map, load_geometry,
                            save_geometry)


def random_spline_map(d, seed, amp=0.05):
    """Identity perturbed by a small random spline displacement (det stays positive)."""
    rng = np.random.default_rng(seed)
    space = SplineSpace([KnotVector.uniform(2, 3) for _ in range(d)])
    ident = interpolate_map(lambda *z: np.stack(z, axis=-1), d, p=2, nel=3)
    control = ident.control + amp * rng.normal(size=ident.control.shape)
    return SplineMap(space, control)


def grid_of(d, n=5, seed=0):
    rng = np.random.default_rng(seed)
    return tuple(np.sort(rng.uniform(0, 1, n)) for _ in range(d))


def test_identity():
    geo = IdentityMap(3)
    assert np.array_equal(geo.jacobian([0.2, 0.4, 0.9]), np.eye(3))
    g = grid_of(3)
    assert np.all(eval_mass_coefficient_grid(geo, g) == 1)
    C = eval_stiffness_coefficient_grid(geo, g)
    for l in range(3):
        for m in range(3):
            assert np.all(C[l, m] == (l == m))


def test_affine_map_is_linear_spline():
    A = np.array([[2.0, 0.5], [0.1, 3.0]])
    geo = affine_map(A, [1.0, -1.0])
    assert np.allclose(geo([0.3, 0.7]), A @ [0.3, 0.7] + [1, -1])
    for z in ([0, 0], [0.5, 0.25], [1, 1]):
        assert np.allclose(geo.jacobian(z), A)
    assert np.allclose(eval_mass_coefficient_grid(affine_map(np.diag([2.0, 3.0])), grid_of(2)), 6)


def test_affine_coefficients_constant():
    A = np.array([[1.5, 0.2, 0.0], [0.1, 2.0, 0.3], [0.0, 0.4, 1.2]])
    C = eval_stiffness_coefficient_grid(affine_map(A), grid_of(3))
    Ai = np.linalg.inv(A)
    ref = Ai @ Ai.T * np.linalg.det(A)
    for l in range(3):
        for m in range(3):
            assert np.allclose(C[l, m], ref[l, m], rtol=0, atol=1e-13)


def test_sine_map_jacobian():
    geo = CallableMap(1, lambda x: (2 * np.sin(x))[..., None],
                      lambda x: (2 * np.cos(x))[..., None, None])
    assert geo.jacobian([0.0])[0, 0] == 2.0


def test_one_dimensional_stiffness_coefficient():
    geo = CallableMap(1, lambda t: (t + t ** 2)[..., None], lambda t: (1 + 2 * t)[..., None, None])
    t = np.linspace(0, 1, 7)
    assert np.allclose(eval_stiffness_coefficient_grid(geo, (t,))[0, 0], 1 / (1 + 2 * t))


@pytest.mark.parametrize('d', [1, 2, 3])
def test_spline_map_coefficients_against_pointwise(d):
    geo = random_spline_map(d, d)
    g = grid_of(d, 4, seed=d)
    c = eval_mass_coefficient_grid(geo, g)
    C = eval_stiffness_coefficient_grid(geo, g)
    for idx in np.ndindex(*c.shape):
        z = [g[l][idx[l]] for l in range(d)]
        J = geo.jacobian(z)
        det = np.linalg.det(J)
        Ji = np.linalg.inv(J)
        assert abs(c[idx] - det) <= 1e-13
        ref = Ji @ Ji.T * det
        got = np.array([[C[l, m][idx] for m in range(d)] for l in range(d)])
        assert np.max(np.abs(got - ref)) <= 1e-12
        assert np.max(np.abs(got - got.T)) == 0.0


def test_jacobian_against_finite_differences():
    geo = random_spline_map(2, 7)
    z = np.array([0.37, 0.61])
    eps = 1e-6
    fd = np.stack([(geo(z + eps * e) - geo(z - eps * e)) / (2 * eps) for e in np.eye(2)], axis=1)
    assert np.allclose(geo.jacobian(z), fd, atol=1e-7)


def test_determinant_two_ways():
    J = np.random.default_rng(5).normal(size=(50, 3, 3))
    assert np.max(np.abs(det_cofactor(J) - np.linalg.det(J))) <= 1e-13 * np.abs(J).max() ** 3
    adj = adjugate(J)
    assert np.allclose(J @ adj, det_cofactor(J)[:, None, None] * np.eye(3), atol=1e-12)


def test_folded_geometry_rejected():
    geo = affine_map(np.diag([1.0, -1.0]))
    with pytest.raises(DegenerateGeometry):
        eval_mass_coefficient_grid(geo, grid_of(2))
    with pytest.raises(DegenerateGeometry):
        eval_stiffness_coefficient_grid(geo, grid_of(2))


def test_control_shape_checked():
    space = SplineSpace([KnotVector.uniform(1, 1)] * 2)
    with pytest.raises(ValueError):
        SplineMap(space, np.zeros((2, 2, 3)))


def test_json_round_trip(tmp_path):
    geo = random_spline_map(2, 11)
    path = tmp_path / 'geo.json'
    save_geometry(geo, path)
    back = load_geometry(path)
    assert np.array_equal(back.control, geo.control)
    g = grid_of(2)
    assert np.array_equal(back.jacobian_grid(g), geo.jacobian_grid(g))


def test_json_first_direction_fastest(tmp_path):
    path = tmp_path / 'quad.json'
    path.write_text('{"degree": [1, 1], "knots": [[0, 0, 1, 1], [0, 0, 1, 1]],'
                    ' "control_points": [[0, 0], [2, 0], [0, 1], [2, 1]]}')
    geo = load_geometry(path)
    assert np.allclose(geo.jacobian([0.5, 0.5]), np.diag([2.0, 1.0]))
    path.write_text('{"degree": [1, 1], "knots": [[0, 0, 1, 1], [0, 0, 1, 1]],'
                    ' "control_points": [[0, 0], [2, 0], [0, 1]]}')
    with pytest.raises(ValueError):
        load_geometry(path)
