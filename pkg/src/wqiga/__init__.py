"""Weighted-quadrature assembly of isogeometric Galerkin matrices.

Mass and stiffness matrices on tensor-product B-spline spaces are formed
row by row: each test function carries its own univariate quadrature
weights on a global point grid, and the multivariate rule is applied by
sum-factorization. An element-loop Gauss assembler serves as reference.
"""
from .bspline import (IndexSets, KnotVector, SplineSpace, basis_and_derivs, build_index_sets,
                      collocation, eval_basis, eval_basis_deriv, nonzero_basis_at)
from .quadrature import (DERIV_PAIRS, ExactIntegralTable, GaussRule, PointGrid, SingularSystem,
                         WqRule, apply_rule, build_point_grid, dump_rules, exact_integrals,
                         exactness_residual, gauss_rule, solve_weights)
from .tensor import FlopCounter, extract_subtensor, mode_product
from .geometry import (CallableMap, DegenerateGeometry, GeometryMap, IdentityMap, SplineMap,
                       affine_map, eval_mass_coefficient_grid, eval_stiffness_coefficient_grid,
                       load_geometry, save_geometry)
from .assembly import (CsrBuilder, Timings, WqAssembler, assemble_mass_sgq, assemble_mass_wq,
                       assemble_stiffness_sgq, assemble_stiffness_wq, build_sparse_from_rows,
                       read_matrix_market, write_matrix_market)

__version__ = '0.1.0'
