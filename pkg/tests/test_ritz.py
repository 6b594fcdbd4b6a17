import numpy as np
import pytest
import scipy.sparse as sp

from conftest import square_mesh
from ritzlab.corpus import get_function
from ritzlab.fem import AnalyticFunction, FeSpace, interpolate_nodal
from ritzlab.quadrature import composite_rule
from ritzlab.ritz import (
    SolverError,
    SpdFactor,
    assemble_rhs_gradform,
    assemble_stiffness,
    energy_error,
    grad_l2_norm,
    project_nested,
    prolongation,
    ritz_project,
    solve_dense,
    solve_spd,
)


def _p1_stiffness_cotangent(mesh):
    """Textbook P1 stiffness from the cotangent formula (independent oracle)."""
    n = mesh.n_vertices
    A = np.zeros((n, n))
    for tri in mesh.triangles:
        P = mesh.vertices[tri]
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            u, v = P[j] - P[i], P[k] - P[i]
            cot = np.dot(u, v) / abs(u[0] * v[1] - u[1] * v[0])
            a, b = tri[j], tri[k]
            A[a, b] -= 0.5 * cot
            A[b, a] -= 0.5 * cot
            A[a, a] += 0.5 * cot
            A[b, b] += 0.5 * cot
    return A


def test_p1_stiffness_matches_cotangent_oracle():
    mesh = square_mesh(2)
    A = assemble_stiffness(FeSpace(mesh, 1), eliminate=False).toarray()
    assert np.allclose(A, _p1_stiffness_cotangent(mesh), atol=1e-13)


@pytest.mark.parametrize("degree", [1, 2])
def test_stiffness_symmetric_positive_definite(degree):
    A = assemble_stiffness(FeSpace(square_mesh(2), degree))
    assert abs(A - A.T).max() < 1e-13
    assert np.linalg.eigvalsh(A.toarray()).min() > 0
    full = assemble_stiffness(FeSpace(square_mesh(2), degree), eliminate=False)
    assert np.allclose(full @ np.ones(full.shape[0]), 0.0, atol=1e-12)


def test_cg_matches_cholesky():
    A = assemble_stiffness(FeSpace(square_mesh(3), 2))
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    x = solve_spd(A, b, 1e-12)
    assert np.allclose(x, solve_dense(A, b), rtol=1e-9, atol=1e-12)
    assert np.allclose(SpdFactor(A).solve(b), solve_dense(A, b), atol=1e-10)


def test_cg_zero_rhs_and_failure():
    A = assemble_stiffness(FeSpace(square_mesh(3), 1))
    assert np.all(solve_spd(A, np.zeros(A.shape[0])) == 0)
    with pytest.raises(SolverError) as err:
        solve_spd(A, np.ones(A.shape[0]), 1e-12, max_iter=2)
    assert err.value.residual > 0


def test_rhs_quadrature_too_low():
    with pytest.raises(ValueError):
        assemble_rhs_gradform(FeSpace(square_mesh(1), 2), get_function("sine"), quad_degree=1)


@pytest.mark.parametrize("degree", [1, 2])
def test_projection_of_discrete_function_is_identity(degree, rng):
    s = FeSpace(square_mesh(2), degree)
    for _ in range(3):
        vh = s.from_interior(rng.standard_normal(len(s.interior_dofs)))
        rh = ritz_project(s, AnalyticFunction.from_fe(vh), rel_tol=1e-13)
        assert np.max(np.abs(rh.coefficients - vh.coefficients)) < 1e-10


@pytest.mark.parametrize("degree", [1, 2])
def test_galerkin_orthogonality(degree):
    s = FeSpace(square_mesh(3), degree)
    u = get_function("sing06")
    rh = ritz_project(s, u, 1e-12, quad_degree=8)
    A = assemble_stiffness(s)
    b = assemble_rhs_gradform(s, u, 8)
    assert np.linalg.norm(A @ rh.interior_values - b) <= 1e-10 * np.linalg.norm(b)


def test_pythagoras_and_contraction():
    s = FeSpace(square_mesh(3), 1)
    u = get_function("sine")
    rh = ritz_project(s, u, 1e-12, quad_degree=8)
    nu = grad_l2_norm(u, s, 8)
    nr = grad_l2_norm(rh)
    ne = energy_error(rh, u, 8)
    assert nr <= nu * (1 + 1e-8)
    assert nu**2 == pytest.approx(nr**2 + ne**2, rel=1e-8)


@pytest.mark.parametrize("degree,rate", [(1, 1.0), (2, 2.0)])
def test_energy_convergence_rate(degree, rate):
    u = get_function("bubble")
    errs = [energy_error(ritz_project(FeSpace(square_mesh(L), degree), u), u) for L in (2, 3, 4)]
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(slopes - rate) < 0.1)


@pytest.mark.parametrize("degree", [1, 2])
def test_prolongation_is_exact_embedding(degree, rng):
    coarse, fine = FeSpace(square_mesh(1), degree), FeSpace(square_mesh(3), degree)
    P = prolongation(coarse, fine)
    assert sp.issparse(P)
    vh = coarse.from_interior(rng.standard_normal(len(coarse.interior_dofs)))
    fine_fn = fine.zero()
    fine_fn = type(fine_fn)(fine, P @ vh.coefficients)
    x = fine.mesh.centroids
    assert np.allclose(fine_fn.evaluate(x)[1], vh.evaluate(x)[1], atol=1e-12)


def test_project_nested_matches_analytic_projection():
    coarse, fine = FeSpace(square_mesh(2), 2), FeSpace(square_mesh(3), 2)
    # a fine-space function as data, projected two ways
    g = ritz_project(fine, get_function("sing02"))
    a = project_nested(g, coarse, rel_tol=1e-13)
    # oracle: load vector by a composite rule aligned with the red split
    rule = composite_rule(2, 1)
    mesh = coarse.mesh
    elems = np.arange(mesh.n_triangles)[:, None]
    pts = mesh.to_physical(elems, rule.points[None])
    _, gg = g.evaluate(pts.reshape(-1, 2) + 0.0)
    gg = gg.reshape(pts.shape)
    _, grads = coarse.physical_gradients(elems, rule.points[None])
    local = np.einsum("q,eqd,eqnd->en", rule.weights, gg, grads) * mesh.areas[:, None]
    b = np.zeros(coarse.n_dofs)
    np.add.at(b, coarse.element_dof_map, local)
    x = solve_dense(assemble_stiffness(coarse), b[coarse.interior_dofs])
    assert np.allclose(a.interior_values, x, atol=1e-10)


def test_prolongation_rejects_non_nested():
    from ritzlab.mesh import named_polygon, refine_to_level

    other = refine_to_level(named_polygon("square"), 3)
    with pytest.raises(ValueError):
        prolongation(FeSpace(square_mesh(1), 1), FeSpace(other, 1))
    with pytest.raises(ValueError):
        prolongation(FeSpace(square_mesh(1), 1), FeSpace(square_mesh(3), 2))


def test_interpolant_error_exceeds_ritz_error():
    # Ritz projection is the energy best approximation
    s = FeSpace(square_mesh(3), 1)
    u = get_function("osc")
    assert energy_error(ritz_project(s, u), u) <= energy_error(interpolate_nodal(s, u), u) + 1e-12
