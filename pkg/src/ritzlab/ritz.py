"""Stiffness assembly, SPD solvers and the Ritz projection."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .fem import AnalyticFunction, FeFunction, FeSpace, eval_basis, lagrange_nodes
from .quadrature import triangle_rule

__all__ = [
    "SolverError",
    "assemble_stiffness",
    "assemble_rhs_gradform",
    "solve_spd",
    "solve_dense",
    "SpdFactor",
    "ritz_project",
    "grad_l2_norm",
    "energy_error",
    "prolongation",
    "project_nested",
]


class SolverError(RuntimeError):
    """Raised when the iterative solver hits its iteration cap."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def _local_stiffness(space: FeSpace) -> np.ndarray:
    k = space.degree
    rule = triangle_rule(max(2 * k - 2, 1))
    mesh = space.mesh
    jit = mesh.inv_jacobians_t
    K = np.zeros((mesh.n_triangles, space.n_local, space.n_local))
    for bary, w in zip(rule.points, rule.weights):
        _, ref = eval_basis(k, bary)
        g = np.einsum("eij,nj->eni", jit, ref)
        K += w * np.einsum("eni,emi->enm", g, g)
    return K * mesh.areas[:, None, None]


def assemble_stiffness(space: FeSpace, eliminate: bool = True) -> sp.csr_matrix:
    """Stiffness matrix of the Dirichlet form.

    With ``eliminate`` (default) only interior DOFs are kept, which is the
    SPD system behind the Ritz projection.  Entries are exact: the
    integrands are polynomials of degree 2k-2.
    """
    K = _local_stiffness(space)
    dofs = space.element_dof_map
    rows = np.repeat(dofs, space.n_local, axis=1).ravel()
    cols = np.tile(dofs, (1, space.n_local)).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(space.n_dofs,) * 2).tocsr()
    A.sum_duplicates()
    if eliminate:
        idx = space.interior_dofs
        A = A[idx][:, idx].tocsr()
    return A


def _scatter(space: FeSpace, local: np.ndarray) -> np.ndarray:
    full = np.bincount(space.element_dof_map.ravel(), weights=local.ravel(), minlength=space.n_dofs)
    return full[space.interior_dofs]


def assemble_rhs_gradform(space: FeSpace, u: AnalyticFunction, quad_degree: int = 6) -> np.ndarray:
    """Interior load vector with entries ``int grad u . grad phi_j``."""
    if quad_degree < 2 * space.degree - 2:
        raise ValueError(f"quad_degree {quad_degree} is below 2k-2 = {2 * space.degree - 2}")
    rule = triangle_rule(quad_degree)
    mesh = space.mesh
    elems = np.arange(mesh.n_triangles)[:, None]
    pts = mesh.to_physical(elems, rule.points[None, :, :])
    gu = np.asarray(u.gradient(pts), dtype=float)  # (E, Q, 2)
    _, gphi = space.physical_gradients(elems, rule.points[None, :, :])  # (E, Q, n, 2)
    local = np.einsum("q,eqd,eqnd->en", rule.weights, gu, gphi) * mesh.areas[:, None]
    return _scatter(space, local)


def solve_spd(A, b, rel_tol: float = 1e-10, x0=None, max_iter=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    Stops once ``||A x - b|| <= rel_tol * ||b||``; raises :class:`SolverError`
    after ``10 * dim`` iterations.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    target = rel_tol * bnorm
    for _ in range(max_iter):
        if np.linalg.norm(r) <= target:
            break
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x)
    if res > target:
        # the recursive residual can drift below the true one; polish once
        if np.linalg.norm(r) <= target and max_iter > 0:
            return solve_spd(A, b, rel_tol, x0=x, max_iter=max_iter // 2)
        raise SolverError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})", res)
    return x


def solve_dense(A, b) -> np.ndarray:
    """Cholesky solve, for small oracle cross-checks."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A)
    return cho_solve(cho_factor(M), np.asarray(b, dtype=float))


class SpdFactor:
    """Sparse LU factorization reused over many right-hand sides."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        self._lu = splu(self.A)

    def solve(self, b) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def ritz_project(
    space: FeSpace, u: AnalyticFunction, rel_tol: float = 1e-10, quad_degree: int = 6, A=None, solver=None
) -> FeFunction:
    """Ritz projection: Galerkin solution of the Dirichlet form with data grad u.

    ``solver`` (e.g. an :class:`SpdFactor`) replaces the CG solve.
    """
    if not u.vanishes_on_boundary:
        raise ValueError(f"{u.name} does not vanish on the boundary")
    b = assemble_rhs_gradform(space, u, quad_degree)
    if solver is not None:
        return space.from_interior(solver.solve(b))
    A = assemble_stiffness(space) if A is None else A
    return space.from_interior(solve_spd(A, b, rel_tol))


def grad_l2_norm(f, space: FeSpace | None = None, quad_degree: int = 6) -> float:
    """L2 norm of the gradient of an FeFunction, or of an AnalyticFunction
    integrated on the mesh of ``space``."""
    if isinstance(f, FeFunction):
        A = assemble_stiffness(f.space, eliminate=False)
        c = f.coefficients
        return float(np.sqrt(max(c @ (A @ c), 0.0)))
    return energy_error(space.zero(), f, quad_degree)


def energy_error(fh: FeFunction, u: AnalyticFunction, quad_degree: int = 6) -> float:
    """``||grad(u - fh)||_{L2}`` with the element rule of ``quad_degree``."""
    space = fh.space
    rule = triangle_rule(quad_degree)
    mesh = space.mesh
    elems = np.arange(mesh.n_triangles)[:, None]
    pts = mesh.to_physical(elems, rule.points[None])
    gu = np.asarray(u.gradient(pts), dtype=float)
    _, gh = fh.evaluate_in_elements(elems, rule.points[None])
    err = np.sum((gu - gh) ** 2, axis=-1)
    return float(np.sqrt(np.sum(err @ rule.weights * mesh.areas)))


def prolongation(coarse: FeSpace, fine: FeSpace) -> sp.csr_matrix:
    """Matrix expressing coarse basis functions in the fine nodal basis.

    Requires ``fine.mesh`` to be a red refinement (possibly repeated) of
    ``coarse.mesh`` and equal degrees, so the coarse space is a subspace.
    """
    if coarse.degree != fine.degree:
        raise ValueError("nested spaces must share the polynomial degree")
    anc = fine.mesh.ancestors(coarse.mesh.level)
    if fine.mesh.mesh_at_level(coarse.mesh.level) is not coarse.mesh:
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    nodes = lagrange_nodes(fine.degree)
    fdofs = fine.element_dof_map.ravel()
    pts = fine.mesh.to_physical(np.arange(fine.mesh.n_triangles)[:, None], nodes[None])
    parent = np.repeat(anc, fine.n_local)
    bary = coarse.mesh.barycentric(parent, pts.reshape(-1, 2))
    vals, _ = eval_basis(coarse.degree, bary)
    first = np.unique(fdofs, return_index=True)[1]
    rows = np.repeat(fdofs[first], coarse.n_local)
    cols = coarse.element_dof_map[parent[first]].ravel()
    v = vals[first].ravel()
    keep = np.abs(v) > 1e-13
    return sp.csr_matrix((v[keep], (rows[keep], cols[keep])), shape=(fine.n_dofs, coarse.n_dofs))


def project_nested(fine_fn: FeFunction, coarse: FeSpace, P=None, A_fine=None, solver=None, rel_tol: float = 1e-10) -> FeFunction:
    """Ritz projection of a fine-space function onto a nested coarse space.

    The right-hand side ``<grad g, grad phi_H>`` is exact: coarse basis
    functions are fine-space functions with coefficients from ``P``.
    """
    fine = fine_fn.space
    P = prolongation(coarse, fine) if P is None else P
    A_fine = assemble_stiffness(fine, eliminate=False) if A_fine is None else A_fine
    b = (P.T @ (A_fine @ fine_fn.coefficients))[coarse.interior_dofs]
    if solver is not None:
        x = solver.solve(b)
    else:
        x = solve_spd(assemble_stiffness(coarse), b, rel_tol)
    return coarse.from_interior(x)
