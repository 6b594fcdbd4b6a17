"""Continuous Lagrange spaces of degree 1 and 2 with zero boundary trace."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .mesh import Triangulation

__all__ = [
    "eval_basis",
    "lagrange_nodes",
    "FeSpace",
    "FeFunction",
    "AnalyticFunction",
    "interpolate_nodal",
    "eval_fe",
    "write_fefunction",
    "read_fefunction",
]

# reference derivatives of the barycentric coordinates (lambda0, lambda1, lambda2)
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def lagrange_nodes(degree: int) -> np.ndarray:
    """Barycentric coordinates of the local nodes, in local DOF order.

    Degree 2 puts edge midpoints after the vertices; local edge i joins
    vertices i and i+1 (mod 3).
    """
    if degree == 0:
        return np.array([[1 / 3, 1 / 3, 1 / 3]])
    if degree == 1:
        return np.eye(3)
    if degree == 2:
        return np.array(
            [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
            dtype=float,
        )
    raise ValueError(f"unsupported degree {degree}; only 0, 1 and 2 are available")


def eval_basis(degree: int, bary) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange shape functions and their reference gradients.

    Parameters
    ----------
    degree : int
        Polynomial degree (0, 1 or 2; 0 is the element-wise constant).
    bary : array_like, shape (..., 3)
        Barycentric coordinates.

    Returns
    -------
    values : ndarray, shape (..., n_local)
    grads : ndarray, shape (..., n_local, 2)
        Derivatives with respect to the reference coordinates
        ``(xi, eta) = (lambda1, lambda2)``.
    """
    lam = np.asarray(bary, dtype=float)
    if lam.shape[-1] != 3:
        raise ValueError("barycentric coordinates must have a trailing axis of length 3")
    if degree == 0:
        vals = np.ones(lam.shape[:-1] + (1,))
        return vals, np.zeros(lam.shape[:-1] + (1, 2))
    if degree == 1:
        vals = lam.copy()
        grads = np.broadcast_to(_DLAMBDA, lam.shape[:-1] + (3, 2)).copy()
        return vals, grads
    if degree == 2:
        l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
        vals = np.stack(
            [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
            axis=-1,
        )
        d = _DLAMBDA
        g = [
            (4 * l0 - 1)[..., None] * d[0],
            (4 * l1 - 1)[..., None] * d[1],
            (4 * l2 - 1)[..., None] * d[2],
            4 * (l0[..., None] * d[1] + l1[..., None] * d[0]),
            4 * (l1[..., None] * d[2] + l2[..., None] * d[1]),
            4 * (l2[..., None] * d[0] + l0[..., None] * d[2]),
        ]
        return vals, np.stack(g, axis=-2)
    raise ValueError(f"unsupported degree {degree}; only 0, 1 and 2 are available")


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Lagrange space of degree ``k`` on ``mesh``; boundary DOFs are flagged."""

    mesh: Triangulation
    degree: int

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"unsupported degree {self.degree}; use 1 or 2")

    @property
    def n_local(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @cached_property
    def element_dof_map(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.triangles
        return np.hstack([m.triangles, m.n_vertices + m.triangle_edges])

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.vertices
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mid])

    @property
    def n_dofs(self) -> int:
        return len(self.dof_coordinates)

    @cached_property
    def interior_dof_mask(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return ~m.boundary_vertex_flags
        return ~np.r_[m.boundary_vertex_flags, m.boundary_edge_flags]

    @cached_property
    def interior_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.interior_dof_mask)

    def zero(self) -> FeFunction:
        return FeFunction(self, np.zeros(self.n_dofs))

    def from_interior(self, values) -> FeFunction:
        c = np.zeros(self.n_dofs)
        c[self.interior_dofs] = values
        return FeFunction(self, c)

    def physical_gradients(self, elems, bary) -> tuple[np.ndarray, np.ndarray]:
        """Basis values (..., n_local) and physical gradients (..., n_local, 2)."""
        vals, ref = eval_basis(self.degree, bary)
        jit = self.mesh.inv_jacobians_t[elems]
        return vals, np.einsum("...ij,...nj->...ni", jit, ref)


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Coefficient vector over the global DOFs of ``space``."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (self.space.n_dofs,):
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def interior_values(self) -> np.ndarray:
        return self.coefficients[self.space.interior_dofs]

    def local_coefficients(self, elems) -> np.ndarray:
        return self.coefficients[self.space.element_dof_map[elems]]

    def evaluate_in_elements(self, elems, bary) -> tuple[np.ndarray, np.ndarray]:
        """Value and gradient of the element polynomial on ``elems`` at ``bary``."""
        vals, grads = self.space.physical_gradients(elems, bary)
        c = self.local_coefficients(elems)
        return np.einsum("...n,...n->...", vals, c), np.einsum("...nd,...n->...d", grads, c)

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Value and gradient at arbitrary points, zero outside the domain."""
        p = np.asarray(points, dtype=float)
        elems, bary = self.space.mesh.locate(p)
        inside = elems >= 0
        v, g = self.evaluate_in_elements(np.where(inside, elems, 0), bary)
        return np.where(inside, v, 0.0), np.where(inside[..., None], g, 0.0)

    def __add__(self, other: FeFunction) -> FeFunction:
        return FeFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other: FeFunction) -> FeFunction:
        return FeFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, c: float) -> FeFunction:
        return FeFunction(self.space, c * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self) -> FeFunction:
        return FeFunction(self.space, -self.coefficients)


@dataclass(frozen=True)
class AnalyticFunction:
    """Closed-form scalar function with its gradient.

    ``value`` maps points of shape (..., 2) to shape (...) and ``gradient``
    to shape (..., 2).  Extension by zero outside the domain is left to the
    consumer, which knows the domain.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    vanishes_on_boundary: bool = True

    @classmethod
    def from_fe(cls, f: FeFunction, name: str = "fe") -> AnalyticFunction:
        return cls(name, lambda p: f.evaluate(p)[0], lambda p: f.evaluate(p)[1], True)

    def __add__(self, other: AnalyticFunction) -> AnalyticFunction:
        return AnalyticFunction(
            f"({self.name}+{other.name})",
            lambda p: self.value(p) + other.value(p),
            lambda p: self.gradient(p) + other.gradient(p),
            self.vanishes_on_boundary and other.vanishes_on_boundary,
        )

    def scaled(self, c: float) -> AnalyticFunction:
        return AnalyticFunction(
            f"{c:g}*{self.name}", lambda p: c * self.value(p), lambda p: c * self.gradient(p), self.vanishes_on_boundary
        )


def interpolate_nodal(space: FeSpace, u: AnalyticFunction, zero_boundary: bool = True) -> FeFunction:
    """Nodal interpolant; boundary DOFs are set to zero.

    With ``zero_boundary=False`` all DOFs take the nodal value, which is
    useful for local experiments with functions that do not vanish on the
    boundary.
    """
    if zero_boundary and not u.vanishes_on_boundary:
        raise ValueError(f"{u.name} does not vanish on the boundary; pass zero_boundary=False")
    c = np.asarray(u.value(space.dof_coordinates), dtype=float)
    if zero_boundary:
        c = np.where(space.interior_dof_mask, c, 0.0)
    return FeFunction(space, c)


def eval_fe(f: FeFunction, x) -> tuple[float, np.ndarray]:
    """Value and gradient at a single point (zero outside the domain)."""
    v, g = f.evaluate(np.asarray(x, dtype=float)[None, :])
    return float(v[0]), g[0]


def write_fefunction(f: FeFunction, path) -> None:
    lines = [f"FEFUN {f.space.degree} {f.space.n_dofs}"]
    lines += [f"{c:.17g}" for c in f.coefficients]
    Path(path).write_text("\n".join(lines) + "\n")


def read_fefunction(space: FeSpace, path) -> FeFunction:
    rows = [r for r in Path(path).read_text().split("\n") if r.strip()]
    head = rows[0].split()
    if len(head) != 3 or head[0] != "FEFUN":
        raise ValueError(f"{path}: missing FEFUN header")
    degree, n = int(head[1]), int(head[2])
    if degree != space.degree or n != space.n_dofs:
        raise ValueError(f"{path}: degree/size {degree}/{n} do not match the space ({space.degree}/{space.n_dofs})")
    if len(rows) - 1 != n:
        raise ValueError(f"{path}: expected {n} coefficients, found {len(rows) - 1}")
    return FeFunction(space, np.array([float(r) for r in rows[1:]]))
