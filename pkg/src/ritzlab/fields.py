"""Scalar and vector fields on a triangulated domain, extended by zero."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import AnalyticFunction, FeFunction, eval_basis, lagrange_nodes
from .mesh import Triangulation
from .quadrature import QuadratureRule, triangle_rule

__all__ = ["PiecewiseField"]


@dataclass(frozen=True, eq=False)
class PiecewiseField:
    """A field on ``mesh`` that vanishes identically outside the domain.

    Two representations are supported: an element-wise polynomial table
    (``table[e, i, c]`` is component ``c`` at local Lagrange node ``i`` of
    degree ``degree`` on element ``e``) and a closed-form callable.  The mesh
    doubles as the integration partition for norms.
    """

    mesh: Triangulation
    ncomp: int
    table: np.ndarray | None = None
    degree: int | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if (self.table is None) == (self.func is None):
            raise ValueError("give exactly one of table or func")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            n_local = len(lagrange_nodes(self.degree))
            if t.shape != (self.mesh.n_triangles, n_local, self.ncomp):
                raise ValueError(f"table shape {t.shape} does not match mesh and degree {self.degree}")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    # construction -----------------------------------------------------

    @classmethod
    def from_fe_gradient(cls, f: FeFunction) -> PiecewiseField:
        k = f.space.degree
        nodes = lagrange_nodes(k - 1)
        elems = np.arange(f.space.mesh.n_triangles)[:, None]
        _, g = f.evaluate_in_elements(elems, nodes[None])
        return cls(f.space.mesh, 2, table=g, degree=k - 1, name="grad_fe")

    @classmethod
    def from_fe_value(cls, f: FeFunction) -> PiecewiseField:
        k = f.space.degree
        elems = np.arange(f.space.mesh.n_triangles)[:, None]
        v, _ = f.evaluate_in_elements(elems, lagrange_nodes(k)[None])
        return cls(f.space.mesh, 1, table=v[..., None], degree=k, name="fe")

    @classmethod
    def from_analytic_gradient(cls, u: AnalyticFunction, mesh: Triangulation) -> PiecewiseField:
        return cls(mesh, 2, func=u.gradient, name=f"grad_{u.name}")

    @classmethod
    def from_analytic_value(cls, u: AnalyticFunction, mesh: Triangulation) -> PiecewiseField:
        return cls(mesh, 1, func=lambda p: np.asarray(u.value(p))[..., None], name=u.name)

    @classmethod
    def from_callable(cls, func, mesh: Triangulation, ncomp: int = 1, name: str = "") -> PiecewiseField:
        """``func`` maps points (..., 2) to (..., ncomp), or to (...) when scalar."""
        if ncomp == 1:
            return cls(mesh, 1, func=lambda p: np.asarray(func(p), dtype=float).reshape(p.shape[:-1] + (1,)), name=name)
        return cls(mesh, ncomp, func=func, name=name)

    @classmethod
    def from_element_values(cls, mesh: Triangulation, values, name: str = "") -> PiecewiseField:
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return cls(mesh, v.shape[1], table=v[:, None, :], degree=0, name=name)

    # evaluation -------------------------------------------------------

    def evaluate_in_elements(self, elems, bary) -> np.ndarray:
        """Values (..., ncomp) on element ``elems`` at barycentric ``bary``."""
        if self.table is not None:
            vals, _ = eval_basis(self.degree, bary)
            return np.einsum("...n,...nc->...c", vals, self.table[elems])
        pts = self.mesh.to_physical(elems, bary)
        return np.asarray(self.func(pts), dtype=float).reshape(pts.shape[:-1] + (self.ncomp,))

    def evaluate(self, points) -> np.ndarray:
        """Values (..., ncomp) at arbitrary points; exactly zero outside."""
        p = np.asarray(points, dtype=float)
        if self.table is None:
            inside = self.mesh.contains(p)
            with np.errstate(all="ignore"):
                v = np.asarray(self.func(p), dtype=float).reshape(p.shape[:-1] + (self.ncomp,))
            return np.where(inside[..., None], v, 0.0)
        elems, bary = self.mesh.locate(p)
        inside = elems >= 0
        v = self.evaluate_in_elements(np.where(inside, elems, 0), bary)
        return np.where(inside[..., None], v, 0.0)

    def magnitude(self, points) -> np.ndarray:
        """Pointwise Euclidean norm, zero outside the domain."""
        v = self.evaluate(points)
        if self.ncomp == 1:
            return np.abs(v[..., 0])
        return np.sqrt(np.einsum("...c,...c->...", v, v))

    def quadrature(self, rule: QuadratureRule | int = 12):
        """Physical points (E, Q, 2), weights (E, Q) and values (E, Q, ncomp)
        of an element-by-element rule over the whole mesh."""
        if isinstance(rule, int):
            rule = triangle_rule(rule)
        elems = np.arange(self.mesh.n_triangles)[:, None]
        pts = self.mesh.to_physical(elems, rule.points[None])
        w = self.mesh.areas[:, None] * rule.weights[None, :]
        vals = self.evaluate_in_elements(elems, rule.points[None])
        return pts, w, vals

    # algebra ----------------------------------------------------------

    def _same_table_layout(self, other) -> bool:
        return (
            self.table is not None
            and other.table is not None
            and other.mesh is self.mesh
            and other.degree == self.degree
            and other.ncomp == self.ncomp
        )

    def __add__(self, other: PiecewiseField) -> PiecewiseField:
        if other.ncomp != self.ncomp:
            raise ValueError("component counts differ")
        if self._same_table_layout(other):
            return PiecewiseField(self.mesh, self.ncomp, table=self.table + other.table, degree=self.degree)
        if other.mesh is self.mesh:
            return PiecewiseField(
                self.mesh, self.ncomp, func=lambda p: self.evaluate(p) + other.evaluate(p), name=f"{self.name}+{other.name}"
            )
        raise ValueError("fields live on different meshes")

    def __sub__(self, other: PiecewiseField) -> PiecewiseField:
        return self + other * -1.0

    def __mul__(self, c: float) -> PiecewiseField:
        if self.table is not None:
            return PiecewiseField(self.mesh, self.ncomp, table=c * self.table, degree=self.degree, name=self.name)
        f = self.func
        return PiecewiseField(self.mesh, self.ncomp, func=lambda p: c * np.asarray(f(p)), name=self.name)

    __rmul__ = __mul__
