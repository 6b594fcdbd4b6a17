"""Regularized Green's functions and the weighted Ritz-error diagnostic.

For a point ``z`` inside a working-mesh element, ``delta_z`` is a bubble
times a polynomial whose moments against P_k reproduce point values at
``z``.  The regularized Green's function ``g_z`` solves the Dirichlet
problem with data ``<delta_z, d_l v>``; it is computed on a nested finer
mesh and serves as reference truth.  ``G_h`` is the sup over ``z`` and
``x`` of ``|grad(R_h g_z - g_z)(x)| / phi_{h,z}(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from .fem import AnalyticFunction, FeFunction, FeSpace, interpolate_nodal
from .fields import PiecewiseField
from .maximal import RadiusGrid, maximal_value
from .mesh import Triangulation
from .quadrature import composite_rule, triangle_rule
from .ritz import SpdFactor, assemble_stiffness, prolongation, project_nested, ritz_project, solve_spd

__all__ = [
    "RegularizedDelta",
    "build_delta",
    "moment_residual",
    "solve_regularized_green",
    "PhiWeight",
    "make_phi_weight",
    "phi_eval",
    "AnnulusDecomposition",
    "convolution_check",
    "GreenProbe",
    "compute_Gh",
    "green_sweep",
    "plane_constant",
    "phi_mass",
    "annulus_areas",
    "green_rhs",
    "green_sample_points",
    "annuli_diagnostics",
    "holder_estimate",
    "LocalErrorReport",
    "local_error_check",
]

BUBBLE_POWER = 2


def _monomial_exponents(k: int):
    return [(a, b) for d in range(k + 1) for a in range(d, -1, -1) for b in [d - a]]


def _ref_monomials(k: int, bary) -> np.ndarray:
    xi, eta = bary[..., 1], bary[..., 2]
    return np.stack([xi**a * eta**b for a, b in _monomial_exponents(k)], axis=-1)


def _bubble(bary) -> np.ndarray:
    return np.prod(bary, axis=-1) ** BUBBLE_POWER


@dataclass(frozen=True, eq=False)
class RegularizedDelta:
    """``delta_z = (l0 l1 l2)**2 * q`` on the host triangle, zero elsewhere.

    ``coefficients`` expand ``q`` in the monomials ``xi**a eta**b`` of the
    host's reference coordinates.
    """

    mesh: Triangulation
    host: int
    z: np.ndarray
    degree: int
    coefficients: np.ndarray
    bubble_power: int = BUBBLE_POWER

    def in_host(self, bary) -> np.ndarray:
        return _bubble(bary) * (_ref_monomials(self.degree, bary) @ self.coefficients)

    def evaluate(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        bary = self.mesh.barycentric(np.full(p.shape[:-1], self.host), p)
        inside = bary.min(axis=-1) >= 0.0
        return np.where(inside, self.in_host(np.clip(bary, 0.0, 1.0)), 0.0)

    def sup_norm(self, n: int = 40) -> float:
        """Max over a barycentric lattice of resolution ``n``."""
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        b = np.column_stack([n - i[keep] - j[keep], i[keep], j[keep]]) / n
        return float(np.abs(self.in_host(b)).max())


def build_delta(mesh: Triangulation, degree: int, z) -> RegularizedDelta:
    """Solve the moment system ``int_T b q P = P(z)`` for ``q`` in P_k."""
    z = np.asarray(z, dtype=float)
    elems, bary = mesh.locate(z[None])
    host = int(elems[0])
    if host < 0:
        raise ValueError(f"z = {z} lies outside the mesh")
    if bary[0].min() < 1e-10:
        raise ValueError(f"z = {z} lies on an element boundary; move it into the element interior")
    rule = triangle_rule(2 * degree + 6)
    P = _ref_monomials(degree, rule.points)  # (Q, m)
    b = _bubble(rule.points)
    area = mesh.areas[host]
    gram = area * np.einsum("q,q,qi,qj->ij", rule.weights, b, P, P)
    coef = np.linalg.solve(gram, _ref_monomials(degree, bary[0]))
    return RegularizedDelta(mesh, host, z, degree, coef)


def moment_residual(delta: RegularizedDelta) -> float:
    """Max over physical monomials x^a y^b (a+b <= k) of ``|int delta P - P(z)|``."""
    rule = triangle_rule(2 * delta.degree + 6)
    mesh = delta.mesh
    pts = mesh.to_physical(delta.host, rule.points)
    dv = delta.in_host(rule.points)
    area = mesh.areas[delta.host]
    res = 0.0
    for a, b in _monomial_exponents(delta.degree):
        integral = area * np.sum(rule.weights * dv * pts[:, 0] ** a * pts[:, 1] ** b)
        res = max(res, abs(integral - delta.z[0] ** a * delta.z[1] ** b))
    return res


def _check_nested(fine_mesh: Triangulation, coarse_mesh: Triangulation):
    if fine_mesh.level < coarse_mesh.level or fine_mesh.mesh_at_level(coarse_mesh.level) is not coarse_mesh:
        raise ValueError("fine mesh must be a refinement of the working mesh")


def green_rhs(fine_space: FeSpace, delta: RegularizedDelta, l: int) -> np.ndarray:
    """Interior load vector ``<delta_z, d_l phi_i>``, exact on the host element."""
    if l not in (1, 2):
        raise ValueError("component l must be 1 or 2")
    mesh = fine_space.mesh
    _check_nested(mesh, delta.mesh)
    elems = np.flatnonzero(mesh.ancestors(delta.mesh.level) == delta.host)
    rule = triangle_rule(2 * fine_space.degree + 6)
    pts = mesh.to_physical(elems[:, None], rule.points[None])
    hb = delta.mesh.barycentric(np.full(pts.shape[:-1], delta.host), pts)
    dv = delta.in_host(np.clip(hb, 0.0, 1.0))  # (E, Q)
    _, grads = fine_space.physical_gradients(elems[:, None], rule.points[None])  # (E, Q, n, 2)
    local = np.einsum("q,eq,eqn->en", rule.weights, dv, grads[..., l - 1]) * mesh.areas[elems, None]
    full = np.bincount(fine_space.element_dof_map[elems].ravel(), weights=local.ravel(), minlength=fine_space.n_dofs)
    return full[fine_space.interior_dofs]


def solve_regularized_green(
    fine_space: FeSpace, delta: RegularizedDelta, l: int = 1, rel_tol: float = 1e-10, solver=None
) -> FeFunction:
    """Galerkin approximation of ``g_z`` on ``fine_space``."""
    b = green_rhs(fine_space, delta, l)
    if solver is not None:
        x = solver.solve(b)
    else:
        x = solve_spd(assemble_stiffness(fine_space), b, rel_tol)
    return fine_space.from_interior(x)


# --------------------------------------------------------------------------
# weight family


@dataclass(frozen=True)
class PhiWeight:
    """``c1 eps**gamma (|x - z|**2 + K**2 eps**2)**(-(2 + gamma)/2)``."""

    epsilon: float
    z: np.ndarray
    K: float
    gamma: float
    c1: float
    alpha: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0 or self.K <= 2:
            raise ValueError("need epsilon > 0 and K > 2")
        if not (0 < self.gamma < self.alpha):
            raise ValueError("need 0 < gamma < alpha")

    def unnormalized(self, x) -> np.ndarray:
        d2 = np.sum((np.asarray(x, dtype=float) - self.z) ** 2, axis=-1)
        return self.epsilon**self.gamma * (d2 + (self.K * self.epsilon) ** 2) ** (-(2 + self.gamma) / 2)

    def __call__(self, x) -> np.ndarray:
        return self.c1 * self.unnormalized(x)


def _phi_rule(mesh: Triangulation, width: float):
    splits = max(0, ceil(log2(max(mesh.mesh_size_h / (width / 4.0), 1.0))))
    return composite_rule(12, min(splits, 3))


def make_phi_weight(mesh: Triangulation, epsilon: float, z, K: float = 4.0, gamma: float = 0.25, alpha: float = 0.5) -> PhiWeight:
    """Weight normalized to unit mass over the mesh domain."""
    z = np.asarray(z, dtype=float)
    w = PhiWeight(epsilon, z, K, gamma, 1.0, alpha)
    rule = _phi_rule(mesh, K * epsilon)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None])
    mass = np.sum(w.unnormalized(pts) @ rule.weights * mesh.areas)
    return PhiWeight(epsilon, z, K, gamma, 1.0 / mass, alpha)


def phi_eval(w: PhiWeight, x) -> np.ndarray:
    return w(x)


def phi_mass(w: PhiWeight, mesh: Triangulation) -> float:
    rule = _phi_rule(mesh, w.K * w.epsilon)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None])
    return float(np.sum(w(pts) @ rule.weights * mesh.areas))


# --------------------------------------------------------------------------
# dyadic annuli


@dataclass(frozen=True)
class AnnulusDecomposition:
    """Radii ``d_j = 2**j K h`` about ``z``; ``B_j = {|x - z| < d_j}``."""

    z: np.ndarray
    h: float
    K: float
    n_annuli: int

    @classmethod
    def covering(cls, mesh: Triangulation, z, h: float, K: float = 4.0) -> AnnulusDecomposition:
        """Enough annuli for ``B_{J-1}`` to contain the whole domain."""
        z = np.asarray(z, dtype=float)
        far = float(np.max(np.linalg.norm(mesh.hull.vertices - z, axis=1)))
        J = max(0, ceil(log2(far / (K * h)))) + 1
        return cls(z, h, K, J + 1)

    def radius(self, j: int) -> float:
        return 0.0 if j < 0 else 2.0**j * self.K * self.h

    @property
    def radii(self) -> np.ndarray:
        return np.array([self.radius(j) for j in range(self.n_annuli)])

    def in_ball(self, j: int, x) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float) - self.z, axis=-1)
        return r < self.radius(j) if j >= 0 else np.zeros(r.shape, dtype=bool)

    def in_shell(self, outer: int, inner: int, x) -> np.ndarray:
        return self.in_ball(outer, x) & ~self.in_ball(inner, x)

    def in_A(self, j, x):
        return self.in_shell(j, j - 1, x)

    def in_A_plus(self, j, x):
        return self.in_shell(j + 1, j - 2, x)

    def in_A_plusplus(self, j, x):
        return self.in_shell(j + 2, j - 3, x)

    def index(self, x) -> np.ndarray:
        """Annulus index of each point (``n_annuli`` beyond the last radius)."""
        r = np.linalg.norm(np.asarray(x, dtype=float) - self.z, axis=-1)
        return np.searchsorted(self.radii, r, side="right")


def annulus_areas(decomp: AnnulusDecomposition, mesh: Triangulation, splits: int = 3) -> np.ndarray:
    """``|A_j cap Omega|`` by indicator quadrature on a composite rule."""
    rule = composite_rule(2, splits)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None])
    w = mesh.areas[:, None] * rule.weights[None, :]
    idx = decomp.index(pts).ravel()
    return np.bincount(idx, weights=w.ravel(), minlength=decomp.n_annuli + 1)[: decomp.n_annuli]


def holder_estimate(
    f: PiecewiseField,
    region,
    alpha: float,
    n_pairs: int = 10_000,
    seed: int = 0,
    anchors=None,
    min_separation: float = 0.0,
    bbox=None,
) -> float:
    """Sampled lower bound for the Hölder seminorm of ``f`` on a region.

    ``region`` is a predicate on points (..., 2).  Pairs are drawn among
    random points in the region; every anchor is also paired with each
    sampled point.  For vector fields the max over components is taken.
    """
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    lo, hi = f.mesh.bounding_box if bbox is None else (np.asarray(bbox[0]), np.asarray(bbox[1]))
    pts = lo + (hi - lo) * rng.random((max(2 * n_pairs, 64), 2))
    pts = pts[region(pts) & f.mesh.contains(pts)]
    if len(pts) < 2:
        raise ValueError("fewer than two sample points fall in the region")
    i = rng.integers(0, len(pts), n_pairs)
    j = rng.integers(0, len(pts), n_pairs)
    x, y = pts[i], pts[j]
    if anchors is not None:
        a = np.asarray(anchors, dtype=float).reshape(-1, 2)
        x = np.vstack([x] + [np.repeat(p[None], len(pts), axis=0) for p in a])
        y = np.vstack([y] + [pts for _ in a])
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > max(min_separation, 0.0)
    if not np.any(keep):
        return 0.0
    diff = np.abs(f.evaluate(x[keep]) - f.evaluate(y[keep])).max(axis=1)
    return float(np.max(diff / dist[keep] ** alpha))


def annuli_diagnostics(
    decomp: AnnulusDecomposition,
    g_ref: FeFunction,
    alpha: float = 0.5,
    n_pairs: int = 4000,
    seed: int = 0,
    min_separation: float | None = None,
) -> list[dict]:
    """One row per nonempty annulus: radius, area, Hölder quotient of
    ``grad g_ref`` on ``A_j^{++}`` and that quotient times ``d_j**(2 + alpha)``."""
    mesh = g_ref.space.mesh
    f = PiecewiseField.from_fe_gradient(g_ref)
    sep = 2.0 * mesh.mesh_size_h if min_separation is None else min_separation
    areas = annulus_areas(decomp, mesh)
    rows = []
    for j in range(decomp.n_annuli):
        if areas[j] <= 0.0:
            continue
        d = decomp.radius(j)
        try:
            q = holder_estimate(f, lambda p: decomp.in_A_plusplus(j, p), alpha, n_pairs, seed + j, min_separation=sep)
        except ValueError:
            continue
        rows.append(
            {"j": j, "d_j": d, "area": float(areas[j]), "holder": q, "normalized": q * d ** (2 + alpha), "hypothesis": j >= 3}
        )
    return rows


# --------------------------------------------------------------------------
# convolution lemma


def convolution_check(f: PiecewiseField, w: PhiWeight, maximal: float | None = None, grid: RadiusGrid | None = None) -> float:
    """``int phi_{eps,z} |f| / M[f](z)``, refining the rule near ``z``."""
    mesh = f.mesh
    near = np.linalg.norm(mesh.centroids - w.z, axis=1) < 3.0 * w.K * w.epsilon + mesh.mesh_size_h
    num = 0.0
    for mask, rule in ((near, composite_rule(12, 2)), (~near, triangle_rule(12))):
        elems = np.flatnonzero(mask)
        if len(elems) == 0:
            continue
        pts = mesh.to_physical(elems[:, None], rule.points[None])
        vals = f.evaluate_in_elements(elems[:, None], rule.points[None])
        mag = np.sqrt(np.einsum("eqc,eqc->eq", vals, vals))
        num += float(np.sum((w(pts) * mag) @ rule.weights * mesh.areas[elems]))
    m = maximal_value(f, w.z, grid) if maximal is None else maximal
    if m == 0.0:
        if num == 0.0:
            return 0.0
        import warnings

        warnings.warn("zero maximal value with nonzero weighted integral", RuntimeWarning, stacklevel=2)
        return float("inf")
    return num / m


# --------------------------------------------------------------------------
# G_h


def green_sample_points(mesh: Triangulation, cap: int = 200, bary=(0.5, 0.3, 0.2)) -> np.ndarray:
    """One shifted interior point per element, deterministically subsampled to ``cap``."""
    n = mesh.n_triangles
    elems = np.arange(n) if n <= cap else np.unique(np.linspace(0, n - 1, cap).round().astype(int))
    return mesh.to_physical(elems, np.asarray(bary, dtype=float)[None, :].repeat(len(elems), 0))


def plane_constant(K: float, gamma: float) -> float:
    """``c1`` giving the weight unit mass over the whole plane (independent of eps)."""
    return gamma * K**gamma / (2.0 * np.pi)


@dataclass
class GreenProbe:
    """Per-``z`` results of a G_h sweep.

    ``weighted_error[K]`` uses the weight normalized to unit mass on the
    domain; ``plane_error[K]`` uses :func:`plane_constant` instead.
    """

    zs: np.ndarray
    weighted_error: dict  # K -> (n_z,) sup_x |grad(R_h g - g)| / phi
    plane_error: dict
    grad_g_sup: np.ndarray  # ||grad g_z||_inf on the sample x
    h: float
    K: float

    @property
    def value(self) -> float:
        return self.value_for(self.K)

    def value_for(self, K: float, plane: bool = False) -> float:
        errs = (self.plane_error if plane else self.weighted_error)[K]
        return float(errs.max(initial=0.0))

    @property
    def grad_scaling(self) -> float:
        return float(self.grad_g_sup.max(initial=0.0) * self.h**2)


def green_sweep(
    working_space: FeSpace,
    fine_space: FeSpace,
    K: float = 4.0,
    gamma: float = 0.25,
    sample_zs=None,
    sample_xs=None,
    l: int = 1,
    alpha: float = 0.5,
    rel_tol: float = 1e-10,
    extra_K=(),
) -> GreenProbe:
    """Solve for ``g_z`` once per sample ``z`` and score the Ritz error
    against the weight for ``K`` and every value in ``extra_K``."""
    wmesh, fmesh = working_space.mesh, fine_space.mesh
    _check_nested(fmesh, wmesh)
    if working_space.degree != fine_space.degree:
        raise ValueError("working and fine spaces must share the degree")
    zs = green_sample_points(wmesh) if sample_zs is None else np.asarray(sample_zs, dtype=float).reshape(-1, 2)
    Ks = [K] + [k for k in extra_K if k != K]
    h = wmesh.mesh_size_h
    same = fmesh is wmesh
    if sample_xs is None:
        f_elems = np.arange(fmesh.n_triangles)
        f_bary = np.full((fmesh.n_triangles, 3), 1.0 / 3.0)
        xs = fmesh.centroids
    else:
        xs = np.asarray(sample_xs, dtype=float)
        f_elems, f_bary = fmesh.locate(xs)
        if np.any(f_elems < 0):
            raise ValueError("sample x outside the domain")
    w_elems = fmesh.ancestors(wmesh.level)[f_elems]
    w_bary = wmesh.barycentric(w_elems, xs)
    _, w_grads = working_space.physical_gradients(w_elems, w_bary)
    w_dofs = working_space.element_dof_map[w_elems]

    fine_solver = SpdFactor(assemble_stiffness(fine_space))
    if not same:
        P = prolongation(working_space, fine_space)
        A_fine = assemble_stiffness(fine_space, eliminate=False)
        coarse_solver = SpdFactor(assemble_stiffness(working_space))
    err = {k: np.zeros(len(zs)) for k in Ks}
    plane = {k: np.zeros(len(zs)) for k in Ks}
    gsup = np.zeros(len(zs))
    for i, z in enumerate(zs):
        delta = build_delta(wmesh, working_space.degree, z)
        g = solve_regularized_green(fine_space, delta, l, rel_tol, solver=fine_solver)
        _, gg = g.evaluate_in_elements(f_elems, f_bary)
        gsup[i] = np.sqrt(np.einsum("nd,nd->n", gg, gg)).max()
        if same:
            continue  # R_h g = g on the same space
        rg = project_nested(g, working_space, P=P, A_fine=A_fine, solver=coarse_solver)
        rgg = np.einsum("nkd,nk->nd", w_grads, rg.coefficients[w_dofs])
        diff = np.sqrt(np.sum((rgg - gg) ** 2, axis=1))
        for k in Ks:
            wgt = make_phi_weight(fmesh, h, z, k, gamma, alpha)
            raw = np.max(diff / wgt.unnormalized(xs))
            err[k][i] = raw / wgt.c1
            plane[k][i] = raw / plane_constant(k, gamma)
    return GreenProbe(zs, err, plane, gsup, h, K)


def compute_Gh(
    working_space: FeSpace,
    fine_space: FeSpace,
    K: float = 4.0,
    gamma: float = 0.25,
    sample_zs=None,
    sample_xs=None,
    l: int = 1,
    alpha: float = 0.5,
    rel_tol: float = 1e-10,
) -> float:
    """Sampled ``sup_z sup_x |grad(R_h g_z - g_z)(x)| / phi_{h,z}(x)``."""
    return green_sweep(working_space, fine_space, K, gamma, sample_zs, sample_xs, l, alpha, rel_tol).value


# --------------------------------------------------------------------------
# local error estimate


@dataclass(frozen=True)
class LocalErrorReport:
    lhs: float
    grad_interp: float
    value_interp: float
    l2_ritz: float

    @property
    def rhs(self) -> float:
        return self.grad_interp + self.value_interp + self.l2_ritz

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else float("inf"))


def local_error_check(
    working_space: FeSpace,
    w: AnalyticFunction,
    z,
    d: float,
    k0: float = 4.0,
    ritz: FeFunction | None = None,
    rel_tol: float = 1e-10,
    splits: int = 2,
) -> LocalErrorReport:
    """Both sides of the local energy error estimate on ``D = Omega cap B(z, d)``.

    The right-hand side uses the nodal interpolant as ``w_h``; sup norms
    are sampled on a composite rule over the elements meeting ``D``.
    """
    mesh = working_space.mesh
    h = mesh.mesh_size_h
    if d < k0 * h * (1 - 1e-12):
        raise ValueError(f"d = {d} is below k0 * h = {k0 * h}")
    z = np.asarray(z, dtype=float)
    rh = ritz_project(working_space, w, rel_tol) if ritz is None else ritz
    wh = interpolate_nodal(working_space, w)
    _, grh = rh.evaluate(z[None])
    lhs = float(np.linalg.norm(w.gradient(z[None])[0] - grh[0]))

    elems = np.flatnonzero(np.linalg.norm(mesh.centroids - z, axis=1) < d + mesh.diameters)
    rule = composite_rule(6, splits)
    pts = mesh.to_physical(elems[:, None], rule.points[None])
    inD = np.linalg.norm(pts - z, axis=-1) < d
    wv, wg = np.asarray(w.value(pts)), np.asarray(w.gradient(pts))
    iv, ig = wh.evaluate_in_elements(elems[:, None], rule.points[None])
    rv, _ = rh.evaluate_in_elements(elems[:, None], rule.points[None])
    gi = np.where(inD, np.linalg.norm(wg - ig, axis=-1), 0.0).max(initial=0.0)
    vi = np.where(inD, np.abs(wv - iv), 0.0).max(initial=0.0)
    l2 = np.sqrt(np.sum(np.where(inD, (wv - rv) ** 2, 0.0) @ rule.weights * mesh.areas[elems]))
    return LocalErrorReport(lhs, float(gi), float(vi / d), float(l2 / d**2))
