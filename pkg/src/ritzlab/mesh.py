"""Conforming triangulations of convex polygons.

Meshes are built by a centroid fan and refined by red (4-to-1) refinement,
so every refinement produces triangles similar to their parents and the
shape-regularity ratio is preserved exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "ConvexPolygon",
    "Triangulation",
    "named_polygon",
    "triangulate_polygon",
    "refine_uniform",
    "refine_to_level",
    "shape_regularity",
    "quasiuniformity",
    "locate_point",
    "write_mesh",
    "read_mesh",
]


@dataclass(frozen=True)
class ConvexPolygon:
    """A strictly convex polygon with counter-clockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("polygon vertices must have shape (n, 2)")
        if len(v) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(v)}")
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        d[np.diag_indices(len(v))] = np.inf
        if d.min() <= 0.0:
            raise ValueError("polygon has repeated vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0.0):
            bad = np.flatnonzero(cross <= 0.0).tolist()
            raise ValueError(
                f"polygon is not strictly convex and counter-clockwise (turns at vertices {bad})"
            )
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None, :], axis=-1)))

    @property
    def _halfplanes(self):
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        normal = np.column_stack([e[:, 1], -e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
        return normal, np.einsum("ij,ij->i", normal, v)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Closed membership test, vectorized over ``points`` of shape (..., 2)."""
        p = np.asarray(points, dtype=float)
        normal, offset = self._halfplanes
        out = np.ones(p.shape[:-1], dtype=bool)
        for (nx, ny), c in zip(normal, offset):
            out &= p[..., 0] * nx + p[..., 1] * ny <= c + tol
        return out


def named_polygon(name: str) -> ConvexPolygon:
    """Polygons available by name in configs and on the command line."""
    if name == "square":
        return ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    if name == "triangle":
        return ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]]))
    if name == "hexagon":
        t = np.arange(6) * np.pi / 3.0
        return ConvexPolygon(np.column_stack([np.cos(t), np.sin(t)]))
    raise ValueError(f"unknown polygon {name!r}; valid names: square, triangle, hexagon")


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable conforming triangle mesh.

    ``parent`` maps each triangle to the triangle of ``coarse`` it was cut
    from; both are ``None`` for a level-0 mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex_flags: np.ndarray
    level: int = 0
    parent: np.ndarray | None = None
    coarse: Triangulation | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        b = np.ascontiguousarray(self.boundary_vertex_flags, dtype=bool)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("vertices must be (n, 2) and triangles (m, 3)")
        if b.shape != (len(v),):
            raise ValueError("one boundary flag per vertex required")
        for a in (v, t, b):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_vertex_flags", b)
        if np.any(self.signed_areas <= 0.0):
            raise ValueError("triangles must be positively oriented with positive area")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (m, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map from the reference triangle: columns are the two edge vectors."""
        c = self.corners
        return np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=-1)

    @cached_property
    def inv_jacobians_t(self) -> np.ndarray:
        """``J^{-T}``, mapping reference gradients to physical gradients."""
        return np.linalg.inv(self.jacobians).transpose(0, 2, 1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        lengths = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=-1)
        return lengths.max(axis=1)

    @cached_property
    def inradii(self) -> np.ndarray:
        c = self.corners
        perimeter = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=-1).sum(axis=1)
        return 2.0 * self.areas / perimeter

    @property
    def mesh_size_h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = np.sort(t[:, local].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (n_edges, 2)."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge indices per triangle, local edge i joins local vertices i and i+1."""
        return self._edge_data[1]

    @property
    def boundary_edge_flags(self) -> np.ndarray:
        return self._edge_data[2] == 1

    @cached_property
    def hull(self) -> ConvexPolygon:
        """The polygon covered by the mesh, recovered from its boundary vertices."""
        from scipy.spatial import ConvexHull

        bv = self.vertices[self.boundary_vertex_flags]
        h = ConvexHull(bv)
        return ConvexPolygon(bv[h.vertices])

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def diameter(self) -> float:
        return self.hull.diameter

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        return self.hull.contains(points, tol=tol)

    def to_physical(self, elems, bary) -> np.ndarray:
        """Map barycentric coordinates on triangles ``elems`` to points."""
        return np.einsum("...k,...kd->...d", bary, self.corners[elems])

    def barycentric(self, elems, points) -> np.ndarray:
        c = self.corners[elems]
        rel = np.asarray(points, dtype=float) - c[..., 0, :]
        ref = np.einsum("...ij,...j->...i", np.linalg.inv(self.jacobians[elems]), rel)
        return np.concatenate([1.0 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)

    def ancestors(self, level: int) -> np.ndarray:
        """Index of the containing triangle on the coarser mesh at ``level``."""
        if level > self.level:
            raise ValueError(f"level {level} is finer than this mesh (level {self.level})")
        idx = np.arange(self.n_triangles)
        mesh = self
        while mesh.level > level:
            if mesh.parent is None or mesh.coarse is None:
                raise ValueError("mesh does not carry its refinement history")
            idx = mesh.parent[idx]
            mesh = mesh.coarse
        return idx

    def mesh_at_level(self, level: int) -> Triangulation:
        mesh = self
        while mesh.level > level:
            if mesh.coarse is None:
                raise ValueError("mesh does not carry its refinement history")
            mesh = mesh.coarse
        if mesh.level != level:
            raise ValueError(f"no mesh at level {level} in the hierarchy")
        return mesh

    @cached_property
    def _locator(self):
        return _BucketLocator(self)

    def locate(self, points, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized point location.

        Returns triangle indices (-1 outside) and barycentric coordinates.
        Points on shared edges go to the lowest-indexed triangle.
        """
        return self._locator.locate(points, tol)


class _BucketLocator:
    """Uniform bucket grid over the bounding box listing overlapping triangles."""

    def __init__(self, mesh: Triangulation, per_bucket: float = 2.0):
        lo, hi = mesh.bounding_box
        span = np.maximum(hi - lo, 1e-300)
        n = max(1, int(np.sqrt(mesh.n_triangles / per_bucket)))
        self.lo = lo
        self.n = n
        self.cell = span / n
        c = mesh.corners
        tlo = np.floor((c.min(axis=1) - lo) / self.cell - 1e-9).astype(int).clip(0, n - 1)
        thi = np.floor((c.max(axis=1) - lo) / self.cell + 1e-9).astype(int).clip(0, n - 1)
        buckets: list[list[int]] = [[] for _ in range(n * n)]
        for t in range(mesh.n_triangles):
            for i in range(tlo[t, 0], thi[t, 0] + 1):
                for j in range(tlo[t, 1], thi[t, 1] + 1):
                    buckets[i * n + j].append(t)
        width = max(len(b) for b in buckets)
        table = np.full((n * n, width), -1, dtype=np.int64)
        for k, b in enumerate(buckets):
            table[k, : len(b)] = b
        self.table = table
        self.mesh = mesh
        self.origin = c[:, 0]
        self.inv_jac = np.linalg.inv(mesh.jacobians)

    def locate(self, points, tol):
        p = np.asarray(points, dtype=float)
        shape = p.shape[:-1]
        p = p.reshape(-1, 2)
        elems = np.full(len(p), -1, dtype=np.int64)
        bary = np.zeros((len(p), 3))
        chunk = max(1, 400_000 // self.table.shape[1])
        for s in range(0, len(p), chunk):
            e, b = self._locate_chunk(p[s : s + chunk], tol)
            elems[s : s + chunk] = e
            bary[s : s + chunk] = b
        return elems.reshape(shape), bary.reshape(shape + (3,))

    def _locate_chunk(self, p, tol):
        n = self.n
        slack = 1e-9 * self.cell * self.n
        valid = np.all((p >= self.lo - slack) & (p <= self.lo + self.cell * n + slack), axis=1)
        ij = np.floor((p - self.lo) / self.cell).astype(int).clip(0, n - 1)
        cand = self.table[ij[:, 0] * n + ij[:, 1]]
        safe = np.where(cand >= 0, cand, 0)
        rel = p[:, None, :] - self.origin[safe]
        ref = np.einsum("pcij,pcj->pci", self.inv_jac[safe], rel)
        b = np.concatenate([1.0 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)
        inside = (b.min(axis=-1) >= -tol) & (cand >= 0) & valid[:, None]
        # candidates are stored in ascending index order, so the first hit is the lowest
        first = np.argmax(inside, axis=1)
        found = inside[np.arange(len(p)), first]
        elems = np.where(found, cand[np.arange(len(p)), first], -1)
        bary = b[np.arange(len(p)), first]
        bary = np.where(found[:, None], np.clip(bary, 0.0, 1.0), 0.0)
        bary /= np.where(found, bary.sum(axis=1), 1.0)[:, None]
        return elems, bary


def triangulate_polygon(poly: ConvexPolygon, max_h_fraction: float = 0.5) -> Triangulation:
    """Level-0 mesh: a fan about the vertex centroid, red-refined until the
    mesh size is at most ``max_h_fraction`` times the polygon diameter.

    Pass ``max_h_fraction=inf`` for the bare fan.
    """
    v = poly.vertices
    n = len(v)
    verts = np.vstack([v, v.mean(axis=0)])
    tris = np.array([[i, (i + 1) % n, n] for i in range(n)])
    flags = np.r_[np.ones(n, dtype=bool), False]
    mesh = Triangulation(verts, tris, flags, level=0)
    while mesh.mesh_size_h > max_h_fraction * poly.diameter * (1 + 1e-12):
        fine = refine_uniform(mesh)
        mesh = Triangulation(fine.vertices, fine.triangles, fine.boundary_vertex_flags, level=0)
    return mesh


def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Red refinement: split every triangle into four similar children."""
    nv = mesh.n_vertices
    edges = mesh.edges
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mid])
    flags = np.r_[mesh.boundary_vertex_flags, mesh.boundary_edge_flags]
    t = mesh.triangles
    m = nv + mesh.triangle_edges  # m[:, 0] between v0,v1; m[:, 1] v1,v2; m[:, 2] v2,v0
    children = np.stack(
        [
            np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_triangles), 4)
    return Triangulation(verts, children, flags, level=mesh.level + 1, parent=parent, coarse=mesh)


def refine_to_level(poly_or_mesh, level: int) -> Triangulation:
    mesh = poly_or_mesh
    if isinstance(mesh, ConvexPolygon):
        mesh = triangulate_polygon(mesh)
    while mesh.level < level:
        mesh = refine_uniform(mesh)
    return mesh


def shape_regularity(mesh: Triangulation) -> float:
    """max over triangles of diameter / inradius."""
    return float(np.max(mesh.diameters / mesh.inradii))


def quasiuniformity(mesh: Triangulation) -> float:
    """max diameter / min diameter."""
    return float(mesh.diameters.max() / mesh.diameters.min())


def locate_point(mesh: Triangulation, x):
    """Containing triangle and barycentric coordinates of ``x``, or None if outside."""
    e, b = mesh.locate(np.asarray(x, dtype=float)[None, :])
    if e[0] < 0:
        return None
    return int(e[0]), b[0]


def check_conforming(mesh: Triangulation) -> bool:
    """True when every edge is shared by at most two triangles and no vertex
    lies in the interior of another triangle's edge."""
    edges, _, counts = mesh._edge_data
    if np.any(counts > 2):
        return False
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    for v in mesh.vertices:
        s = np.einsum("ij,ij->i", v - a, ab) / L2
        d = np.abs(ab[:, 0] * (v - a)[:, 1] - ab[:, 1] * (v - a)[:, 0]) / np.sqrt(L2)
        if np.any((s > 1e-12) & (s < 1 - 1e-12) & (d < 1e-12 * np.sqrt(L2))):
            return False
    return True


def write_mesh(mesh: Triangulation, path) -> None:
    lines = [f"MESH2D {mesh.n_vertices} {mesh.n_triangles}"]
    for (x, y), b in zip(mesh.vertices, mesh.boundary_vertex_flags):
        lines.append(f"v {x:.17g} {y:.17g} {int(b)}")
    for i, j, k in mesh.triangles:
        lines.append(f"t {i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, level: int = 0) -> Triangulation:
    rows = Path(path).read_text().split("\n")
    head = rows[0].split()
    if len(head) != 3 or head[0] != "MESH2D":
        raise ValueError(f"{path}: missing MESH2D header")
    nv, nt = int(head[1]), int(head[2])
    verts, flags, tris = [], [], []
    for line in rows[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append((float(parts[1]), float(parts[2])))
            flags.append(bool(int(parts[3])))
        elif parts[0] == "t":
            tris.append(tuple(int(p) for p in parts[1:4]))
        else:
            raise ValueError(f"{path}: unexpected line {line!r}")
    if len(verts) != nv or len(tris) != nt:
        raise ValueError(f"{path}: header announces {nv}/{nt} entries, found {len(verts)}/{len(tris)}")
    return Triangulation(np.array(verts), np.array(tris), np.array(flags), level=level)
