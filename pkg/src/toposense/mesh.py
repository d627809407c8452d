"""Triangular meshes, P2 degrees of freedom and reference-triangle quadrature.

Meshes are conforming triangulations of a planar ocean basin, held in SI
units (metres).  Quadratic (P2) elements carry one degree of freedom per
vertex and one per edge midpoint; the dof numbering puts every interior dof
before every boundary dof so that homogeneous Dirichlet problems operate on
a leading block.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

MESH_FORMAT_HEADER = "MESH2D v1"


class MeshError(ValueError):
    """Raised for malformed or non-conforming mesh input."""


# ---------------------------------------------------------------------------
# reference-triangle quadrature
# ---------------------------------------------------------------------------

# Rules in barycentric coordinates on the reference triangle, weights
# normalised to sum to one (integrals are weight * physical area).  Keyed by
# the highest polynomial degree integrated exactly.
def _orbit1(w):
    return [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, w)]


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(b, a, a, w), (a, b, a, w), (a, a, b, w)]


def _orbit6(a, b, w):
    c = 1.0 - a - b
    return [
        (a, b, c, w), (a, c, b, w), (b, a, c, w),
        (b, c, a, w), (c, a, b, w), (c, b, a, w),
    ]


_QUADRATURE_TABLES = {
    1: _orbit1(1.0),
    2: _orbit3(0.5, 1.0 / 3.0),
    # classic 4-point rule; the centroid weight is negative by construction
    3: _orbit1(-27.0 / 48.0) + _orbit3(0.2, 25.0 / 48.0),
    4: _orbit3(0.445948490915965, 0.223381589678011)
       + _orbit3(0.091576213509771, 0.109951743655322),
    5: _orbit1(9.0 / 40.0)
       + _orbit3(0.470142064105115, 0.132394152788506)
       + _orbit3(0.101286507323456, 0.125939180544827),
    6: _orbit3(0.063089014491502, 0.050844906370207)
       + _orbit3(0.249286745170910, 0.116786275726379)
       + _orbit6(0.636502499121399, 0.310352451033785, 0.082851075618374),
}

DEFAULT_QUADRATURE_DEGREE = 4


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature nodes (barycentric) and weights on the reference triangle."""

    degree: int
    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,) sums to 1

    @property
    def npoints(self) -> int:
        return self.points.shape[0]


def reference_quadrature(degree: int = DEFAULT_QUADRATURE_DEGREE) -> QuadratureRule:
    """Return a rule exact for polynomials up to ``degree`` (1..6)."""
    if degree < 1:
        raise ValueError(f"quadrature degree must be >= 1, got {degree}")
    if degree not in _QUADRATURE_TABLES:
        raise ValueError(f"no quadrature table for degree {degree} (available: 1..6)")
    rows = np.asarray(_QUADRATURE_TABLES[degree], dtype=np.float64)
    return QuadratureRule(degree=degree, points=rows[:, :3].copy(), weights=rows[:, 3].copy())


# ---------------------------------------------------------------------------
# mesh container
# ---------------------------------------------------------------------------

def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with counter-clockwise elements.

    Attributes
    ----------
    vertices : (NV, 2) float64
        Vertex coordinates in metres.
    triangles : (NT, 3) int32
        Vertex indices per element, counter-clockwise.
    boundary_edges : (NB, 2) int32
        Vertex pairs of edges lying on the domain boundary.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def edge_triangle_count(self) -> dict[tuple[int, int], int]:
        count: dict[tuple[int, int], int] = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = _edge_key(int(a), int(b))
                count[key] = count.get(key, 0) + 1
        return count

    def validate(self) -> None:
        """Check conformity; raise :class:`MeshError` with the offending item."""
        nv = self.n_vertices
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= nv:
            raise MeshError("triangle vertex index out of range")
        areas = self.areas()
        bad = np.where(areas <= 0.0)[0]
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive area {areas[bad[0]]:g}")
        count = self.edge_triangle_count()
        over = [k for k, c in count.items() if c > 2]
        if over:
            raise MeshError(f"edge {over[0]} shared by more than two triangles")
        exposed = {k for k, c in count.items() if c == 1}
        declared = {_edge_key(int(a), int(b)) for a, b in self.boundary_edges}
        missing = exposed - declared
        if missing:
            raise MeshError(f"edge {sorted(missing)[0]} lies on the boundary but is not declared")
        extra = declared - exposed
        if extra:
            raise MeshError(f"declared boundary edge {sorted(extra)[0]} is interior or absent")
        # boundary must close: every boundary vertex has even degree (2 for a
        # simple loop)
        deg: dict[int, int] = {}
        for a, b in self.boundary_edges:
            deg[int(a)] = deg.get(int(a), 0) + 1
            deg[int(b)] = deg.get(int(b), 0) + 1
        odd = [v for v, d in deg.items() if d % 2]
        if odd:
            raise MeshError(f"boundary is not closed at vertex {odd[0]}")

    def boundary_vertex_set(self) -> set[int]:
        out: set[int] = set()
        for a, b in self.boundary_edges:
            out.add(int(a))
            out.add(int(b))
        return out


# ---------------------------------------------------------------------------
# P2 dof map
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofMap:
    """P2 (quadratic) dof numbering with interior dofs first.

    Local element dofs follow the usual convention: 0..2 are the vertices,
    3 is the midpoint opposite vertex 0 (edge 1-2), 4 opposite vertex 1
    (edge 2-0) and 5 opposite vertex 2 (edge 0-1).
    """

    mesh: Mesh
    n_dofs: int
    n_interior: int
    dof_coords: np.ndarray      # (N, 2)
    boundary_flags: np.ndarray  # (N,) bool, False for the first n_interior
    triangle_dofs: np.ndarray   # (NT, 6) int32

    @property
    def interior(self) -> np.ndarray:
        return np.arange(self.n_interior)

    @property
    def n_boundary(self) -> int:
        return self.n_dofs - self.n_interior

    def embed_interior(self, values: np.ndarray) -> np.ndarray:
        """Pad interior-dof values with zeros on the boundary dofs."""
        values = np.asarray(values)
        shape = (self.n_dofs,) + values.shape[1:]
        out = np.zeros(shape, dtype=values.dtype)
        out[: self.n_interior] = values
        return out


def build_dof_map(mesh: Mesh) -> DofMap:
    """Number P2 dofs (vertices then edge midpoints), interior block first."""
    mesh.validate()
    nv = mesh.n_vertices
    edge_index: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[1], tri[2]), (tri[2], tri[0]), (tri[0], tri[1])):
            key = _edge_key(int(a), int(b))
            if key not in edge_index:
                edge_index[key] = -1
    ordered_edges = sorted(edge_index)
    for i, key in enumerate(ordered_edges):
        edge_index[key] = nv + i
    n_raw = nv + len(ordered_edges)

    coords = np.empty((n_raw, 2), dtype=np.float64)
    coords[:nv] = mesh.vertices
    for key, idx in edge_index.items():
        coords[idx] = 0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]])

    on_boundary = np.zeros(n_raw, dtype=bool)
    for v in mesh.boundary_vertex_set():
        on_boundary[v] = True
    for a, b in mesh.boundary_edges:
        on_boundary[edge_index[_edge_key(int(a), int(b))]] = True

    # stable permutation: interior dofs keep their relative order, then
    # boundary dofs keep theirs
    interior_raw = np.where(~on_boundary)[0]
    boundary_raw = np.where(on_boundary)[0]
    order = np.concatenate([interior_raw, boundary_raw])
    new_of_raw = np.empty(n_raw, dtype=np.int64)
    new_of_raw[order] = np.arange(n_raw)

    tri_dofs = np.empty((mesh.n_triangles, 6), dtype=np.int32)
    for t, tri in enumerate(mesh.triangles):
        i0, i1, i2 = (int(v) for v in tri)
        tri_dofs[t, 0] = new_of_raw[i0]
        tri_dofs[t, 1] = new_of_raw[i1]
        tri_dofs[t, 2] = new_of_raw[i2]
        tri_dofs[t, 3] = new_of_raw[edge_index[_edge_key(i1, i2)]]
        tri_dofs[t, 4] = new_of_raw[edge_index[_edge_key(i2, i0)]]
        tri_dofs[t, 5] = new_of_raw[edge_index[_edge_key(i0, i1)]]

    return DofMap(
        mesh=mesh,
        n_dofs=n_raw,
        n_interior=interior_raw.size,
        dof_coords=coords[order],
        boundary_flags=np.concatenate(
            [np.zeros(interior_raw.size, bool), np.ones(boundary_raw.size, bool)]
        ),
        triangle_dofs=tri_dofs,
    )


def mirror_dof_permutation(dofmap: DofMap, center_y: float, rtol: float = 1e-9) -> np.ndarray:
    """Dof permutation realising the reflection y -> 2*center_y - y.

    Only exists for meshes symmetric about the horizontal line ``y=center_y``;
    raises :class:`MeshError` otherwise.  Used to test mirror symmetry of
    computed fields.
    """
    coords = dofmap.dof_coords
    scale = max(np.abs(coords).max(), 1.0)
    mirrored = coords.copy()
    mirrored[:, 1] = 2.0 * center_y - coords[:, 1]
    quant = np.round(coords / (rtol * scale)).astype(np.int64)
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(quant)}
    perm = np.empty(dofmap.n_dofs, dtype=np.int64)
    qm = np.round(mirrored / (rtol * scale)).astype(np.int64)
    for i, (a, b) in enumerate(qm):
        j = lookup.get((int(a), int(b)))
        if j is None:
            raise MeshError(f"mesh is not mirror-symmetric: no partner for dof {i}")
        perm[i] = j
    return perm


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _graded_axis(length: float, n_coarse: int, ratio: float) -> np.ndarray:
    """Cell sizes increasing geometrically west to east, coarsest ~ length/n_coarse."""
    if ratio == 1.0:
        return np.full(n_coarse, length / n_coarse)
    # choose the cell count so that the geometric sequence with end ratio
    # `ratio` sums to `length` while the last cell is about length/n_coarse
    gamma = (n_coarse * ratio - 1.0) / (ratio * (n_coarse - 1.0))
    nx = max(2, int(round(1.0 + np.log(ratio) / np.log(gamma))))
    sizes = np.geomspace(1.0, ratio, nx)
    return sizes * (length / sizes.sum())


def generate_graded_square_mesh(
    side_length: float,
    n_coarse: int,
    grading_ratio: float = 1.0,
    ny: int | None = None,
) -> Mesh:
    """Square basin [0,L]^2 with columns geometrically refined towards x=0.

    ``n_coarse`` sets the row count and the coarse (eastern) cell scale; the
    western columns are ``grading_ratio`` times finer.  Cell diagonals follow
    a checkerboard pattern, which makes the triangulation mirror-symmetric in
    y whenever the row count is even.
    """
    if side_length <= 0:
        raise ValueError("side_length must be positive")
    if n_coarse < 1:
        raise ValueError("n_coarse must be >= 1")
    if grading_ratio < 1.0:
        raise ValueError("grading_ratio must be >= 1")
    if ny is None:
        ny = n_coarse
    dx = _graded_axis(side_length, n_coarse, grading_ratio)
    nx = dx.size
    xs = np.concatenate([[0.0], np.cumsum(dx)])
    xs[-1] = side_length
    ys = np.linspace(0.0, side_length, ny + 1)

    verts = np.empty(((nx + 1) * (ny + 1), 2), dtype=np.float64)
    for j in range(ny + 1):
        for i in range(nx + 1):
            verts[j * (nx + 1) + i] = (xs[i], ys[j])

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10 = v00 + 1
            v01 = v00 + (nx + 1)
            v11 = v01 + 1
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))

    bedges = []
    for i in range(nx):
        bedges.append((i, i + 1))                                  # south
        top = ny * (nx + 1)
        bedges.append((top + i, top + i + 1))                      # north
    for j in range(ny):
        bedges.append((j * (nx + 1), (j + 1) * (nx + 1)))          # west
        bedges.append((j * (nx + 1) + nx, (j + 1) * (nx + 1) + nx))  # east

    mesh = Mesh(
        vertices=verts,
        triangles=np.asarray(tris, dtype=np.int32),
        boundary_edges=np.asarray(bedges, dtype=np.int32),
    )
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# MESH2D v1 text I/O
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path: str | os.PathLike) -> None:
    """Write the MESH2D v1 plain-text format."""
    lines = [MESH_FORMAT_HEADER, f"NV {mesh.n_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"NT {mesh.n_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    lines.append(f"NB {len(mesh.boundary_edges)}")
    for a, b in mesh.boundary_edges:
        lines.append(f"{a} {b}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _content_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text


def load_mesh(path: str | os.PathLike) -> Mesh:
    """Read a MESH2D v1 file; errors carry the offending line number."""
    lines = _content_lines(path)

    def next_line(what):
        try:
            return next(lines)
        except StopIteration:
            raise MeshError(f"{path}: unexpected end of file while reading {what}") from None

    lineno, text = next_line("header")
    if text != MESH_FORMAT_HEADER:
        raise MeshError(f"{path}:{lineno}: expected header '{MESH_FORMAT_HEADER}', got '{text}'")

    def read_count(tag):
        lineno, text = next_line(f"{tag} count")
        parts = text.split()
        if len(parts) != 2 or parts[0] != tag:
            raise MeshError(f"{path}:{lineno}: expected '{tag} <count>', got '{text}'")
        try:
            n = int(parts[1])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad count '{parts[1]}'") from None
        if n < 0:
            raise MeshError(f"{path}:{lineno}: negative count {n}")
        return n

    nv = read_count("NV")
    verts = np.empty((nv, 2), dtype=np.float64)
    for k in range(nv):
        lineno, text = next_line("vertex")
        parts = text.split()
        if len(parts) != 2:
            raise MeshError(f"{path}:{lineno}: expected 'x y', got '{text}'")
        try:
            verts[k] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad vertex coordinates '{text}'") from None

    def read_int_rows(tag, width, what):
        n = read_count(tag)
        out = np.empty((n, width), dtype=np.int32)
        for k in range(n):
            lineno, text = next_line(what)
            parts = text.split()
            if len(parts) != width:
                raise MeshError(f"{path}:{lineno}: expected {width} indices, got '{text}'")
            try:
                out[k] = [int(p) for p in parts]
            except ValueError:
                raise MeshError(f"{path}:{lineno}: bad index in '{text}'") from None
        return out

    tris = read_int_rows("NT", 3, "triangle")
    bedges = read_int_rows("NB", 2, "boundary edge")

    # orientation is normalised on load rather than rejected
    areas = _signed_areas(verts, np.asarray(tris, dtype=np.int64)) if len(tris) else np.empty(0)
    flip = areas < 0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2], tris[flip, 1].copy()

    mesh = Mesh(vertices=verts, triangles=tris, boundary_edges=bedges)
    try:
        mesh.validate()
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
    return mesh
