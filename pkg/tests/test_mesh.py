"""Mesh generation, P2 dof numbering, quadrature tables and file IO."""

import math

import numpy as np
import pytest

from toposense.mesh import (
    Mesh,
    MeshError,
    build_dof_map,
    generate_graded_square_mesh,
    load_mesh,
    mirror_dof_permutation,
    reference_quadrature,
    save_mesh,
)

from oracles import two_triangle_unit_square


def shoelace(vertices, triangle):
    (x0, y0), (x1, y1), (x2, y2) = vertices[triangle]
    return 0.5 * ((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def reference_monomial_integral(a, b):
    """Exact integral of x^a y^b over the unit reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_quadrature_exact_for_declared_degree(degree):
    rule = reference_quadrature(degree)
    assert abs(rule.weights.sum() - 1.0) < 1.0e-14
    x = rule.points[:, 1]
    y = rule.points[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            # rule weights are normalised to the unit triangle area 1/2
            approx = 0.5 * np.dot(rule.weights, x ** a * y ** b)
            exact = reference_monomial_integral(a, b)
            assert abs(approx - exact) <= 1.0e-14


def test_quadrature_degree_one_is_centroid():
    rule = reference_quadrature(1)
    assert rule.npoints == 1
    np.testing.assert_allclose(rule.points[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_quadrature_x2y2_reference_value():
    rule = reference_quadrature(4)
    val = 0.5 * np.dot(rule.weights, rule.points[:, 1] ** 2 * rule.points[:, 2] ** 2)
    assert abs(val - 1.0 / 180.0) < 1.0e-16


def test_quadrature_rejects_unsupported_degree():
    with pytest.raises(ValueError):
        reference_quadrature(0)
    with pytest.raises(ValueError):
        reference_quadrature(7)


# ---------------------------------------------------------------------------
# mesh container and validation
# ---------------------------------------------------------------------------

def test_two_triangle_square_basics():
    mesh = two_triangle_unit_square()
    mesh.validate()
    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 2
    assert len(mesh.boundary_edges) == 4
    np.testing.assert_allclose(mesh.areas(), [0.5, 0.5])


def test_validate_rejects_bad_vertex_index():
    mesh = two_triangle_unit_square()
    broken = Mesh(vertices=mesh.vertices,
                  triangles=np.array([[0, 1, 9], [0, 2, 3]], dtype=np.int32),
                  boundary_edges=mesh.boundary_edges)
    with pytest.raises(MeshError, match="out of range"):
        broken.validate()


def test_validate_rejects_flipped_triangle():
    mesh = two_triangle_unit_square()
    tris = mesh.triangles.copy()
    tris[0] = tris[0][::-1]
    broken = Mesh(vertices=mesh.vertices, triangles=tris,
                  boundary_edges=mesh.boundary_edges)
    with pytest.raises(MeshError, match="non-positive area"):
        broken.validate()


def test_validate_rejects_undeclared_boundary_edge():
    mesh = two_triangle_unit_square()
    broken = Mesh(vertices=mesh.vertices, triangles=mesh.triangles,
                  boundary_edges=mesh.boundary_edges[:-1])
    with pytest.raises(MeshError, match="not declared"):
        broken.validate()


def test_validate_rejects_phantom_boundary_edge():
    mesh = two_triangle_unit_square()
    edges = np.vstack([mesh.boundary_edges, [[0, 2]]]).astype(np.int32)
    broken = Mesh(vertices=mesh.vertices, triangles=mesh.triangles,
                  boundary_edges=edges)
    with pytest.raises(MeshError, match="interior or absent"):
        broken.validate()


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def test_uniform_mesh_counts_and_areas():
    mesh = generate_graded_square_mesh(1.0, 2)
    mesh.validate()
    assert mesh.n_triangles == 8
    np.testing.assert_allclose(mesh.areas(), 0.125, rtol=1e-12)
    assert abs(mesh.areas().sum() - 1.0) < 1e-12


def test_generated_mesh_total_area_and_conformity():
    side = 4000.0e3
    mesh = generate_graded_square_mesh(side, 6, 16.0)
    mesh.validate()
    assert abs(mesh.areas().sum() - side * side) < 1e-6 * side * side
    for t in range(mesh.n_triangles):
        assert abs(mesh.areas()[t] - shoelace(mesh.vertices, mesh.triangles[t])) \
            <= 1e-12 * mesh.areas()[t]


def test_grading_refines_western_columns():
    ratio = 8.0
    mesh = generate_graded_square_mesh(1.0, 10, ratio)
    xs = np.unique(np.round(mesh.vertices[:, 0], 12))
    dx = np.diff(xs)
    measured = dx[0] / dx[-1]
    assert abs(measured - 1.0 / ratio) < 0.2 / ratio
    assert np.all(np.diff(dx) > -1e-12)


def test_dof_map_partition():
    mesh = generate_graded_square_mesh(1.0, 3, 4.0)
    dofmap = build_dof_map(mesh)
    n_edges = len(mesh.edge_triangle_count())
    assert dofmap.n_dofs == mesh.n_vertices + n_edges
    flags = dofmap.boundary_flags
    assert not flags[: dofmap.n_interior].any()
    assert flags[dofmap.n_interior:].all()
    n_bv = len(mesh.boundary_vertex_set())
    assert dofmap.n_boundary == n_bv + len(mesh.boundary_edges)
    # every triangle references six distinct dofs
    for row in dofmap.triangle_dofs:
        assert len(set(int(d) for d in row)) == 6


def test_dof_coords_match_vertices_and_midpoints():
    mesh = generate_graded_square_mesh(1.0, 2)
    dofmap = build_dof_map(mesh)
    coords = dofmap.dof_coords
    for tri, dofs in zip(mesh.triangles, dofmap.triangle_dofs):
        pts = mesh.vertices[tri]
        np.testing.assert_allclose(coords[dofs[:3]], pts, atol=1e-15)
        # local midpoint 3 faces vertex 0, midpoint 4 faces vertex 1, 5 faces 2
        np.testing.assert_allclose(coords[dofs[3]], 0.5 * (pts[1] + pts[2]), atol=1e-15)
        np.testing.assert_allclose(coords[dofs[4]], 0.5 * (pts[2] + pts[0]), atol=1e-15)
        np.testing.assert_allclose(coords[dofs[5]], 0.5 * (pts[0] + pts[1]), atol=1e-15)


def test_embed_interior_roundtrip():
    dofmap = build_dof_map(generate_graded_square_mesh(1.0, 2))
    vals = np.arange(dofmap.n_interior, dtype=float) + 1.0
    full = dofmap.embed_interior(vals)
    assert full.shape == (dofmap.n_dofs,)
    np.testing.assert_array_equal(full[: dofmap.n_interior], vals)
    assert not full[dofmap.n_interior:].any()


def test_mirror_permutation_is_involution():
    side = 4000.0e3
    dofmap = build_dof_map(generate_graded_square_mesh(side, 6, 16.0))
    perm = mirror_dof_permutation(dofmap, side / 2.0)
    assert np.array_equal(np.sort(perm), np.arange(dofmap.n_dofs))
    assert np.array_equal(perm[perm], np.arange(dofmap.n_dofs))
    y = dofmap.dof_coords[:, 1]
    np.testing.assert_allclose(y[perm], side - y, rtol=0, atol=1e-6)


def test_mirror_permutation_rejects_asymmetric_mesh():
    mesh = generate_graded_square_mesh(1.0, 2)
    verts = mesh.vertices.copy()
    inner = ~np.isin(np.arange(mesh.n_vertices),
                     sorted(mesh.boundary_vertex_set()))
    verts[inner, 1] += 0.07
    dofmap = build_dof_map(Mesh(verts, mesh.triangles, mesh.boundary_edges))
    with pytest.raises(MeshError, match="not mirror-symmetric"):
        mirror_dof_permutation(dofmap, 0.5)


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def test_mesh_file_roundtrip(tmp_path):
    mesh = generate_graded_square_mesh(4000.0e3, 3, 4.0)
    path = tmp_path / "square.mesh2d"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh.boundary_edges)


def test_load_mesh_accepts_comments_and_fixes_orientation(tmp_path):
    path = tmp_path / "two.mesh2d"
    path.write_text(
        "MESH2D v1  # format tag\n"
        "NV 4\n"
        "0.0 0.0\n1.0 0.0\n1.0 1.0\n0.0 1.0\n"
        "NT 2\n"
        "0 2 1  # clockwise on purpose\n"
        "0 2 3\n"
        "NB 4\n"
        "0 1\n1 2\n2 3\n3 0\n"
    )
    mesh = load_mesh(path)
    assert np.all(mesh.areas() > 0)


def test_load_mesh_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.mesh2d"
    path.write_text("MESH2D v1\nNV 2\n0.0 0.0\n1.0 oops\nNT 0\nNB 0\n")
    with pytest.raises(MeshError, match=r"bad.mesh2d:4"):
        load_mesh(path)


def test_load_mesh_rejects_wrong_header(tmp_path):
    path = tmp_path / "hdr.mesh2d"
    path.write_text("MESHXY v9\n")
    with pytest.raises(MeshError, match="expected header"):
        load_mesh(path)


def test_load_mesh_rejects_truncated_file(tmp_path):
    path = tmp_path / "short.mesh2d"
    path.write_text("MESH2D v1\nNV 4\n0.0 0.0\n1.0 0.0\n")
    with pytest.raises(MeshError, match="unexpected end of file"):
        load_mesh(path)


def test_load_mesh_validates_connectivity(tmp_path):
    path = tmp_path / "dangling.mesh2d"
    path.write_text(
        "MESH2D v1\nNV 4\n0.0 0.0\n1.0 0.0\n1.0 1.0\n0.0 1.0\n"
        "NT 2\n0 1 2\n0 2 3\n"
        "NB 3\n0 1\n1 2\n2 3\n"
    )
    with pytest.raises(MeshError, match="not declared"):
        load_mesh(path)
