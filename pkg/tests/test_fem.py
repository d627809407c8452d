"""P2 assembly against independent dense quadrature references.

Every element integrand here is a polynomial of degree four or less, so
the Duffy-mapped tensor Gauss rule in oracles.py reproduces the assembly
exactly up to roundoff; agreement is asserted near machine precision.
"""

import numpy as np
import pytest

from toposense.fem import (
    assemble_advection,
    assemble_core,
    assemble_tangent_blocks,
    assemble_topography_coupling,
    assemble_weighted,
    export_matrix_coo,
    interpolate_nodal,
)
from toposense.mesh import build_dof_map, generate_graded_square_mesh

import oracles


@pytest.fixture(scope="module")
def square_dofmap():
    return build_dof_map(oracles.two_triangle_unit_square())


@pytest.fixture(scope="module")
def graded_dofmap():
    return build_dof_map(generate_graded_square_mesh(2.0, 2, 3.0))


@pytest.fixture(scope="module")
def graded_core(graded_dofmap):
    return assemble_core(graded_dofmap)


def rel(err, ref):
    return np.abs(err).max() / np.abs(ref).max()


def test_mass_matches_reference(graded_core, graded_dofmap):
    ref = oracles.dense_mass(graded_dofmap)
    assert rel(graded_core.mass.toarray() - ref, ref) < 1e-13


def test_rigidity_matches_reference(graded_core, graded_dofmap):
    ref = oracles.dense_rigidity(graded_dofmap)
    assert rel(graded_core.rigidity.toarray() - ref, ref) < 1e-13


def test_mass_integrates_unity(graded_core):
    ones = np.ones(graded_core.n_dofs)
    area = graded_core.dofmap.mesh.areas().sum()
    assert abs(ones @ (graded_core.mass @ ones) - area) < 1e-12 * area


def test_rigidity_annihilates_constants(graded_core):
    c = graded_core.rigidity
    ones = np.ones(graded_core.n_dofs)
    assert np.abs(c @ ones).max() < 1e-12 * np.abs(c.toarray()).max()


def test_jacobian_tensor_matches_reference(graded_core, graded_dofmap):
    ref = oracles.dense_jacobian_tensor(graded_dofmap)
    got = graded_core.jac.to_dense()
    assert rel(got - ref, ref) < 1e-13


def test_jacobian_tensor_exactly_antisymmetric(graded_core):
    dense = graded_core.jac.to_dense()
    np.testing.assert_array_equal(dense, -np.transpose(dense, (0, 2, 1)))


def test_jacobian_triple_product(square_dofmap):
    core = assemble_core(square_dofmap)
    t = core.jac.to_dense()
    ref = oracles.dense_jacobian_tensor(square_dofmap)
    rng = np.random.default_rng(3)
    for _ in range(3):
        a, b, c = rng.standard_normal((3, core.n_dofs))
        got = np.einsum("kij,i,j,k->", t, a, b, c)
        want = np.einsum("kij,i,j,k->", ref, a, b, c)
        assert abs(got - want) < 1e-12 * max(1.0, abs(want))


def test_weighted_matrix_matches_reference(graded_core, graded_dofmap):
    rng = np.random.default_rng(11)
    inv_depth = 1.0 / rng.uniform(300.0, 900.0, graded_core.n_dofs)
    ref = oracles.dense_weighted(graded_dofmap, inv_depth)
    got = assemble_weighted(graded_core, inv_depth).toarray()
    assert rel(got - ref, ref) < 1e-13


def test_flat_bottom_weighted_is_scaled_rigidity(graded_core):
    h0 = 500.0
    got = assemble_weighted(graded_core, np.full(graded_core.n_dofs, 1.0 / h0))
    ref = graded_core.rigidity / h0
    assert rel((got - ref).toarray(), ref.toarray()) < 1e-13


def test_weighted_matrix_is_positive_definite(graded_core, graded_dofmap):
    n0 = graded_dofmap.n_interior
    inv_depth = 1.0 / np.linspace(200.0, 800.0, graded_core.n_dofs)
    h = assemble_weighted(graded_core, inv_depth).toarray()[:n0, :n0]
    np.testing.assert_allclose(h, h.T, atol=1e-18 + 1e-12 * np.abs(h).max())
    assert np.linalg.eigvalsh(h).min() > 0


def test_advection_matches_reference(graded_core, graded_dofmap):
    rng = np.random.default_rng(5)
    psi = rng.standard_normal(graded_core.n_dofs)
    ref = oracles.dense_advection(graded_dofmap, psi)
    got = assemble_advection(graded_core, psi).toarray()
    scale = max(np.abs(ref).max(), 1e-30)
    assert np.abs(got - ref).max() < 1e-12 * scale


def test_coupling_matches_reference(graded_core, graded_dofmap):
    rng = np.random.default_rng(6)
    psi = rng.standard_normal(graded_core.n_dofs)
    inv_depth = 1.0 / rng.uniform(300.0, 900.0, graded_core.n_dofs)
    ref = oracles.dense_coupling(graded_dofmap, inv_depth, psi)
    got = assemble_topography_coupling(graded_core, inv_depth, psi).toarray()
    assert rel(got - ref, ref) < 1e-12


def test_coupling_of_ones_reproduces_elliptic_action(graded_core):
    # sum_i (1/H)_i <p_i grad psi, grad p_k> with chi=1 is the depth-weighted
    # elliptic operator applied to psi
    rng = np.random.default_rng(8)
    psi = rng.standard_normal(graded_core.n_dofs)
    inv_depth = 1.0 / rng.uniform(300.0, 900.0, graded_core.n_dofs)
    p = assemble_topography_coupling(graded_core, inv_depth, psi)
    h = assemble_weighted(graded_core, inv_depth)
    ones = np.ones(graded_core.n_dofs)
    ref = h @ psi
    assert np.abs(p @ ones - ref).max() < 1e-12 * np.abs(ref).max()


def test_tangent_blocks_scale_with_state(graded_core):
    rng = np.random.default_rng(9)
    n = graded_core.n_dofs
    psi = rng.standard_normal(n)
    q = rng.standard_normal(n)
    inv_depth = 1.0 / rng.uniform(300.0, 900.0, n)
    one = assemble_tangent_blocks(graded_core, inv_depth, psi, q)
    two = assemble_tangent_blocks(graded_core, inv_depth, 2.0 * psi, q)
    np.testing.assert_allclose(two.a1.toarray(), 2.0 * one.a1.toarray(), rtol=1e-14)
    np.testing.assert_allclose(two.b1.toarray(), 2.0 * one.b1.toarray(), rtol=1e-14)
    np.testing.assert_array_equal(two.a2.toarray(), one.a2.toarray())


def test_second_topography_block_aliases_advective_block(graded_core):
    rng = np.random.default_rng(10)
    n = graded_core.n_dofs
    blocks = assemble_tangent_blocks(graded_core, np.full(n, 1.0 / 500.0),
                                     rng.standard_normal(n),
                                     rng.standard_normal(n))
    assert blocks.b2 is blocks.a2


def test_assembly_is_deterministic(graded_dofmap):
    one = assemble_core(graded_dofmap)
    two = assemble_core(graded_dofmap)
    np.testing.assert_array_equal(one.mass.toarray(), two.mass.toarray())
    np.testing.assert_array_equal(one.rigidity.toarray(), two.rigidity.toarray())
    np.testing.assert_array_equal(one.jac.values, two.jac.values)


def test_interpolate_nodal(graded_dofmap):
    const = interpolate_nodal(lambda x, y: np.full_like(x, 7.0), graded_dofmap)
    np.testing.assert_array_equal(const, 7.0)
    lin = interpolate_nodal(lambda x, y: 2.0 * x - y, graded_dofmap)
    coords = graded_dofmap.dof_coords
    np.testing.assert_allclose(lin, 2.0 * coords[:, 0] - coords[:, 1], atol=1e-14)


def test_export_matrix_coo_roundtrip(tmp_path, graded_core):
    path = tmp_path / "mass.coo"
    export_matrix_coo(graded_core.mass, path)
    text = path.read_text().splitlines()
    nnz = graded_core.mass.nnz
    rows = [line.split() for line in text if not line.startswith("#")]
    header = [line for line in text if line.startswith("#")]
    assert header and str(nnz) in header[0]
    assert len(rows) == nnz
    rebuilt = np.zeros(graded_core.mass.shape)
    for i, j, v in rows:
        rebuilt[int(i), int(j)] = float(v)
    np.testing.assert_array_equal(rebuilt, graded_core.mass.toarray())
