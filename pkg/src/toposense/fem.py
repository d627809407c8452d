"""P2 finite-element operators for the vorticity model.

Assembles the mass and rigidity matrices, the triple-product tensors that
carry the advective Jacobian and the depth-weighted elliptic coupling, and
the state-dependent blocks of the tangent-linear model.

Sign convention, fixed here once: the weighted elliptic matrix ``Hmat`` with
entries sum_k (1/H)_k <p_k grad p_j, grad p_i> is assembled positive
definite (it equals C/H0 for a flat bottom).  The continuous operator
div((1/H) grad .) is its negative, so the streamfunction systems read

    Hmat psi     = -M omega
    Hmat deltapsi = -M deltaomega + Pmat (deltaH/H)

and the advective blocks below enter the tangent model as
-A1 - A2 Hmat^-1 M on the vorticity side and +B1 + B2 Hmat^-1 Pmat on the
topography side.

Products of nodal fields (1/H, (omega+f)/H, deltaH/H) are collocated at the
dofs rather than L2-projected; the algebraic identities Pmat*1 = Hmat*psi
and B1*1 = -A2*psi then hold exactly, which is what makes a uniform
relative depth change an exact null direction of the sensitivity operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DofMap, QuadratureRule, reference_quadrature


def _p2_shape_values(points: np.ndarray) -> np.ndarray:
    """Values of the six P2 basis functions at barycentric points (nq, 3)."""
    l0, l1, l2 = points[:, 0], points[:, 1], points[:, 2]
    return np.stack(
        [
            l0 * (2.0 * l0 - 1.0),
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            4.0 * l1 * l2,
            4.0 * l2 * l0,
            4.0 * l0 * l1,
        ],
        axis=1,
    )


def _p2_shape_bary_derivs(points: np.ndarray) -> np.ndarray:
    """d(basis)/d(lambda_i) at each point; shape (nq, 6, 3)."""
    nq = points.shape[0]
    l0, l1, l2 = points[:, 0], points[:, 1], points[:, 2]
    d = np.zeros((nq, 6, 3))
    d[:, 0, 0] = 4.0 * l0 - 1.0
    d[:, 1, 1] = 4.0 * l1 - 1.0
    d[:, 2, 2] = 4.0 * l2 - 1.0
    d[:, 3, 1] = 4.0 * l2
    d[:, 3, 2] = 4.0 * l1
    d[:, 4, 2] = 4.0 * l0
    d[:, 4, 0] = 4.0 * l2
    d[:, 5, 0] = 4.0 * l1
    d[:, 5, 1] = 4.0 * l0
    return d


def _barycentric_gradients(vertices: np.ndarray, triangles: np.ndarray):
    """Per-element constant gradients of (lambda0, lambda1, lambda2) and areas."""
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (
        p2[:, 0] - p0[:, 0]
    )
    area = 0.5 * det
    g = np.empty((triangles.shape[0], 3, 2))
    g[:, 0, 0] = p1[:, 1] - p2[:, 1]
    g[:, 0, 1] = p2[:, 0] - p1[:, 0]
    g[:, 1, 0] = p2[:, 1] - p0[:, 1]
    g[:, 1, 1] = p0[:, 0] - p2[:, 0]
    g[:, 2, 0] = p0[:, 1] - p1[:, 1]
    g[:, 2, 1] = p1[:, 0] - p0[:, 0]
    g /= det[:, None, None]
    return g, area


def _dedupe(rows: list[np.ndarray], vals: np.ndarray):
    """Sum duplicate tensor entries; stable order keeps exact antisymmetry."""
    keys = np.lexsort(tuple(reversed(rows)))
    sorted_rows = [r[keys] for r in rows]
    sorted_vals = vals[keys]
    if sorted_vals.size == 0:
        return sorted_rows, sorted_vals
    changed = np.zeros(sorted_vals.size, dtype=bool)
    changed[0] = True
    for r in sorted_rows:
        changed[1:] |= r[1:] != r[:-1]
    starts = np.where(changed)[0]
    summed = np.add.reduceat(sorted_vals, starts)
    return [r[starts] for r in sorted_rows], summed


@dataclass(frozen=True, eq=False)
class TripleTensor:
    """Sparse rank-3 tensor stored as coordinate arrays grouped by test dof."""

    idx0: np.ndarray
    idx1: np.ndarray
    idx2: np.ndarray
    values: np.ndarray
    n: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n, self.n))
        np.add.at(out, (self.idx0, self.idx1, self.idx2), self.values)
        return out


@dataclass(frozen=True, eq=False)
class FemCore:
    """State-independent P2 operators on one mesh.

    ``jac[k,i,j] = <J(p_i, p_j), p_k>`` is exactly antisymmetric in (i, j);
    ``grad3[a,b,c] = <p_a grad p_b, grad p_c>`` is symmetric in (b, c).
    """

    dofmap: DofMap
    quadrature: QuadratureRule
    mass: sp.csr_matrix       # (N, N), m^2
    rigidity: sp.csr_matrix   # (N, N), dimensionless
    jac: TripleTensor
    grad3: TripleTensor

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs


def assemble_core(dofmap: DofMap, quadrature: QuadratureRule | None = None) -> FemCore:
    """Assemble mass, rigidity and both triple-product tensors.

    The default degree-4 rule integrates every product appearing here
    exactly (the worst case, basis x basis x gradient x gradient, has
    polynomial degree four).
    """
    if quadrature is None:
        quadrature = reference_quadrature()
    mesh = dofmap.mesh
    quad_w = quadrature.weights
    shp = _p2_shape_values(quadrature.points)           # (nq, 6)
    dbary = _p2_shape_bary_derivs(quadrature.points)    # (nq, 6, 3)
    gbar, area = _barycentric_gradients(mesh.vertices, mesh.triangles)

    # physical gradients of the six basis functions: (NT, nq, 6, 2)
    grads = np.einsum("qai,eid->eqad", dbary, gbar)
    gx = grads[..., 0]
    gy = grads[..., 1]

    w_area = quad_w[None, :] * area[:, None]            # (NT, nq)

    m_loc = np.einsum("eq,qa,qb->eab", w_area, shp, shp)
    c_loc = np.einsum("eq,eqad,eqbd->eab", w_area, grads, grads)

    # cross products gx_i gy_j - gy_i gx_j are formed pointwise so the
    # (i, j) and (j, i) entries are exact IEEE negations of each other
    cross = gx[:, :, :, None] * gy[:, :, None, :]
    cross = cross - cross.swapaxes(2, 3)
    j_loc = np.einsum("eq,eqab,qk->ekab", w_area, cross, shp)
    j_loc = 0.5 * (j_loc - j_loc.swapaxes(2, 3))

    dot = np.einsum("eqbd,eqcd->eqbc", grads, grads)
    k_loc = np.einsum("eq,qa,eqbc->eabc", w_area, shp, dot)

    dofs = dofmap.triangle_dofs.astype(np.int64)        # (NT, 6)
    n = dofmap.n_dofs
    nt = mesh.n_triangles

    row2 = np.repeat(dofs, 6, axis=1).ravel()
    col2 = np.tile(dofs, (1, 6)).ravel()
    mass = sp.coo_matrix((m_loc.ravel(), (row2, col2)), shape=(n, n)).tocsr()
    rigidity = sp.coo_matrix((c_loc.ravel(), (row2, col2)), shape=(n, n)).tocsr()

    def tensor_from_local(loc):
        a = np.broadcast_to(dofs[:, :, None, None], (nt, 6, 6, 6)).ravel()
        b = np.broadcast_to(dofs[:, None, :, None], (nt, 6, 6, 6)).ravel()
        c = np.broadcast_to(dofs[:, None, None, :], (nt, 6, 6, 6)).ravel()
        (a, b, c), v = _dedupe([a, b, c], loc.ravel())
        return TripleTensor(idx0=a, idx1=b, idx2=c, values=v, n=n)

    return FemCore(
        dofmap=dofmap,
        quadrature=quadrature,
        mass=mass,
        rigidity=rigidity,
        jac=tensor_from_local(j_loc),
        grad3=tensor_from_local(k_loc),
    )


def interpolate_nodal(func, dofmap: DofMap) -> np.ndarray:
    """Collocate ``func(x, y)`` at the dof coordinates."""
    xy = dofmap.dof_coords
    return np.asarray(func(xy[:, 0], xy[:, 1]), dtype=np.float64)


# ---------------------------------------------------------------------------
# state-dependent contractions
# ---------------------------------------------------------------------------

def assemble_weighted(core: FemCore, inv_depth: np.ndarray) -> sp.csr_matrix:
    """Depth-weighted rigidity Hmat[i,j] = sum_k (1/H)_k <p_k grad p_j, grad p_i>.

    Positive definite on the interior block; equals rigidity/H0 for flat
    bottom.  ``inv_depth`` holds nodal 1/H values.
    """
    t = core.grad3
    n = core.n_dofs
    data = t.values * inv_depth[t.idx0]
    return sp.coo_matrix((data, (t.idx2, t.idx1)), shape=(n, n)).tocsr()


def assemble_advection(core: FemCore, psi: np.ndarray) -> sp.csr_matrix:
    """S[k,j] = sum_i psi_i <J(p_i, p_j), p_k>, i.e. <J(psi_h, p_j), p_k>."""
    t = core.jac
    n = core.n_dofs
    data = t.values * psi[t.idx1]
    return sp.coo_matrix((data, (t.idx0, t.idx2)), shape=(n, n)).tocsr()


def assemble_topography_coupling(
    core: FemCore, inv_depth: np.ndarray, psi: np.ndarray
) -> sp.csr_matrix:
    """Pmat[k,i] = (1/H)_i sum_j psi_j <p_i grad p_j, grad p_k>.

    Couples a relative depth change to the streamfunction equation;
    satisfies Pmat @ ones == Hmat @ psi identically.
    """
    t = core.grad3
    n = core.n_dofs
    data = t.values * inv_depth[t.idx0] * psi[t.idx1]
    return sp.coo_matrix((data, (t.idx2, t.idx0)), shape=(n, n)).tocsr()


@dataclass(frozen=True, eq=False)
class TangentBlocks:
    """Advective blocks of the tangent-linear model at one trajectory state.

    a1[k,j] = sum_i psi_i (1/H)_j jac[k,i,j]
    a2[k,j] = sum_i q_i jac[k,i,j]          with q = (omega + f)/H nodal
    b1[k,j] = sum_i psi_i q_j jac[k,i,j]

    The second topography block coincides with ``a2`` (both discretise
    <J(q, .), p_k>), so it is exposed as an alias.
    """

    a1: sp.csr_matrix
    a2: sp.csr_matrix
    b1: sp.csr_matrix

    @property
    def b2(self) -> sp.csr_matrix:
        return self.a2


def assemble_tangent_blocks(
    core: FemCore, inv_depth: np.ndarray, psi: np.ndarray, q: np.ndarray
) -> TangentBlocks:
    """Contract the Jacobian tensor with the current state fields."""
    s_psi = assemble_advection(core, psi)
    t = core.jac
    n = core.n_dofs
    a2 = sp.coo_matrix(
        (t.values * q[t.idx1], (t.idx0, t.idx2)), shape=(n, n)
    ).tocsr()
    return TangentBlocks(
        a1=(s_psi @ sp.diags(inv_depth)).tocsr(),
        a2=a2,
        b1=(s_psi @ sp.diags(q)).tocsr(),
    )


def export_matrix_coo(matrix, path) -> None:
    """Write a sparse matrix as sorted 'row col value' text lines."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
