"""Tangent-linear operators against dense and finite-difference references."""

import numpy as np
import pytest

from toposense.dynamics import (
    DAY,
    ModelParams,
    ModelState,
    VorticityModel,
    sinusoidal_topography,
    two_gyre_forcing,
)
from toposense.fem import assemble_core
from toposense.mesh import build_dof_map, generate_graded_square_mesh
from toposense.tangent import InconsistentStateError, TangentOperators, build_tangent, fd_verify

import oracles

SIDE = 4000.0e3


@pytest.fixture(scope="module")
def setup():
    """25-dof uniform mesh, sinusoidal bottom, a consistent random state."""
    core = assemble_core(build_dof_map(generate_graded_square_mesh(SIDE, 2)))
    params = ModelParams()
    depth = sinusoidal_topography(core.dofmap, 500.0, 120.0, 3, 2, SIDE)
    forcing = two_gyre_forcing(core.dofmap, params, 1.1, SIDE)
    model = VorticityModel(core, params, depth, forcing)
    rng = np.random.default_rng(1)
    omega = core.dofmap.embed_interior(
        1e-6 * rng.standard_normal(core.dofmap.n_interior))
    state = model.state_from_omega(omega)
    return model, state


def smooth_bump(dofmap):
    x = dofmap.dof_coords[:, 0] / SIDE
    y = dofmap.dof_coords[:, 1] / SIDE
    return (40.0 * np.sin(np.pi * x) * np.sin(2.0 * np.pi * y)
            + 25.0 * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y))


def test_matches_dense_reference(setup):
    model, state = setup
    ops = TangentOperators(model, state)
    a_ref, b_ref = oracles.dense_tangent_matrices(
        model.dofmap, model.params, model.depth, state.omega, state.psi)
    a_got = ops.apply_A(np.eye(model.n0))
    assert np.abs(a_got - a_ref).max() < 1e-12 * np.abs(a_ref).max()
    b_got = ops.materialize_B()
    assert np.abs(b_got - b_ref).max() < 1e-12 * np.abs(b_ref).max()
    rng = np.random.default_rng(2)
    for _ in range(3):
        chi = rng.standard_normal(model.core.n_dofs)
        got = ops.apply_B(chi)
        want = b_ref @ chi
        assert np.abs(got - want).max() < 1e-12 * np.abs(b_ref).max()


def test_apply_A_matches_directional_difference(setup):
    # the tendency is quadratic in omega, so a central difference in the
    # state direction reproduces the A action exactly up to roundoff
    model, state = setup
    ops = TangentOperators(model, state)
    rng = np.random.default_rng(3)
    xi = rng.standard_normal(model.n0)
    eps = 0.1 * np.linalg.norm(state.omega) / np.linalg.norm(xi)
    xi_full = model.dofmap.embed_interior(xi)

    def rate(om):
        st = model.state_from_omega(om, time=state.time)
        return model.tendency(st.omega, st.psi)

    fd = (rate(state.omega + eps * xi_full)
          - rate(state.omega - eps * xi_full)) / (2.0 * eps)
    got = ops.apply_A(xi)
    assert np.abs(got - fd[: model.n0]).max() < 1e-8 * np.abs(got).max()


def test_operators_are_linear(setup):
    model, state = setup
    ops = TangentOperators(model, state)
    rng = np.random.default_rng(4)
    x1, x2 = rng.standard_normal((2, model.n0))
    c1, c2 = rng.standard_normal((2, model.core.n_dofs))
    lhs = ops.apply_A(2.0 * x1 - 3.0 * x2)
    rhs = 2.0 * ops.apply_A(x1) - 3.0 * ops.apply_A(x2)
    assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()
    lhs = ops.apply_B(2.0 * c1 - 3.0 * c2)
    rhs = 2.0 * ops.apply_B(c1) - 3.0 * ops.apply_B(c2)
    assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()


def test_uniform_relative_perturbation_is_annihilated(setup):
    # scaling H by 1+eps rescales psi but leaves the dynamics of omega
    # unchanged, so B applied to a constant field must vanish
    model, state = setup
    ops = TangentOperators(model, state)
    b_norm = np.linalg.norm(ops.materialize_B())
    response = ops.apply_B(np.ones(model.core.n_dofs))
    assert np.linalg.norm(response) < 1e-12 * b_norm


def test_block_application_matches_columns(setup):
    model, state = setup
    ops = TangentOperators(model, state)
    rng = np.random.default_rng(5)
    block = rng.standard_normal((model.n0, 3))
    together = ops.apply_A(block)
    for k in range(3):
        np.testing.assert_array_equal(together[:, k], ops.apply_A(block[:, k]))


def test_inconsistent_state_is_rejected(setup):
    model, state = setup
    broken = ModelState(time=state.time, omega=state.omega, psi=1.2 * state.psi)
    with pytest.raises(InconsistentStateError, match="streamfunction residual"):
        TangentOperators(model, broken)
    ops = build_tangent(model, broken, check_consistency=False)
    assert np.isfinite(ops.materialize_B()).all()


def test_recover_delta_psi(setup):
    model, state = setup
    ops = TangentOperators(model, state)
    n = model.core.n_dofs
    # pure uniform relative deepening with no vorticity response rescales psi
    dpsi = ops.recover_delta_psi(np.zeros(n), np.ones(n))
    assert np.abs(dpsi - state.psi).max() < 1e-10 * np.abs(state.psi).max()
    # with chi = 0 the recovery reduces to the elliptic solve
    rng = np.random.default_rng(6)
    dom = model.dofmap.embed_interior(rng.standard_normal(model.n0))
    dpsi = ops.recover_delta_psi(dom, np.zeros(n))
    want = model.solve_streamfunction(dom)
    assert np.abs(dpsi - want).max() < 1e-13 * np.abs(want).max()


def test_fd_verify_first_order_convergence(setup):
    model, state = setup
    report = fd_verify(model, state, smooth_bump(model.dofmap), 0.5 * DAY,
                       0.05 * DAY, np.logspace(-2, -10, 17))
    assert abs(report.slope - 1.0) < 0.15
    assert not report.floor_flags[0]
    assert report.floor_flags[-1]
    # residuals fall linearly until cancellation noise takes over
    clean = report.residuals[~report.floor_flags]
    assert clean[0] / clean.min() > 1e3


def test_fd_verify_with_explicit_fit_range(setup):
    model, state = setup
    report = fd_verify(model, state, smooth_bump(model.dofmap), 0.5 * DAY,
                       0.05 * DAY, np.logspace(-2, -5, 7),
                       fit_range=(1e-5, 1e-2))
    assert abs(report.slope - 1.0) < 0.02


def test_fd_verify_rejects_zero_direction(setup):
    model, state = setup
    with pytest.raises(ValueError, match="tangent response vanished"):
        fd_verify(model, state, np.zeros(model.core.n_dofs), 0.5 * DAY,
                  0.05 * DAY, [1e-3, 1e-4])


def test_fd_verify_uniform_direction_has_no_signal(setup):
    # deltaH proportional to H excites only roundoff; every epsilon is
    # flagged as floored and no slope can be fitted
    model, state = setup
    with pytest.raises(ValueError, match="epsilons"):
        fd_verify(model, state, 0.3 * model.depth, 0.5 * DAY, 0.05 * DAY,
                  np.logspace(-2, -5, 7))


def test_fd_verify_rejects_nondividing_dt(setup):
    model, state = setup
    with pytest.raises(ValueError, match="divide"):
        fd_verify(model, state, smooth_bump(model.dofmap), 0.5 * DAY,
                  0.07 * DAY, [1e-3, 1e-4])
