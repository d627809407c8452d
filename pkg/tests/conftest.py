"""Shared fixtures: meshes, models and the expensive reference states.

The session-scoped states (spun-up basins, the eddying trajectory) are
built lazily; module tests that never request them stay fast.  Acceptance
tests record a one-line verdict per check, echoed at the end of the run.
"""

import numpy as np
import pytest

from toposense.dynamics import (
    DAY,
    ModelParams,
    VorticityModel,
    sample_trajectory,
    sinusoidal_topography,
    spin_up,
    stationarity_residual,
    two_gyre_forcing,
)
from toposense.fem import assemble_core
from toposense.mesh import build_dof_map, generate_graded_square_mesh

SIDE = 4000.0e3


def make_core(n_coarse, grading_ratio=1.0, side=SIDE):
    mesh = generate_graded_square_mesh(side, n_coarse, grading_ratio)
    return assemble_core(build_dof_map(mesh))


def make_flat_model(core, viscosity, tau0=1.1, base_depth=500.0, side=SIDE):
    params = ModelParams(viscosity=viscosity)
    depth = np.full(core.n_dofs, base_depth)
    forcing = two_gyre_forcing(core.dofmap, params, tau0, side)
    return VorticityModel(core, params, depth, forcing)


def make_bumpy_model(core, viscosity, amplitude, kx=4, ky=4, tau0=1.1,
                     base_depth=500.0, side=SIDE):
    params = ModelParams(viscosity=viscosity)
    depth = sinusoidal_topography(core.dofmap, base_depth, amplitude, kx, ky, side)
    forcing = two_gyre_forcing(core.dofmap, params, tau0, side)
    return VorticityModel(core, params, depth, forcing)


# ---------------------------------------------------------------------------
# light fixtures for the module tests
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def small_core():
    """77-dof graded square, cheap enough for dense reference assemblies."""
    return make_core(3, 4.0)


@pytest.fixture(scope="session")
def small_model(small_core):
    return make_flat_model(small_core, viscosity=500.0)


@pytest.fixture(scope="session")
def manufactured_steady(small_core):
    """An exactly stationary model: the wind is built to cancel the tendency.

    Taking a smooth interior vorticity and solving for the forcing that
    balances advection, friction and drag gives a steady state to solver
    roundoff, without any spin-up integration.
    """
    core = small_core
    dofmap = core.dofmap
    params = ModelParams(viscosity=500.0)
    depth = sinusoidal_topography(dofmap, 500.0, 80.0, 3, 2, SIDE)
    scratch = VorticityModel(core, params, depth,
                             np.zeros(core.n_dofs))
    x = dofmap.dof_coords[:, 0] / SIDE
    y = dofmap.dof_coords[:, 1] / SIDE
    omega = 2.0e-6 * np.sin(np.pi * x) * np.sin(np.pi * y)
    omega += 0.7e-6 * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y)
    omega[dofmap.boundary_flags] = 0.0
    state = scratch.state_from_omega(omega)
    q = scratch.potential_field(omega)
    jac = core.jac
    adv = np.bincount(jac.idx0,
                      weights=jac.values * state.psi[jac.idx1] * q[jac.idx2],
                      minlength=core.n_dofs)
    n0 = dofmap.n_interior
    need = (adv + params.viscosity * (core.rigidity @ omega))[:n0]
    forcing_int = scratch.solve_mass(need) + params.drag * omega[:n0]
    forcing = dofmap.embed_interior(forcing_int)
    model = VorticityModel(core, params, depth, forcing)
    steady = model.state_from_omega(omega)
    assert stationarity_residual(model, steady) < 1.0e-12
    return model, steady


# ---------------------------------------------------------------------------
# heavy reference states for the acceptance checks
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def paper_core():
    """The 455-dof graded production mesh (204 triangles)."""
    return make_core(6, 16.0)


@pytest.fixture(scope="session")
def spin800(paper_core):
    """Flat-bottom nu=3000 basin after an 800-day ramped spin-up."""
    model = make_flat_model(paper_core, viscosity=3000.0)
    result = spin_up(model, model.initial_state(), 800.0 * DAY, 0.1 * DAY,
                     ramp_duration=200.0 * DAY)
    return model, result


@pytest.fixture(scope="session")
def steady_3000(spin800):
    """The same basin continued to day 1800, stationary to 1e-8."""
    model, result = spin800
    extra = 1800.0 * DAY - result.state.time
    cont = spin_up(model, result.state, extra, 0.1 * DAY)
    res = stationarity_residual(model, cont.state)
    assert res <= 1.0e-8, f"reference spin-up residual {res:.3e}"
    return model, cont.state


@pytest.fixture(scope="session")
def steady_2000(paper_core):
    """Flat-bottom nu=2000 basin, spun 3500 days for a tight steady state."""
    model = make_flat_model(paper_core, viscosity=2000.0)
    result = spin_up(model, model.initial_state(), 3500.0 * DAY, 0.1 * DAY,
                     ramp_duration=200.0 * DAY)
    res = stationarity_residual(model, result.state)
    assert res <= 1.0e-8, f"reference spin-up residual {res:.3e}"
    return model, result.state


@pytest.fixture(scope="session")
def steady_small():
    """171-dof nu=3000 steady state for the dense-vs-iterative comparison."""
    model = make_flat_model(make_core(4, 8.0), viscosity=3000.0)
    result = spin_up(model, model.initial_state(), 1800.0 * DAY, 0.1 * DAY,
                     ramp_duration=200.0 * DAY)
    res = stationarity_residual(model, result.state)
    assert res <= 1.0e-8, f"reference spin-up residual {res:.3e}"
    return model, result.state


@pytest.fixture(scope="session")
def eddy_run():
    """1007-dof nu=500 basin: 730-day spin-up, then 102.4 sampled days.

    At this viscosity the double gyre never settles; the trajectory feeds
    the time-dependent sensitivity checks.
    """
    model = make_flat_model(make_core(9, 16.0), viscosity=500.0)
    result = spin_up(model, model.initial_state(), 730.0 * DAY, 0.1 * DAY,
                     ramp_duration=200.0 * DAY)
    traj = sample_trajectory(model, result.state, 102.4 * DAY, 0.1 * DAY)
    return model, traj


# ---------------------------------------------------------------------------
# acceptance verdict collection
# ---------------------------------------------------------------------------

_VERDICTS = []


@pytest.fixture(scope="session")
def verdicts():
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("-", "acceptance verdicts")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
