"""Nonlinear barotropic vorticity model over variable bottom topography.

The prognostic field is the relative vorticity omega with homogeneous
Dirichlet conditions; the transport streamfunction psi solves the weighted
elliptic problem Hmat psi = -M omega on the interior dofs.  The semi-discrete
system on interior test functions reads

    M domega/dt = -<J(psi_h, q_h), p_k> - nu C omega - sigma M omega + M F

with q = (omega + f0 + beta y)/H collocated at the dofs.  Time stepping is
classical RK4 by default; forward Euler is provided because the tangent
linear model is the exact Jacobian of the Euler step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .fem import FemCore
from .griddata import GriddedField
from .mesh import DofMap

DAY = 86400.0
DYNE_PER_CM2 = 0.1  # N/m^2


@dataclass(frozen=True)
class ModelParams:
    """Physical constants (SI units)."""

    f0: float = 1.0e-4          # 1/s, mid-latitude Coriolis value
    beta: float = 1.6e-11       # 1/(m s), beta-plane gradient at 45 N
    viscosity: float = 500.0    # m^2/s
    drag: float = 5.0e-8        # 1/s
    rho0: float = 1000.0        # kg/m^3
    ref_depth: float = 500.0    # m, scale used in the forcing term


@dataclass(frozen=True, eq=False)
class ModelState:
    """Vorticity and its consistent streamfunction at one instant."""

    time: float
    omega: np.ndarray  # (N,), 1/s, zero on boundary dofs
    psi: np.ndarray    # (N,), m^3/s, zero on boundary dofs


class VorticityModel:
    """Discretised model on one mesh, topography and forcing.

    The interior blocks of the mass matrix and of the depth-weighted
    elliptic matrix are factorised once and reused for every solve.
    """

    def __init__(self, core: FemCore, params: ModelParams, depth: np.ndarray,
                 forcing: np.ndarray):
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (core.n_dofs,):
            raise ValueError(f"depth must have shape ({core.n_dofs},)")
        if depth.min() <= 0.0:
            raise ValueError(f"depth must be positive everywhere, min {depth.min():g}")
        self.core = core
        self.dofmap: DofMap = core.dofmap
        self.params = params
        self.depth = depth
        self.inv_depth = 1.0 / depth
        self.forcing = np.asarray(forcing, dtype=np.float64)
        y = self.dofmap.dof_coords[:, 1]
        self.planetary = params.f0 + params.beta * y  # nodal f
        from .fem import assemble_weighted

        self.hmat = assemble_weighted(core, self.inv_depth)
        n0 = self.dofmap.n_interior
        self.n0 = n0
        self.mass_ii = core.mass[:n0, :n0].tocsc()
        self.rigidity_ii = core.rigidity[:n0, :n0].tocsr()
        self.hmat_ii = self.hmat[:n0, :n0].tocsc()
        self._mass_lu = splu(self.mass_ii)
        self._hmat_lu = splu(self.hmat_ii)

    # -- elementary solves -------------------------------------------------

    def solve_streamfunction(self, omega: np.ndarray) -> np.ndarray:
        """psi with Hmat psi = -M omega on interior dofs, zero on boundary."""
        rhs = -(self.core.mass @ omega)[: self.n0]
        return self.dofmap.embed_interior(self._hmat_lu.solve(rhs))

    def solve_mass(self, rhs_interior: np.ndarray) -> np.ndarray:
        return self._mass_lu.solve(rhs_interior)

    def potential_field(self, omega: np.ndarray) -> np.ndarray:
        """q = (omega + f0 + beta y)/H collocated at the dofs."""
        return (omega + self.planetary) * self.inv_depth

    def initial_state(self) -> ModelState:
        n = self.core.n_dofs
        return ModelState(time=0.0, omega=np.zeros(n), psi=np.zeros(n))

    def state_from_omega(self, omega: np.ndarray, time: float = 0.0) -> ModelState:
        return ModelState(time=time, omega=omega, psi=self.solve_streamfunction(omega))

    def streamfunction_residual(self, state: ModelState) -> float:
        """Relative residual of the elliptic relation on the interior dofs."""
        lhs = (self.hmat @ state.psi)[: self.n0]
        rhs = -(self.core.mass @ state.omega)[: self.n0]
        scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs))
        if scale == 0.0:
            return 0.0
        return float(np.linalg.norm(lhs - rhs) / scale)

    # -- tendency and stepping ---------------------------------------------

    def tendency(self, omega: np.ndarray, psi: np.ndarray,
                 forcing_scale: float = 1.0) -> np.ndarray:
        """Full-length domega/dt for given omega and matching psi."""
        q = self.potential_field(omega)
        jac = self.core.jac
        adv = np.bincount(
            jac.idx0,
            weights=jac.values * psi[jac.idx1] * q[jac.idx2],
            minlength=self.core.n_dofs,
        )
        rhs = (-adv - self.params.viscosity * (self.core.rigidity @ omega)
               + forcing_scale * (self.core.mass @ self.forcing))[: self.n0]
        dom = self.solve_mass(rhs) - self.params.drag * omega[: self.n0]
        return self.dofmap.embed_interior(dom)

    def step(self, state: ModelState, dt: float, scheme: str = "rk4",
             forcing_ramp=None) -> ModelState:
        """Advance one time step; psi of the returned state is re-solved.

        ``forcing_ramp`` maps model time to a wind multiplier; it is
        evaluated at the substage times so ramped spin-ups retain the
        scheme's accuracy.
        """
        om = state.omega
        t = state.time
        if forcing_ramp is None:
            scale = lambda _t: 1.0
        else:
            scale = forcing_ramp
        if scheme == "euler":
            om_new = om + dt * self.tendency(om, state.psi, scale(t))
        elif scheme == "rk4":
            k1 = self.tendency(om, state.psi, scale(t))
            om2 = om + 0.5 * dt * k1
            k2 = self.tendency(om2, self.solve_streamfunction(om2), scale(t + 0.5 * dt))
            om3 = om + 0.5 * dt * k2
            k3 = self.tendency(om3, self.solve_streamfunction(om3), scale(t + 0.5 * dt))
            om4 = om + dt * k3
            k4 = self.tendency(om4, self.solve_streamfunction(om4), scale(t + dt))
            om_new = om + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            raise ValueError(f"unknown scheme '{scheme}' (use 'rk4' or 'euler')")
        return ModelState(
            time=state.time + dt,
            omega=om_new,
            psi=self.solve_streamfunction(om_new),
        )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def diagnostics(model: VorticityModel, state: ModelState) -> dict:
    """Kinetic energy integral H(u^2+v^2) and enstrophy integral omega^2."""
    m = model.core.mass
    return {
        "time": state.time,
        "kinetic_energy": float(-state.psi @ (m @ state.omega)),
        "enstrophy": float(state.omega @ (m @ state.omega)),
    }


def mass_norm(model: VorticityModel, field: np.ndarray) -> float:
    return float(np.sqrt(abs(field @ (model.core.mass @ field))))


def stationarity_residual(model: VorticityModel, state: ModelState) -> float:
    """Norm of domega/dt relative to the wind term; ~0 at a steady state."""
    rate = model.tendency(state.omega, state.psi)
    return mass_norm(model, rate) / mass_norm(model, model.forcing)


# ---------------------------------------------------------------------------
# integration drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpinUpResult:
    state: ModelState
    stationary: bool
    log: list  # dicts: time, kinetic_energy, enstrophy, relative_change


def smooth_ramp(duration: float):
    """Wind multiplier rising 0 -> 1 over ``duration`` with three flat
    derivatives at both ends, so switching on the forcing injects almost
    no energy into the slowly damped basin modes."""
    def scale(t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= duration:
            return 1.0
        s = t / duration
        return s ** 4 * (35.0 - 84.0 * s + 70.0 * s ** 2 - 20.0 * s ** 3)
    return scale


def spin_up(
    model: VorticityModel,
    state: ModelState,
    duration: float,
    dt: float,
    scheme: str = "rk4",
    check_interval: float = 10.0 * DAY,
    stationary_tol: float = 1.0e-6,
    stop_when_stationary: bool = False,
    ramp_duration: float = 0.0,
) -> SpinUpResult:
    """Integrate, logging diagnostics and the vorticity change per interval.

    The run is flagged stationary once the mass-weighted relative change of
    omega over ``check_interval`` falls below ``stationary_tol``.  A nonzero
    ``ramp_duration`` turns the wind on gradually from the start time.
    """
    forcing_ramp = smooth_ramp(ramp_duration) if ramp_duration > 0.0 else None
    n_per_check = max(1, int(round(check_interval / dt)))
    n_total = int(round(duration / dt))
    log = []
    stationary = False
    prev = state.omega.copy()
    done = 0
    while done < n_total:
        n_block = min(n_per_check, n_total - done)
        for _ in range(n_block):
            state = model.step(state, dt, scheme, forcing_ramp=forcing_ramp)
        done += n_block
        denom = mass_norm(model, state.omega)
        change = mass_norm(model, state.omega - prev) / denom if denom > 0 else np.inf
        entry = diagnostics(model, state)
        entry["relative_change"] = change
        log.append(entry)
        prev = state.omega.copy()
        if n_block == n_per_check and change <= stationary_tol:
            stationary = True
            if stop_when_stationary:
                break
    return SpinUpResult(state=state, stationary=stationary, log=log)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States stored at uniform sampling interval (the tangent step tau)."""

    times: np.ndarray  # (ns,)
    omega: np.ndarray  # (ns, N)
    psi: np.ndarray    # (ns, N)

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def sample_interval(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, index: int) -> ModelState:
        return ModelState(
            time=float(self.times[index]),
            omega=self.omega[index],
            psi=self.psi[index],
        )


def sample_trajectory(
    model: VorticityModel,
    state: ModelState,
    duration: float,
    sample_interval: float,
    dt: float | None = None,
    scheme: str = "rk4",
) -> Trajectory:
    """Integrate and record the state every ``sample_interval`` seconds.

    ``dt`` defaults to the sampling interval and must divide it evenly.
    """
    if dt is None:
        dt = sample_interval
    substeps = int(round(sample_interval / dt))
    if abs(substeps * dt - sample_interval) > 1e-9 * sample_interval or substeps < 1:
        raise ValueError("dt must divide sample_interval")
    n_samples = int(round(duration / sample_interval))
    n = model.core.n_dofs
    times = np.empty(n_samples + 1)
    omegas = np.empty((n_samples + 1, n))
    psis = np.empty((n_samples + 1, n))
    times[0] = state.time
    omegas[0] = state.omega
    psis[0] = state.psi
    for k in range(1, n_samples + 1):
        for _ in range(substeps):
            state = model.step(state, dt, scheme)
        times[k] = state.time
        omegas[k] = state.omega
        psis[k] = state.psi
    return Trajectory(times=times, omega=omegas, psi=psis)


# ---------------------------------------------------------------------------
# forcing and topography fields
# ---------------------------------------------------------------------------

def two_gyre_forcing(
    dofmap: DofMap,
    params: ModelParams,
    tau0_dyne_cm2: float,
    side_length: float,
) -> np.ndarray:
    """Classical double-gyre wind curl -(2 pi tau0 / L) sin(2 pi y / L).

    ``tau0_dyne_cm2`` is the stress amplitude in dyne/cm^2 (converted to
    N/m^2 here); the result includes the 1/(rho0 H0) scale.
    """
    tau0 = tau0_dyne_cm2 * DYNE_PER_CM2
    y = dofmap.dof_coords[:, 1]
    curl = -(2.0 * np.pi * tau0 / side_length) * np.sin(2.0 * np.pi * y / side_length)
    return curl / (params.rho0 * params.ref_depth)


def sinusoidal_topography(
    dofmap: DofMap,
    base_depth: float,
    amplitude: float,
    kx: int,
    ky: int,
    side_length: float,
) -> np.ndarray:
    """H = base + amplitude sin(kx pi x / L) sin(ky pi y / L), validated positive."""
    x = dofmap.dof_coords[:, 0]
    y = dofmap.dof_coords[:, 1]
    h = base_depth + amplitude * np.sin(kx * np.pi * x / side_length) * np.sin(
        ky * np.pi * y / side_length
    )
    if h.min() <= 0.0:
        raise ValueError(
            f"topography reaches the surface: min depth {h.min():g} m "
            f"(base {base_depth:g}, amplitude {amplitude:g})"
        )
    return h


@dataclass(frozen=True)
class BasinMap:
    """Affine-in-latitude chart from model (x, y) metres to (lon, lat) degrees."""

    side_length: float
    lat0: float = 20.0
    lon0: float = -40.0
    span_deg: float = 50.0

    def to_lonlat(self, x: np.ndarray, y: np.ndarray):
        lat = self.lat0 + self.span_deg * np.asarray(y) / self.side_length
        lon = self.lon0 + self.span_deg * np.asarray(x) / (
            self.side_length * np.cos(np.radians(lat))
        )
        return lon, lat


def gridded_wind_curl(
    tau_x: GriddedField,
    tau_y: GriddedField,
    dofmap: DofMap,
    params: ModelParams,
    basin_map: BasinMap,
) -> np.ndarray:
    """Forcing from gridded stress: (dtauy/dx - dtaux/dy) / (rho0 H0).

    The derivatives are centred differences on the data grid (one-sided at
    the edges), pulled back to model metres through the chart metric: one
    degree spans side_length/span_deg metres in y and cos(lat) times that
    in x.  The curl is sampled bilinearly at the dof positions.
    """
    metres_per_deg = basin_map.side_length / basin_map.span_deg
    dtx_dlat = np.gradient(tau_x.values, tau_x.y, axis=0)
    curl_x = GriddedField(x=tau_x.x, y=tau_x.y,
                          values=dtx_dlat / metres_per_deg)
    dty_dlon = np.gradient(tau_y.values, tau_y.x, axis=1)
    coslat = np.cos(np.radians(tau_y.y))[:, None]
    curl_y = GriddedField(x=tau_y.x, y=tau_y.y,
                          values=dty_dlon / (coslat * metres_per_deg))

    xy = dofmap.dof_coords
    lon, lat = basin_map.to_lonlat(xy[:, 0], xy[:, 1])
    curl = -curl_x.sample(lon, lat) + curl_y.sample(lon, lat)
    return curl / (params.rho0 * params.ref_depth)


def depth_from_grid(
    topo: GriddedField,
    dofmap: DofMap,
    basin_map: BasinMap,
    min_depth: float = 0.0,
) -> np.ndarray:
    """Sample gridded topography (positive metres) at the dofs and validate."""
    xy = dofmap.dof_coords
    lon, lat = basin_map.to_lonlat(xy[:, 0], xy[:, 1])
    h = topo.sample(lon, lat)
    if h.min() < min_depth:
        raise ValueError(
            f"interpolated depth {h.min():g} m is shallower than the "
            f"required minimum {min_depth:g} m"
        )
    return h
