"""Tangent-linear model: vorticity and topography sensitivity operators.

At a trajectory state (psi, omega) the linearised dynamics for the interior
vorticity perturbation xi and relative depth perturbation chi = deltaH/H are

    M dxi/dt = (-A1 - A2 Hmat^-1 M) xi - nu C xi - sigma M xi
               + (B1 + B2 Hmat^-1 Pmat) chi

with the blocks of :mod:`toposense.fem`.  Because every nodal product is
collocated, these operators are the exact Jacobian of the forward-Euler
nonlinear step, so a Taylor test of the finite-difference error against the
tangent prediction has slope one until roundoff.

Operators act matrix-free: each application costs sparse products plus two
triangular solves with the factorised interior blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ModelState, VorticityModel, mass_norm
from .fem import assemble_tangent_blocks, assemble_topography_coupling

CONSISTENCY_TOL = 1.0e-8


class InconsistentStateError(ValueError):
    """Linearisation point whose psi does not solve the elliptic relation."""


class TangentOperators:
    """A and B of the tangent model frozen at one trajectory state."""

    def __init__(self, model: VorticityModel, state: ModelState,
                 check_consistency: bool = True, tol: float = CONSISTENCY_TOL):
        if check_consistency:
            res = model.streamfunction_residual(state)
            if res > tol:
                raise InconsistentStateError(
                    f"streamfunction residual {res:.3e} exceeds {tol:.1e} at "
                    f"t={state.time:g}s; the topography null mode would be lost"
                )
        self.model = model
        self.state = state
        n0 = model.n0
        self.n0 = n0
        self.n = model.core.n_dofs
        q = model.potential_field(state.omega)
        blocks = assemble_tangent_blocks(model.core, model.inv_depth, state.psi, q)
        self.pmat = assemble_topography_coupling(model.core, model.inv_depth, state.psi)
        # interior blocks: perturbations vanish on the boundary, so only the
        # leading rows/columns ever act on them
        self.a1_ii = blocks.a1[:n0, :n0].tocsr()
        self.a2_ii = blocks.a2[:n0, :n0].tocsr()
        self.b1_rows = blocks.b1[:n0, :].tocsr()
        self.pmat_rows = self.pmat[:n0, :].tocsr()

    @property
    def state_time(self) -> float:
        return self.state.time

    # -- vorticity side -----------------------------------------------------

    def apply_A(self, xi: np.ndarray) -> np.ndarray:
        """A xi for interior xi; accepts (n0,) or (n0, k) blocks."""
        model = self.model
        xi_psi = model._hmat_lu.solve(-(model.mass_ii @ xi))
        rhs = (-(self.a1_ii @ xi) + self.a2_ii @ xi_psi
               - model.params.viscosity * (model.rigidity_ii @ xi))
        return model.solve_mass(rhs) - model.params.drag * xi

    # -- topography side ----------------------------------------------------

    def apply_B(self, chi: np.ndarray) -> np.ndarray:
        """B chi for full-length chi = deltaH/H; accepts (n,) or (n, k)."""
        model = self.model
        eta = model._hmat_lu.solve(self.pmat_rows @ chi)
        rhs = self.b1_rows @ chi + self.a2_ii @ eta
        return model.solve_mass(rhs)

    def materialize_B(self) -> np.ndarray:
        """Dense (n0, n) matrix of B, one elliptic solve per column block."""
        model = self.model
        eta = model._hmat_lu.solve(self.pmat_rows.toarray())
        rhs = self.b1_rows.toarray() + self.a2_ii @ eta
        return model.solve_mass(rhs)

    # -- streamfunction recovery ---------------------------------------------

    def recover_delta_psi(self, delta_omega: np.ndarray, chi: np.ndarray) -> np.ndarray:
        """Solve Hmat dpsi = -M domega + Pmat chi on the interior dofs."""
        model = self.model
        rhs = (-(model.core.mass @ delta_omega) + self.pmat @ chi)[: self.n0]
        return model.dofmap.embed_interior(model._hmat_lu.solve(rhs))


def build_tangent(model: VorticityModel, state: ModelState,
                  check_consistency: bool = True,
                  tol: float = CONSISTENCY_TOL) -> TangentOperators:
    return TangentOperators(model, state, check_consistency, tol)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FdVerifyReport:
    """Taylor-test residuals r(eps) and the fitted log-log slope."""

    epsilons: np.ndarray
    residuals: np.ndarray
    slope: float
    floor_flags: np.ndarray  # True where roundoff dominates r(eps)

    def rows(self):
        return list(zip(self.epsilons, self.residuals, self.floor_flags))


def _euler_pair(model: VorticityModel, state0: ModelState, chi, n_steps: int,
                dt: float, with_tangent: bool):
    """Euler-integrate the nonlinear model and optionally the tangent model."""
    state = state0
    delta = np.zeros(model.n0)
    for _ in range(n_steps):
        if with_tangent:
            ops = TangentOperators(model, state)
            delta = delta + dt * (ops.apply_A(delta) + ops.apply_B(chi))
        state = model.step(state, dt, scheme="euler")
    return state, delta


def fd_verify(
    model: VorticityModel,
    state0: ModelState,
    delta_depth: np.ndarray,
    horizon: float,
    dt: float,
    epsilons,
    fit_range: tuple[float, float] | None = None,
) -> FdVerifyReport:
    """Compare nonlinear finite differences against the tangent prediction.

    For each eps the nonlinear model is rerun with depth H + eps*deltaH and

        r(eps) = || (omega_eps(T) - omega_0(T))/eps - deltaomega(T) ||
                 / || deltaomega(T) ||

    in the mass-weighted norm, both models stepped with forward Euler at the
    same dt.  The log-log slope of r is fitted over ``fit_range`` (defaults
    to all epsilons not flagged as roundoff-floored); a flag marks epsilons
    where r stops decreasing, i.e. cancellation noise took over.
    """
    epsilons = np.asarray(sorted(epsilons, reverse=True), dtype=np.float64)
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * horizon:
        raise ValueError("dt must divide the verification horizon")
    chi = delta_depth * model.inv_depth

    base_final, delta_final = _euler_pair(model, state0, chi, n_steps, dt, True)
    delta_full = model.dofmap.embed_interior(delta_final)
    denom = mass_norm(model, delta_full)
    if denom == 0.0:
        raise ValueError("tangent response vanished; nothing to verify")

    residuals = np.empty_like(epsilons)
    for k, eps in enumerate(epsilons):
        pert = VorticityModel(model.core, model.params,
                              model.depth + eps * delta_depth, model.forcing)
        pstate0 = pert.state_from_omega(state0.omega.copy(), time=state0.time)
        pert_final, _ = _euler_pair(pert, pstate0, None, n_steps, dt, False)
        diff = (pert_final.omega - base_final.omega) / eps - delta_full
        residuals[k] = mass_norm(model, diff) / denom

    # roundoff floor: residual growing while eps decreases
    floor = np.zeros(epsilons.size, dtype=bool)
    best = np.argmin(residuals)
    floor[best + 1:] = residuals[best + 1:] > residuals[best]

    if fit_range is None:
        keep = ~floor
    else:
        keep = (epsilons >= fit_range[0]) & (epsilons <= fit_range[1])
    if keep.sum() < 2:
        raise ValueError("not enough epsilons to fit a slope")
    slope = float(np.polyfit(np.log10(epsilons[keep]), np.log10(residuals[keep]), 1)[0])
    return FdVerifyReport(
        epsilons=epsilons, residuals=residuals, slope=slope, floor_flags=floor
    )
