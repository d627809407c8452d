"""Sensitivity operator G and its singular spectrum.

G maps a relative depth perturbation chi = deltaH/H (all N dofs) to the
interior vorticity perturbation it produces after a growing time T.  Two
constructions are provided:

* iterative: forward-Euler recursion G_{n+1} = (I + tau A_n) G_n + tau B_n
  along a sampled trajectory, matching the tangent model step for step;
* stationary: at a steady state the recursion sums to the closed form
  G(T) = T phi1(T A) B with phi1(z) = (e^z - 1)/z, evaluated through one
  matrix exponential of an augmented block, so A is never inverted.

Singular values and vectors are computed under a configurable pair of
quadratic forms (flow response side and depth side); the default weights
both sides with the finite-element mass matrix so that results approximate
the continuous L2 functional despite the strong mesh grading.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .dynamics import ModelState, Trajectory, VorticityModel, stationarity_residual
from .mesh import DofMap
from .tangent import TangentOperators


class SensitivityError(ValueError):
    """Invalid input to a sensitivity computation."""


@dataclass(frozen=True, eq=False)
class SensitivityOperator:
    """Dense n0 x N map from deltaH/H to the vorticity response at t0+T."""

    matrix: np.ndarray
    t0: float
    horizon: float
    mode: str
    tau: Optional[float] = None

    @property
    def n_interior(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[1]


def build_G_iterative(model: VorticityModel, trajectory: Trajectory,
                      horizon: float, t0: Optional[float] = None) -> SensitivityOperator:
    """Propagate G with Euler steps at the trajectory's sampling interval.

    The horizon must be a whole number of sampling intervals and the
    trajectory must cover [t0, t0 + horizon].
    """
    tau = trajectory.sample_interval
    n_steps = int(round(horizon / tau))
    if n_steps < 0 or abs(n_steps * tau - horizon) > 1.0e-9 * max(tau, abs(horizon)):
        raise SensitivityError(
            f"horizon {horizon:g}s is not a multiple of the trajectory "
            f"sampling interval {tau:g}s"
        )
    times = trajectory.times
    if t0 is None:
        t0 = float(times[0])
    start = int(round((t0 - times[0]) / tau))
    if start < 0 or start >= trajectory.n_samples or abs(times[start] - t0) > 1.0e-6 * tau:
        raise SensitivityError(f"t0={t0:g}s is not a trajectory sample time")
    if start + n_steps > trajectory.n_samples - 1:
        raise SensitivityError(
            f"trajectory ends at {times[-1]:g}s, before t0+horizon={t0 + horizon:g}s"
        )
    g = np.zeros((model.n0, model.core.n_dofs))
    for k in range(n_steps):
        ops = TangentOperators(model, trajectory.state(start + k))
        g = g + tau * ops.apply_A(g) + tau * ops.materialize_B()
    return SensitivityOperator(matrix=g, t0=t0, horizon=horizon,
                               mode="iterative", tau=tau)


def phi1_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """phi1(a) @ b with phi1(z) = (e^z - 1)/z, via one augmented exponential.

    exp([[a, b], [0, 0]]) carries phi1(a) b in its upper-right block, so the
    scaling-and-squaring machinery handles near-singular a without inversion.
    """
    n = a.shape[0]
    m = b.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    return scipy.linalg.expm(block)[:n, n:]


def build_G_stationary(model: VorticityModel, state: ModelState, horizon: float,
                       max_interior: int = 2000,
                       residual_tol: float = 1.0e-8) -> SensitivityOperator:
    """Closed-form G(T) = T phi1(T A) B at a verified steady state."""
    if model.n0 > max_interior:
        raise SensitivityError(
            f"{model.n0} interior dofs exceed the dense cap {max_interior}"
        )
    res = stationarity_residual(model, state)
    if res > residual_tol:
        raise SensitivityError(
            f"state is not stationary: dynamics residual {res:.3e} exceeds "
            f"{residual_tol:.1e}"
        )
    ops = TangentOperators(model, state)
    a = ops.apply_A(np.eye(model.n0))
    b = ops.materialize_B()
    g = phi1_product(horizon * a, horizon * b)
    if not np.isfinite(g).all():
        raise SensitivityError("matrix exponential produced non-finite entries")
    return SensitivityOperator(matrix=g, t0=state.time, horizon=horizon,
                               mode="stationary")


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

class NormOperator:
    """Quadratic forms for the two sides of the singular-value problem.

    ``kind`` selects the flow-response form on interior dofs:

    * ``"enstrophy"`` (default): mass-weighted L2, the discrete enstrophy;
    * ``"energy"``: inverse elliptic form M C^-1 M, the discrete energy;
    * ``"euclidean"``: raw coefficients, for debugging on graded meshes.

    The depth side uses the full mass matrix (or the identity in euclidean
    mode).  Energy with ``symmetric=True`` also measures the depth side with
    a screened inverse elliptic form M (C + M/l^2)^-1 M, the screen length l
    being the square root of the basin area; the screen keeps the form
    positive definite where the bare stiffness annihilates constants.

    ``scale`` multiplies both forms, which leaves every singular value and
    vector unchanged; it exists so that invariance can be asserted.
    """

    KINDS = ("enstrophy", "energy", "euclidean")

    def __init__(self, model: VorticityModel, kind: str = "enstrophy",
                 symmetric: bool = False, scale: float = 1.0):
        if kind not in self.KINDS:
            raise SensitivityError(f"unknown norm kind '{kind}'")
        if symmetric and kind != "energy":
            raise SensitivityError("symmetric mode applies to the energy norm only")
        if scale <= 0.0:
            raise SensitivityError("scale must be positive")
        self.model = model
        self.kind = kind
        self.symmetric = symmetric
        self.scale = scale
        self._response: Optional[np.ndarray] = None
        self._perturbation: Optional[np.ndarray] = None

    def scaled(self, factor: float) -> "NormOperator":
        return NormOperator(self.model, self.kind, self.symmetric,
                            self.scale * factor)

    def response_factor(self) -> np.ndarray:
        """Upper factor R with response form K = R^T R on interior dofs."""
        if self._response is None:
            model = self.model
            if self.kind == "euclidean":
                r = np.eye(model.n0)
            elif self.kind == "enstrophy":
                r = scipy.linalg.cholesky(model.mass_ii.toarray(), lower=False)
            else:
                mass = model.mass_ii.toarray()
                lc = scipy.linalg.cholesky(model.rigidity_ii.toarray(), lower=True)
                r = scipy.linalg.solve_triangular(lc, mass, lower=True)
            self._response = np.sqrt(self.scale) * r
        return self._response

    def perturbation_factor(self) -> np.ndarray:
        """Factor S with depth-side form W = S^T S on all dofs."""
        if self._perturbation is None:
            model = self.model
            if self.kind == "euclidean":
                s = np.eye(model.core.n_dofs)
            elif self.kind == "energy" and self.symmetric:
                mass = model.core.mass.toarray()
                area = float(np.sum(mass))
                screened = model.core.rigidity.toarray() + mass / area
                ls = scipy.linalg.cholesky(screened, lower=True)
                s = scipy.linalg.solve_triangular(ls, mass, lower=True)
            else:
                s = scipy.linalg.cholesky(model.core.mass.toarray(), lower=False)
            self._perturbation = np.sqrt(self.scale) * s
        return self._perturbation

    def response_form(self) -> np.ndarray:
        r = self.response_factor()
        return r.T @ r

    def perturbation_form(self) -> np.ndarray:
        s = self.perturbation_factor()
        return s.T @ s


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SensitivitySpectrum:
    """Singular triplets of G under the chosen forms.

    ``singular_values`` has one entry per dof: the n0 values of the factored
    map padded with the N - n0 structural zeros of the rectangular operator.
    Right vectors are orthonormal in the depth-side form, left vectors in
    the response form.
    """

    singular_values: np.ndarray   # (N,) descending
    right_vectors: np.ndarray     # (N, N) columns phi_i
    left_vectors: np.ndarray      # (n0, n0) columns
    null_dim: int
    null_threshold: float

    @property
    def lambda_max(self) -> float:
        return float(self.singular_values[0])


def _weighted_core(op: SensitivityOperator, norm: NormOperator) -> np.ndarray:
    r = norm.response_factor()
    s = norm.perturbation_factor()
    # R G S^-1 without inverting S: solve S^T X^T = (R G)^T
    return np.linalg.solve(s.T, (r @ op.matrix).T).T


def compute_spectrum(op: SensitivityOperator, norm: NormOperator,
                     null_threshold: float = 1.0e-10) -> SensitivitySpectrum:
    """Full SVD of the norm-weighted operator, structural zeros included."""
    core = _weighted_core(op, norm)
    u, vals, vt = np.linalg.svd(core, full_matrices=True)
    n = op.n_dofs
    lam = np.zeros(n)
    lam[: vals.size] = vals
    s = norm.perturbation_factor()
    r = norm.response_factor()
    right = np.linalg.solve(s, vt.T)
    left = np.linalg.solve(r, u)
    cut = null_threshold * lam[0]
    null_dim = int(np.count_nonzero(lam <= cut)) if lam[0] > 0.0 else n
    return SensitivitySpectrum(singular_values=lam, right_vectors=right,
                               left_vectors=left, null_dim=null_dim,
                               null_threshold=cut)


def top_singular_values(op: SensitivityOperator, norm: NormOperator,
                        count: int = 5) -> np.ndarray:
    vals = np.linalg.svd(_weighted_core(op, norm), compute_uv=False)
    return vals[:count]


def rayleigh_quotient(op: SensitivityOperator, norm: NormOperator,
                      chi: np.ndarray) -> float:
    """Response-to-perturbation ratio <K G chi, G chi> / <W chi, chi>."""
    num = norm.response_factor() @ (op.matrix @ chi)
    den = norm.perturbation_factor() @ chi
    return float((num @ num) / (den @ den))


@dataclass(frozen=True, eq=False)
class PowerIterationResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def power_iteration(op: SensitivityOperator, norm: NormOperator,
                    seed: int = 0, tol: float = 1.0e-8,
                    max_iterations: int = 1000) -> PowerIterationResult:
    """Leading singular value of the weighted operator by power iteration."""
    core = _weighted_core(op, norm)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(core.shape[1])
    v /= np.linalg.norm(v)
    value = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        w = core.T @ (core @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            value = 0.0
            converged = True
            break
        v = w / nw
        new_value = float(np.sqrt(nw))
        if abs(new_value - value) <= tol * new_value:
            value = new_value
            converged = True
            break
        value = new_value
    s = norm.perturbation_factor()
    phi = np.linalg.solve(s, v)
    return PowerIterationResult(value=value, vector=phi,
                                iterations=iterations, converged=converged)


# ---------------------------------------------------------------------------
# growth regimes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GrowthRegimeFit:
    """Power-law fit of the leading value on the small-horizon branch."""

    horizons: np.ndarray
    leading_values: np.ndarray
    slope: float
    intercept: float
    branch_count: int
    t_critical: Optional[float]
    residual_rms: float


def fit_growth_regimes(horizons, leading_values, fit_window: Optional[float] = None,
                       min_branch: int = 4, log_tol: float = 0.05) -> GrowthRegimeFit:
    """Fit log lambda_1 vs log T and locate where the power law breaks.

    The fit is seeded on the horizons up to ``fit_window`` (at least
    ``min_branch`` points) and then grows point by point while each next
    value stays within 3x the branch RMS residual, floored at ``log_tol``
    in log space so an exactly linear curve reports no breakpoint.  The
    first rejected horizon is returned as t_critical.
    """
    horizons = np.asarray(horizons, dtype=np.float64)
    leading_values = np.asarray(leading_values, dtype=np.float64)
    order = np.argsort(horizons)
    horizons = horizons[order]
    leading_values = leading_values[order]
    if horizons.size < min_branch:
        raise SensitivityError(
            f"need at least {min_branch} horizons for the small-T branch"
        )
    if np.any(horizons <= 0.0) or np.any(leading_values <= 0.0):
        raise SensitivityError("horizons and values must be positive for a log fit")
    seed = min_branch
    if fit_window is not None:
        seed = max(min_branch, int(np.sum(horizons <= float(fit_window))))
        seed = min(seed, horizons.size)
    x = np.log(horizons)
    y = np.log(leading_values)
    k = seed
    while k < x.size:
        coef = np.polyfit(x[:k], y[:k], 1)
        rms = float(np.sqrt(np.mean((y[:k] - np.polyval(coef, x[:k])) ** 2)))
        if abs(y[k] - np.polyval(coef, x[k])) > max(3.0 * rms, log_tol):
            break
        k += 1
    coef = np.polyfit(x[:k], y[:k], 1)
    rms = float(np.sqrt(np.mean((y[:k] - np.polyval(coef, x[:k])) ** 2)))
    t_critical = float(horizons[k]) if k < x.size else None
    return GrowthRegimeFit(horizons=horizons, leading_values=leading_values,
                           slope=float(coef[0]), intercept=float(coef[1]),
                           branch_count=k, t_critical=t_critical,
                           residual_rms=rms)


def growth_regime_fit(model: VorticityModel, state: ModelState, horizons,
                      norm: Optional[NormOperator] = None,
                      fit_window: Optional[float] = None,
                      min_branch: int = 4, log_tol: float = 0.05) -> GrowthRegimeFit:
    """Leading singular value per horizon at a steady state, then the fit."""
    if norm is None:
        norm = NormOperator(model)
    values = []
    for horizon in horizons:
        op = build_G_stationary(model, state, float(horizon))
        values.append(float(top_singular_values(op, norm, 1)[0]))
    return fit_growth_regimes(horizons, values, fit_window, min_branch, log_tol)


# ---------------------------------------------------------------------------
# trajectory sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class T0SweepResult:
    """Top singular values of G over consecutive trajectory windows."""

    t0_values: np.ndarray         # (count,)
    horizon: float
    singular_values: np.ndarray   # (count, top_k) rows descending

    @property
    def leading(self) -> np.ndarray:
        return self.singular_values[:, 0]


def t0_sweep(model: VorticityModel, trajectory: Trajectory, horizon: float,
             count: int, norm: Optional[NormOperator] = None,
             top_k: int = 5) -> T0SweepResult:
    """Build G over ``count`` windows of length ``horizon`` laid end to end."""
    if count < 1:
        raise SensitivityError("count must be at least 1")
    if norm is None:
        norm = NormOperator(model)
    tau = trajectory.sample_interval
    n_per = int(round(horizon / tau))
    if n_per < 1 or abs(n_per * tau - horizon) > 1.0e-9 * horizon:
        raise SensitivityError(
            f"horizon {horizon:g}s is not a positive multiple of the "
            f"sampling interval {tau:g}s"
        )
    if count * n_per > trajectory.n_samples - 1:
        raise SensitivityError(
            f"trajectory has {trajectory.n_samples} samples, fewer than the "
            f"{count * n_per + 1} needed for {count} windows"
        )
    t0s = np.empty(count)
    vals = np.empty((count, top_k))
    for w in range(count):
        t0 = float(trajectory.times[w * n_per])
        op = build_G_iterative(model, trajectory, horizon, t0=t0)
        t0s[w] = t0
        vals[w] = top_singular_values(op, norm, top_k)
    return T0SweepResult(t0_values=t0s, horizon=horizon, singular_values=vals)


# ---------------------------------------------------------------------------
# null space
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NullSpaceReport:
    """Classification of the near-null depth perturbations.

    The near-null subspace is rotated into a canonical basis ordered by
    boundary concentration (generalized eigenvectors of the boundary-mass
    ratio), which separates the boundary-supported modes from the uniform
    relative perturbation deltaH = alpha H.
    """

    null_dim: int
    null_threshold: float
    boundary_fractions: np.ndarray   # (null_dim,) descending
    boundary_count: int              # fractions >= boundary_cut
    boundary_cut: float
    constant_overlap: float          # |cos| between 1 and the residual span
    interior_count: int              # modes in neither class
    vectors: np.ndarray              # (N, null_dim) canonical basis

    def summary(self) -> str:
        lines = [
            "null space report",
            f"  dimension (values <= {self.null_threshold:.3e}): {self.null_dim}",
            f"  boundary modes (fraction >= {self.boundary_cut:g}): "
            f"{self.boundary_count}",
            f"  constant-mode overlap after removing boundary modes: "
            f"{self.constant_overlap:.6f}",
            f"  unclassified interior modes: {self.interior_count}",
        ]
        return "\n".join(lines)


def null_space_report(spectrum: SensitivitySpectrum, dofmap,
                      mass_diag: np.ndarray,
                      boundary_cut: float = 0.99) -> NullSpaceReport:
    """Classify near-null right vectors by where their mass lives.

    ``dofmap`` may be a DofMap or a bare per-dof boolean boundary array.
    ``mass_diag`` supplies positive per-dof weights (the mass-matrix
    diagonal); the boundary fraction of a vector v is then
    sum_b w_b v_b^2 / sum_i w_i v_i^2.  Within the degenerate near-null
    subspace any orthonormal basis is as good as another, so the basis is
    canonicalized by solving the generalized symmetric eigenproblem that
    extremizes that fraction; eigenvalues are the fractions themselves.
    """
    m = spectrum.null_dim
    n = spectrum.right_vectors.shape[0]
    if m == 0:
        return NullSpaceReport(null_dim=0, null_threshold=spectrum.null_threshold,
                               boundary_fractions=np.empty(0), boundary_count=0,
                               boundary_cut=boundary_cut, constant_overlap=0.0,
                               interior_count=0, vectors=np.empty((n, 0)))
    weights = np.asarray(mass_diag, dtype=np.float64)
    if weights.shape != (n,) or np.any(weights <= 0.0):
        raise SensitivityError("mass_diag must hold one positive weight per dof")
    basis = spectrum.right_vectors[:, spectrum.singular_values.size - m:]
    flags = np.asarray(getattr(dofmap, "boundary_flags", dofmap), dtype=bool)
    wb = np.where(flags, weights, 0.0)
    a_form = basis.T @ (wb[:, None] * basis)
    b_form = basis.T @ (weights[:, None] * basis)
    fractions, coeff = scipy.linalg.eigh(a_form, b_form)
    order = np.argsort(fractions)[::-1]
    fractions = np.clip(fractions[order], 0.0, 1.0)
    vectors = basis @ coeff[:, order]
    vectors /= np.linalg.norm(vectors, axis=0)
    boundary_count = int(np.count_nonzero(fractions >= boundary_cut))
    ones = np.ones(n) / np.sqrt(n)
    rest = vectors[:, boundary_count:]
    if rest.shape[1] > 0:
        q, _ = np.linalg.qr(rest)
        constant_overlap = float(np.linalg.norm(q.T @ ones))
    else:
        constant_overlap = 0.0
    interior_count = m - boundary_count - (1 if constant_overlap >= boundary_cut else 0)
    return NullSpaceReport(null_dim=m, null_threshold=spectrum.null_threshold,
                           boundary_fractions=fractions,
                           boundary_count=boundary_count,
                           boundary_cut=boundary_cut,
                           constant_overlap=constant_overlap,
                           interior_count=max(interior_count, 0),
                           vectors=vectors)
