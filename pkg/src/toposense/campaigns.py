"""Experiment drivers: configuration in, deterministic artifact directory out.

Every driver validates its inputs, runs the staged pipeline, and writes a
manifest.json capturing the exact configuration (with unit conversions),
the mesh fingerprint, the seed and the sha256 of every artifact, so a rerun
with the same config and seed is bitwise reproducible.  No timestamps are
recorded anywhere.  A stage failure aborts the run with the stage name and
leaves a manifest flagging the partial outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .config import (ExperimentConfig, apply_paper_scale, default_alphas)
from .dynamics import (DAY, BasinMap, ModelParams, ModelState, VorticityModel,
                       depth_from_grid, diagnostics, gridded_wind_curl,
                       sample_trajectory, sinusoidal_topography, spin_up,
                       stationarity_residual, two_gyre_forcing)
from .fem import assemble_core
from .griddata import load_grid
from .mesh import DofMap, Mesh, build_dof_map, generate_graded_square_mesh, load_mesh
from .sensitivity import (NormOperator, SensitivityOperator, build_G_iterative,
                          build_G_stationary, compute_spectrum,
                          growth_regime_fit, null_space_report,
                          top_singular_values, t0_sweep)
from .tangent import fd_verify

STATIONARY_RESIDUAL_TOL = 1.0e-8
EXTENSION_BLOCK = 200.0 * DAY


class CampaignError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


# ---------------------------------------------------------------------------
# deterministic writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path, header, rows) -> None:
    """Comma-separated table; floats via repr so reruns are byte-identical."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_table(path, dofmap: DofMap, columns: dict) -> None:
    """Per-dof table: dof index, coordinates, then one column per field."""
    names = list(columns)
    header = ["dof", "x", "y"] + names
    xy = dofmap.dof_coords
    rows = []
    for i in range(dofmap.n_dofs):
        rows.append([i, xy[i, 0], xy[i, 1]] + [columns[k][i] for k in names])
    write_csv(path, header, rows)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def mesh_fingerprint(mesh: Mesh) -> str:
    digest = hashlib.sha256()
    digest.update(b"MESH2D")
    digest.update(np.ascontiguousarray(mesh.vertices, dtype=np.float64).tobytes())
    digest.update(np.ascontiguousarray(mesh.triangles, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(mesh.boundary_edges, dtype=np.int64).tobytes())
    return digest.hexdigest()


def save_operator(path, op: SensitivityOperator, norm: NormOperator,
                  dofmap: DofMap, mass_diagonal: np.ndarray) -> None:
    """Self-contained operator file: G plus the norm factors and dof flags
    needed to redo the spectrum and null-space analysis offline."""
    np.savez(
        path,
        matrix=op.matrix,
        t0=op.t0,
        horizon=op.horizon,
        mode=np.array(op.mode),
        norm_kind=np.array(norm.kind),
        response_factor=norm.response_factor(),
        perturbation_factor=norm.perturbation_factor(),
        mass_diagonal=mass_diagonal,
        boundary_flags=dofmap.boundary_flags,
    )


@dataclass(frozen=True)
class StoredNorm:
    """Norm factors loaded back from an operator file."""

    kind: str
    _response: np.ndarray
    _perturbation: np.ndarray

    def response_factor(self) -> np.ndarray:
        return self._response

    def perturbation_factor(self) -> np.ndarray:
        return self._perturbation


def load_operator(path):
    """Returns (SensitivityOperator, StoredNorm, mass_diagonal, boundary_flags)."""
    with np.load(path) as data:
        op = SensitivityOperator(
            matrix=data["matrix"],
            t0=float(data["t0"]),
            horizon=float(data["horizon"]),
            mode=str(data["mode"]),
        )
        norm = StoredNorm(kind=str(data["norm_kind"]),
                          _response=data["response_factor"],
                          _perturbation=data["perturbation_factor"])
        return op, norm, data["mass_diagonal"], data["boundary_flags"]


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------

class _Run:
    """Artifact directory plus the manifest under construction."""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str],
                 dry_run: bool):
        self.config = config
        self.dry_run = dry_run
        self.directory = output_dir or config.output or f"{config.kind}_run"
        os.makedirs(self.directory, exist_ok=True)
        canonical = config.canonical_text()
        self.manifest = {
            "format": "toposense-manifest v1",
            "package_version": __version__,
            "kind": config.kind,
            "seed": config.seed,
            "status": "incomplete",
            "config": config.as_dict(),
            "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
            "unit_conversions": list(config.conversions),
            "stages": [],
            "summaries": {},
            "artifacts": {},
        }

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def stage(self, name: str):
        return _Stage(self, name)

    def artifact(self, name: str) -> None:
        self.manifest["artifacts"][name] = file_sha256(self.path(name))

    def summarize(self, key: str, value) -> None:
        self.manifest["summaries"][key] = value

    def finish(self, status: str = "complete") -> str:
        self.manifest["status"] = status
        text = json.dumps(self.manifest, sort_keys=True, indent=1)
        with open(self.path("manifest.json"), "w") as fh:
            fh.write(text + "\n")
        return self.directory


class _Stage:
    def __init__(self, run: _Run, name: str):
        self.run = run
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            self.run.manifest["stages"].append(self.name)
            return False
        self.run.manifest["failed_stage"] = self.name
        self.run.finish(status="failed")
        raise CampaignError(f"stage '{self.name}' failed: {exc}") from exc


# ---------------------------------------------------------------------------
# model construction from a config
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RunSetup:
    mesh: Mesh
    dofmap: DofMap
    model: VorticityModel
    basin_map: Optional[BasinMap]


def build_setup(config: ExperimentConfig,
                amplitude: Optional[float] = None,
                kx: Optional[int] = None, ky: Optional[int] = None,
                viscosity: Optional[float] = None) -> RunSetup:
    """Construct mesh, operators, topography and forcing for one run.

    The keyword overrides serve the sweep drivers, which vary one knob
    while keeping the rest of the configuration fixed.
    """
    mesh_spec = config.mesh
    if mesh_spec.kind == "square":
        mesh = generate_graded_square_mesh(mesh_spec.side_length,
                                           mesh_spec.n_coarse,
                                           mesh_spec.grading_ratio)
    else:
        mesh = load_mesh(mesh_spec.path)
    dofmap = build_dof_map(mesh)
    core = assemble_core(dofmap)

    params = config.physics
    if viscosity is not None:
        from dataclasses import replace
        params = replace(params, viscosity=viscosity)

    basin_map = BasinMap(side_length=mesh_spec.side_length)
    topo = config.topography
    if topo.kind == "sinusoidal":
        depth = sinusoidal_topography(
            dofmap,
            base_depth=topo.base_depth,
            amplitude=topo.amplitude if amplitude is None else amplitude,
            kx=topo.kx if kx is None else kx,
            ky=topo.ky if ky is None else ky,
            side_length=mesh_spec.side_length,
        )
    else:
        depth = depth_from_grid(load_grid(topo.path), dofmap, basin_map,
                                min_depth=topo.min_depth)

    force = config.forcing
    if force.kind == "two_gyre":
        forcing = two_gyre_forcing(dofmap, params, force.tau0_dyne_cm2,
                                   mesh_spec.side_length)
    else:
        forcing = gridded_wind_curl(load_grid(force.taux_path),
                                    load_grid(force.tauy_path),
                                    dofmap, params, basin_map)

    model = VorticityModel(core, params, depth, forcing)
    return RunSetup(mesh=mesh, dofmap=dofmap, model=model, basin_map=basin_map)


def _record_mesh(run: _Run, setup: RunSetup) -> None:
    run.manifest["mesh"] = {
        "sha256": mesh_fingerprint(setup.mesh),
        "triangles": int(setup.mesh.n_triangles),
        "dofs": int(setup.dofmap.n_dofs),
        "interior": int(setup.dofmap.n_interior),
    }


def spin_to_stationary(model: VorticityModel, numerics,
                       residual_tol: float = STATIONARY_RESIDUAL_TOL):
    """Spin up and keep integrating until the dynamics residual passes
    ``residual_tol`` or the configured ceiling is reached.

    Returns (state, info dict).  The configured fixed-length spin-up is the
    first leg; extensions run in 200-day blocks because the slowest basin
    modes decay on that scale.
    """
    result = spin_up(model, model.initial_state(), duration=numerics.spin_up,
                     dt=numerics.dt, scheme=numerics.scheme,
                     ramp_duration=numerics.ramp)
    state = result.state
    elapsed = numerics.spin_up
    residual = stationarity_residual(model, state)
    while residual > residual_tol and elapsed < numerics.max_spin_up - 1e-6:
        block = min(EXTENSION_BLOCK, numerics.max_spin_up - elapsed)
        result = spin_up(model, state, duration=block, dt=numerics.dt,
                         scheme=numerics.scheme)
        state = result.state
        elapsed += block
        residual = stationarity_residual(model, state)
    info = {
        "spin_up_days": elapsed / DAY,
        "residual": residual,
        "stationary": bool(residual <= residual_tol),
    }
    return state, info


def _day_tag(seconds: float) -> str:
    return f"{seconds / DAY:g}d"


# ---------------------------------------------------------------------------
# shared trajectory pipeline (square box and realistic basin)
# ---------------------------------------------------------------------------

def _trajectory_pipeline(run: _Run, setup: RunSetup) -> None:
    config = run.config
    num = config.numerics
    model = setup.model
    dofmap = setup.dofmap
    mass_diag = np.asarray(model.core.mass.diagonal())

    with run.stage("spin_up"):
        result = spin_up(model, model.initial_state(), duration=num.spin_up,
                         dt=num.dt, scheme=num.scheme, ramp_duration=num.ramp)
        tail = result.log[-1] if result.log else {}
        run.summarize("spin_up", {
            "days": num.spin_up / DAY,
            "stationary": bool(result.stationary),
            "final_kinetic_energy": tail.get("kinetic_energy"),
            "final_enstrophy": tail.get("enstrophy"),
        })

    with run.stage("trajectory"):
        traj = sample_trajectory(model, result.state, duration=num.trajectory,
                                 sample_interval=num.sample_interval,
                                 dt=num.dt, scheme=num.scheme)
        energy_rows = []
        for k in range(traj.n_samples):
            d = diagnostics(model, traj.state(k))
            energy_rows.append([ (traj.times[k] - traj.times[0]) / DAY,
                                 d["kinetic_energy"], d["enstrophy"] ])
        write_csv(run.path("trajectory_energy.csv"),
                  ["t_days", "kinetic_energy", "enstrophy"], energy_rows)
        run.artifact("trajectory_energy.csv")
        final = traj.state(traj.n_samples - 1)
        write_field_table(run.path("state_final.csv"), dofmap,
                          {"omega": final.omega, "psi": final.psi})
        run.artifact("state_final.csv")

    norm = NormOperator(model, kind=config.sweep.norm)
    top_k = config.sweep.top_k
    span = float(traj.times[-1] - traj.times[0])

    for horizon in config.sweep.horizons:
        tag = _day_tag(horizon)
        with run.stage(f"sensitivity_T{tag}"):
            op = build_G_iterative(model, traj, horizon=horizon,
                                   t0=float(traj.times[0]))
            save_operator(run.path(f"G_T{tag}.npz"), op, norm, dofmap, mass_diag)
            run.artifact(f"G_T{tag}.npz")
            spectrum = compute_spectrum(op, norm)
            write_csv(run.path(f"spectrum_T{tag}.csv"), ["index", "lambda"],
                      [[i, v] for i, v in enumerate(spectrum.singular_values)])
            run.artifact(f"spectrum_T{tag}.csv")
            right = {f"phi_{i+1}": spectrum.right_vectors[:, i]
                     for i in range(top_k)}
            write_field_table(run.path(f"modes_right_T{tag}.csv"), dofmap, right)
            run.artifact(f"modes_right_T{tag}.csv")
            left = {f"dw_{i+1}": dofmap.embed_interior(spectrum.left_vectors[:, i])
                    for i in range(top_k)}
            write_field_table(run.path(f"modes_left_T{tag}.csv"), dofmap, left)
            run.artifact(f"modes_left_T{tag}.csv")
            n = dofmap.n_dofs
            null_cols = {f"null_{i+1}": spectrum.right_vectors[:, n - 1 - i]
                         for i in range(min(top_k, spectrum.null_dim) )}
            if null_cols:
                write_field_table(run.path(f"modes_null_T{tag}.csv"), dofmap,
                                  null_cols)
                run.artifact(f"modes_null_T{tag}.csv")
            report = null_space_report(spectrum, dofmap, mass_diag)
            with open(run.path(f"null_report_T{tag}.txt"), "w") as fh:
                fh.write(report.summary() + "\n")
            run.artifact(f"null_report_T{tag}.txt")
            run.summarize(f"lambda_max_T{tag}", float(spectrum.lambda_max))
            run.summarize(f"null_dim_T{tag}", int(spectrum.null_dim))

        count = int(span // horizon)
        if count < 1:
            continue
        with run.stage(f"t0_sweep_T{tag}"):
            sweep = t0_sweep(model, traj, horizon=horizon, count=count,
                             norm=norm, top_k=top_k)
            header = ["window", "t0_days"] + [f"lambda_{i+1}" for i in range(top_k)]
            rows = []
            for w in range(count):
                rows.append([w, (sweep.t0_values[w] - traj.times[0]) / DAY]
                            + list(sweep.singular_values[w]))
            write_csv(run.path(f"t0_sweep_T{tag}.csv"), header, rows)
            run.artifact(f"t0_sweep_T{tag}.csv")
            lead = sweep.leading
            run.summarize(f"t0_sweep_T{tag}", {
                "windows": count,
                "lambda1_max_over_min": float(lead.max() / lead.min()),
            })


def run_square_campaign(config: ExperimentConfig,
                        output_dir: Optional[str] = None,
                        dry_run: bool = False) -> str:
    """Two-gyre square-box campaign: spin-up, sampled trajectory, spectra
    and t0 sweeps for every configured error-growing time."""
    if config.kind not in ("square_twogyre", "t0_sweep"):
        raise CampaignError(f"config kind '{config.kind}' is not a square campaign")
    run = _Run(config, output_dir, dry_run)
    setup = build_setup(config)
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")
    _trajectory_pipeline(run, setup)
    return run.finish()


def run_realistic_campaign(config: ExperimentConfig,
                           output_dir: Optional[str] = None,
                           dry_run: bool = False) -> str:
    """Basin campaign on a supplied mesh with gridded stress and topography."""
    if config.kind != "realistic_basin":
        raise CampaignError(f"config kind '{config.kind}' is not realistic_basin")
    run = _Run(config, output_dir, dry_run)
    with run.stage("inputs"):
        setup = build_setup(config)
        _record_mesh(run, setup)
        run.summarize("depth", {
            "min_m": float(setup.model.depth.min()),
            "max_m": float(setup.model.depth.max()),
        })
    if dry_run:
        return run.finish(status="dry-run")
    _trajectory_pipeline(run, setup)
    return run.finish()


# ---------------------------------------------------------------------------
# stationary-point sweeps
# ---------------------------------------------------------------------------

def _stationary_point_row(config: ExperimentConfig, label: float,
                          **overrides):
    """Spin one configuration to its stationary point and take top-k values."""
    setup = build_setup(config, **overrides)
    state, info = spin_to_stationary(setup.model, config.numerics)
    row = {"label": label, "info": info, "values": None}
    if info["stationary"]:
        op = build_G_stationary(setup.model, state, config.sweep.horizons[0])
        norm = NormOperator(setup.model, kind=config.sweep.norm)
        row["values"] = top_singular_values(op, norm, config.sweep.top_k)
    return row


def _sweep_rows(config: ExperimentConfig, labels, worker):
    if config.sweep.workers > 1:
        with ThreadPoolExecutor(max_workers=config.sweep.workers) as pool:
            return list(pool.map(worker, labels))
    return [worker(v) for v in labels]


def run_alpha_sweep(config: ExperimentConfig,
                    output_dir: Optional[str] = None,
                    dry_run: bool = False) -> str:
    """Stationary sensitivity versus sinusoidal topography height alpha."""
    if config.kind != "alpha_sweep":
        raise CampaignError(f"config kind '{config.kind}' is not alpha_sweep")
    run = _Run(config, output_dir, dry_run)
    alphas = config.sweep.alphas or default_alphas()
    setup = build_setup(config, amplitude=alphas[0])
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")

    top_k = config.sweep.top_k
    with run.stage("alpha_sweep"):
        rows = _sweep_rows(config, alphas,
                           lambda a: _stationary_point_row(config, a, amplitude=a))
        header = (["alpha_m", "stationary", "spin_up_days", "residual"]
                  + [f"lambda_{i+1}" for i in range(top_k)])
        table = []
        lam1 = {}
        flagged = []
        for row in rows:
            info = row["info"]
            values = row["values"]
            if values is None:
                flagged.append(row["label"])
                table.append([row["label"], False, info["spin_up_days"],
                              info["residual"]] + [np.nan] * top_k)
            else:
                lam1[row["label"]] = float(values[0])
                table.append([row["label"], True, info["spin_up_days"],
                              info["residual"]] + list(values))
        write_csv(run.path("alpha_sweep.csv"), header, table)
        run.artifact("alpha_sweep.csv")
        summary = {"non_stationary_alphas": flagged}
        if lam1:
            best = max(lam1, key=lam1.get)
            summary["argmax_alpha_m"] = float(best)
        lo, hi = min(alphas), max(alphas)
        if lo in lam1 and hi in lam1 and lo < 0.0 < hi:
            big = max(lam1[lo], lam1[hi])
            summary["asymmetry"] = {
                "alpha_low_m": float(lo), "lambda1_low": lam1[lo],
                "alpha_high_m": float(hi), "lambda1_high": lam1[hi],
                "relative_difference": abs(lam1[lo] - lam1[hi]) / big,
            }
        run.summarize("alpha_sweep", summary)
    return run.finish()


def run_wavenumber_sweep(config: ExperimentConfig,
                         output_dir: Optional[str] = None,
                         dry_run: bool = False) -> str:
    """Stationary sensitivity versus topography wavenumber at fixed height."""
    if config.kind != "wavenumber_sweep":
        raise CampaignError(f"config kind '{config.kind}' is not wavenumber_sweep")
    run = _Run(config, output_dir, dry_run)
    amplitude = config.topography.amplitude or 100.0
    ks = config.sweep.wavenumbers
    setup = build_setup(config, amplitude=amplitude, kx=int(ks[0]), ky=int(ks[0]))
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")

    top_k = config.sweep.top_k
    with run.stage("wavenumber_sweep"):
        rows = _sweep_rows(
            config, ks,
            lambda k: _stationary_point_row(config, k, amplitude=amplitude,
                                            kx=int(k), ky=int(k)))
        header = (["k", "stationary", "spin_up_days", "residual"]
                  + [f"lambda_{i+1}" for i in range(top_k)])
        table = []
        lam1 = {}
        flagged = []
        for row in rows:
            info = row["info"]
            values = row["values"]
            if values is None:
                flagged.append(int(row["label"]))
                table.append([int(row["label"]), False, info["spin_up_days"],
                              info["residual"]] + [np.nan] * top_k)
            else:
                lam1[int(row["label"])] = float(values[0])
                table.append([int(row["label"]), True, info["spin_up_days"],
                              info["residual"]] + list(values))
        write_csv(run.path("wavenumber_sweep.csv"), header, table)
        run.artifact("wavenumber_sweep.csv")
        summary = {"non_stationary_k": flagged, "amplitude_m": float(amplitude)}
        if lam1:
            values = np.array(list(lam1.values()))
            summary["lambda1_max_over_min"] = float(values.max() / values.min())
        run.summarize("wavenumber_sweep", summary)
    return run.finish()


def _rank_correlation(a, b) -> float:
    """Spearman correlation (no tie handling; inputs are continuous)."""
    a = np.asarray(a)
    b = np.asarray(b)
    ra = np.empty(a.size)
    rb = np.empty(b.size)
    ra[np.argsort(a)] = np.arange(a.size)
    rb[np.argsort(b)] = np.arange(b.size)
    return float(np.corrcoef(ra, rb)[0, 1])


def run_stability_comparison(config: ExperimentConfig,
                             output_dir: Optional[str] = None,
                             dry_run: bool = False) -> str:
    """Pair each topography height with the smallest viscosity that still
    reaches a stationary point, against its sensitivity at the base viscosity."""
    if config.kind != "alpha_sweep":
        raise CampaignError("stability comparison runs on an alpha_sweep config")
    run = _Run(config, output_dir, dry_run)
    alphas = config.sweep.alphas or default_alphas()
    setup = build_setup(config, amplitude=alphas[0])
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")

    num = config.numerics
    lo_base, hi_base = config.sweep.stability_bracket

    def converges(alpha: float, viscosity: float) -> bool:
        trial = build_setup(config, amplitude=alpha, viscosity=viscosity)
        result = spin_up(trial.model, trial.model.initial_state(),
                         duration=config.sweep.stability_days, dt=num.dt,
                         scheme=num.scheme, ramp_duration=num.ramp)
        return result.stationary

    def one_alpha(alpha: float) -> dict:
        row = _stationary_point_row(config, alpha, amplitude=alpha)
        lam1 = float(row["values"][0]) if row["values"] is not None else np.nan
        lo, hi = lo_base, hi_base
        flag = "ok"
        if not converges(alpha, hi):
            return {"alpha": alpha, "nu_min": np.nan, "lambda1": lam1,
                    "flag": "bracket_failed"}
        if converges(alpha, lo):
            return {"alpha": alpha, "nu_min": lo, "lambda1": lam1,
                    "flag": "all_converged"}
        while (hi - lo) > 0.05 * hi:
            mid = 0.5 * (lo + hi)
            if converges(alpha, mid):
                hi = mid
            else:
                lo = mid
        return {"alpha": alpha, "nu_min": hi, "lambda1": lam1, "flag": flag}

    with run.stage("stability_comparison"):
        rows = _sweep_rows(config, alphas, one_alpha)
        write_csv(run.path("stability_comparison.csv"),
                  ["alpha_m", "nu_min", "lambda_1", "flag"],
                  [[r["alpha"], r["nu_min"], r["lambda1"], r["flag"]]
                   for r in rows])
        run.artifact("stability_comparison.csv")
        clean = [r for r in rows
                 if r["flag"] == "ok" and np.isfinite(r["lambda1"])]
        summary = {"bisected_points": len(clean)}
        if len(clean) >= 3:
            summary["rank_correlation_nu_min_vs_lambda1"] = _rank_correlation(
                [r["nu_min"] for r in clean], [r["lambda1"] for r in clean])
        run.summarize("stability_comparison", summary)
    return run.finish()


def run_growth_regime(config: ExperimentConfig,
                      output_dir: Optional[str] = None,
                      dry_run: bool = False) -> str:
    """lambda_1 versus error-growing time at a stationary point, with the
    power-law fit and breakpoint detection."""
    if config.kind != "growth_regime":
        raise CampaignError(f"config kind '{config.kind}' is not growth_regime")
    run = _Run(config, output_dir, dry_run)
    setup = build_setup(config)
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")

    with run.stage("spin_up"):
        state, info = spin_to_stationary(setup.model, config.numerics)
        run.summarize("spin_up", info)
        if not info["stationary"]:
            raise ValueError(
                f"no stationary point: residual {info['residual']:.3e} after "
                f"{info['spin_up_days']:g} days")

    with run.stage("growth_fit"):
        norm = NormOperator(setup.model, kind=config.sweep.norm)
        fit = growth_regime_fit(setup.model, state, config.sweep.horizons,
                                norm=norm, fit_window=config.sweep.fit_window)
        write_csv(run.path("growth_regime.csv"), ["T_days", "lambda_1"],
                  [[h / DAY, v] for h, v in zip(fit.horizons,
                                                fit.leading_values)])
        run.artifact("growth_regime.csv")
        t_crit = None if fit.t_critical is None else fit.t_critical / DAY
        run.summarize("growth_fit", {
            "slope": fit.slope,
            "fit_window_days": config.sweep.fit_window / DAY,
            "branch_count": fit.branch_count,
            "t_critical_days": t_crit,
            "residual_rms": fit.residual_rms,
        })
    return run.finish()


def run_fd_check(config: ExperimentConfig,
                 output_dir: Optional[str] = None,
                 dry_run: bool = False) -> str:
    """Taylor test of the tangent linearization for seeded random smooth
    depth perturbations; emits a CSV of residuals per epsilon."""
    run = _Run(config, output_dir, dry_run)
    setup = build_setup(config)
    _record_mesh(run, setup)
    if dry_run:
        return run.finish(status="dry-run")

    num = config.numerics
    with run.stage("spin_up"):
        result = spin_up(setup.model, setup.model.initial_state(),
                         duration=num.spin_up, dt=num.dt, scheme=num.scheme,
                         ramp_duration=num.ramp)
    with run.stage("fd_verify"):
        dofmap = setup.dofmap
        rng = np.random.default_rng(config.seed)
        xy = dofmap.dof_coords
        length = config.mesh.side_length
        slopes = []
        epsilons = np.logspace(-2, -5, 7)
        for trial in range(3):
            coeff = rng.standard_normal((3, 3))
            field = np.zeros(dofmap.n_dofs)
            for i in range(3):
                for j in range(3):
                    field += coeff[i, j] * np.sin((i + 1) * np.pi * xy[:, 0]
                                                  / length) \
                                         * np.sin((j + 1) * np.pi * xy[:, 1]
                                                  / length)
            delta_depth = field * (0.1 * config.topography.base_depth
                                   / max(np.abs(field).max(), 1e-300))
            report = fd_verify(setup.model, result.state, delta_depth,
                               horizon=config.sweep.horizons[0], dt=num.dt,
                               epsilons=epsilons)
            rows = [[eps, res, flag] for eps, res, flag in report.rows()]
            write_csv(run.path(f"fd_check_{trial}.csv"),
                      ["eps", "residual", "roundoff_floor"], rows)
            run.artifact(f"fd_check_{trial}.csv")
            slopes.append(report.slope)
        run.summarize("fd_check", {"slopes": slopes})
    return run.finish()


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_DRIVERS = {
    "square_twogyre": run_square_campaign,
    "t0_sweep": run_square_campaign,
    "realistic_basin": run_realistic_campaign,
    "alpha_sweep": run_alpha_sweep,
    "wavenumber_sweep": run_wavenumber_sweep,
    "growth_regime": run_growth_regime,
}


def run_experiment(config: ExperimentConfig,
                   output_dir: Optional[str] = None,
                   dry_run: bool = False,
                   paper_scale: bool = False) -> str:
    """Dispatch a parsed config to its campaign driver."""
    if paper_scale:
        config = apply_paper_scale(config)
    driver = _DRIVERS.get(config.kind)
    if driver is None:
        raise CampaignError(f"no driver for experiment kind '{config.kind}'")
    return driver(config, output_dir=output_dir, dry_run=dry_run)
