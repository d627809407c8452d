"""Experiment configuration: declarative key = value files.

A config is an INI-style text file with the sections [experiment], [mesh],
[physics], [topography], [forcing], [numerics] and [sweep].  Values are
given in the working units of the campaigns (days, km, metres, dyne/cm^2)
and converted to SI here, at parse time; every conversion is recorded so
the run manifest can log it.  Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import DAY, ModelParams

KM = 1000.0

EXPERIMENT_KINDS = (
    "square_twogyre",
    "realistic_basin",
    "alpha_sweep",
    "wavenumber_sweep",
    "t0_sweep",
    "growth_regime",
)


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration input."""


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "square"            # square | file
    side_length: float = 4000.0 * KM
    n_coarse: int = 9
    grading_ratio: float = 16.0
    path: Optional[str] = None


@dataclass(frozen=True)
class TopographySpec:
    kind: str = "sinusoidal"        # sinusoidal | grid
    base_depth: float = 500.0       # m
    amplitude: float = 0.0          # m
    kx: int = 4
    ky: int = 4
    path: Optional[str] = None
    min_depth: float = 1000.0       # m, grid validation floor


@dataclass(frozen=True)
class ForcingSpec:
    kind: str = "two_gyre"          # two_gyre | grid
    tau0_dyne_cm2: float = 1.1
    taux_path: Optional[str] = None
    tauy_path: Optional[str] = None


@dataclass(frozen=True)
class NumericsSpec:
    dt: float = 0.1 * DAY
    sample_interval: float = 0.1 * DAY   # tau, the tangent Euler step
    spin_up: float = 730.0 * DAY
    ramp: float = 200.0 * DAY
    max_spin_up: float = 3600.0 * DAY    # stationary runs may extend to this
    trajectory: float = 51.2 * DAY
    scheme: str = "rk4"


@dataclass(frozen=True)
class SweepSpec:
    horizons: tuple = (0.8 * DAY, 12.8 * DAY)
    alphas: tuple = ()              # m; empty means the default ladder
    wavenumbers: tuple = tuple(range(0, 31))
    norm: str = "enstrophy"         # enstrophy | energy | euclidean
    top_k: int = 5
    fit_window: float = 1.0 * DAY
    stability_bracket: tuple = (300.0, 3000.0)  # m^2/s
    stability_days: float = 800.0 * DAY
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "square_twogyre"
    seed: int = 1234
    output: Optional[str] = None
    mesh: MeshSpec = field(default_factory=MeshSpec)
    physics: ModelParams = field(default_factory=ModelParams)
    topography: TopographySpec = field(default_factory=TopographySpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    numerics: NumericsSpec = field(default_factory=NumericsSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    conversions: tuple = ()         # human-readable unit conversion log

    def as_dict(self) -> dict:
        """Nested plain-python view, sorted keys, for hashing and manifests."""
        def plain(obj):
            if hasattr(obj, "__dataclass_fields__"):
                return {k: plain(getattr(obj, k))
                        for k in sorted(obj.__dataclass_fields__)}
            if isinstance(obj, tuple):
                return [plain(v) for v in obj]
            return obj
        return plain(self)

    def canonical_text(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_scalar(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got '{text}'") from None


def _parse_list(text: str):
    """Whitespace/comma-separated floats, or 'a .. b : n' for a linspace."""
    text = text.strip()
    if ".." in text:
        head, _, count = text.partition(":")
        lo, _, hi = head.partition("..")
        if not count:
            raise ConfigError(f"range '{text}' needs ': count'")
        lo, hi, n = _parse_scalar(lo), _parse_scalar(hi), int(count)
        if n < 2:
            raise ConfigError("range needs at least 2 points")
        step = (hi - lo) / (n - 1)
        return tuple(lo + step * i for i in range(n))
    items = text.replace(",", " ").split()
    return tuple(_parse_scalar(v) for v in items)


class _Section:
    """Typed reader over one config section that tracks consumed keys."""

    def __init__(self, name: str, items: dict, log: list):
        self.name = name
        self.items = dict(items)
        self.log = log

    def _take(self, key):
        return self.items.pop(key, None)

    def scalar(self, key: str, default: float, unit: float = 1.0,
               unit_name: str = "") -> float:
        raw = self._take(key)
        if raw is None:
            return default
        value = _parse_scalar(raw) * unit
        if unit != 1.0:
            self.log.append(
                f"{self.name}.{key}: {raw.strip()} {unit_name} -> {value!r} SI"
            )
        return value

    def integer(self, key: str, default: int) -> int:
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected integer, got '{raw}'")

    def word(self, key: str, default, choices=None):
        raw = self._take(key)
        value = default if raw is None else raw.strip()
        if choices is not None and value not in choices:
            raise ConfigError(
                f"{self.name}.{key}: '{value}' not one of {sorted(choices)}"
            )
        return value

    def listing(self, key: str, default: tuple, unit: float = 1.0,
                unit_name: str = "") -> tuple:
        raw = self._take(key)
        if raw is None:
            return default
        values = tuple(v * unit for v in _parse_list(raw))
        if unit != 1.0:
            self.log.append(
                f"{self.name}.{key}: [{raw.strip()}] {unit_name} -> SI x{unit!r}"
            )
        return values

    def path(self, key: str, default=None, base: str = "."):
        raw = self._take(key)
        if raw is None:
            return default
        p = raw.strip()
        if not os.path.isabs(p):
            p = os.path.normpath(os.path.join(base, p))
        return p

    def finish(self):
        if self.items:
            stray = ", ".join(sorted(self.items))
            raise ConfigError(f"unknown key(s) in [{self.name}]: {stray}")


def parse_config(path_or_text, base_dir: Optional[str] = None) -> ExperimentConfig:
    """Read a config file (or literal text) into an ExperimentConfig.

    Relative file references are resolved against the config's directory.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        parser.read_file(io.StringIO(path_or_text))
        base = base_dir or "."
    else:
        path = os.fspath(path_or_text)
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            parser.read_file(fh)
        base = base_dir or os.path.dirname(os.path.abspath(path))

    known = {"experiment", "mesh", "physics", "topography", "forcing",
             "numerics", "sweep"}
    stray = set(parser.sections()) - known
    if stray:
        raise ConfigError(f"unknown section(s): {sorted(stray)}")

    log: list = []

    def section(name):
        items = dict(parser[name]) if parser.has_section(name) else {}
        return _Section(name, items, log)

    exp = section("experiment")
    kind = exp.word("kind", "square_twogyre", choices=set(EXPERIMENT_KINDS))
    seed = exp.integer("seed", 1234)
    output = exp.path("output", None, base)
    exp.finish()

    mesh_sec = section("mesh")
    mesh = MeshSpec(
        kind=mesh_sec.word("kind", "square", choices={"square", "file"}),
        side_length=mesh_sec.scalar("side_length_km", 4000.0 * KM, KM, "km"),
        n_coarse=mesh_sec.integer("n_coarse", 9),
        grading_ratio=mesh_sec.scalar("grading_ratio", 16.0),
        path=mesh_sec.path("path", None, base),
    )
    mesh_sec.finish()

    defaults = ModelParams()
    phys_sec = section("physics")
    physics = ModelParams(
        f0=phys_sec.scalar("f0", defaults.f0),
        beta=phys_sec.scalar("beta", defaults.beta),
        viscosity=phys_sec.scalar("viscosity", _default_viscosity(kind)),
        drag=phys_sec.scalar("drag", defaults.drag),
        rho0=phys_sec.scalar("rho0", defaults.rho0),
        ref_depth=phys_sec.scalar("ref_depth_m", defaults.ref_depth),
    )
    phys_sec.finish()

    topo_sec = section("topography")
    topography = TopographySpec(
        kind=topo_sec.word("kind", "sinusoidal", choices={"sinusoidal", "grid"}),
        base_depth=topo_sec.scalar("base_depth_m", 500.0),
        amplitude=topo_sec.scalar("amplitude_m", 0.0),
        kx=topo_sec.integer("kx", 4),
        ky=topo_sec.integer("ky", 4),
        path=topo_sec.path("path", None, base),
        min_depth=topo_sec.scalar("min_depth_m", 1000.0),
    )
    topo_sec.finish()

    force_sec = section("forcing")
    forcing = ForcingSpec(
        kind=force_sec.word("kind", "two_gyre", choices={"two_gyre", "grid"}),
        tau0_dyne_cm2=force_sec.scalar("tau0_dyne_cm2", 1.1),
        taux_path=force_sec.path("taux_path", None, base),
        tauy_path=force_sec.path("tauy_path", None, base),
    )
    log.append(
        f"forcing.tau0: {forcing.tau0_dyne_cm2!r} dyne/cm^2 -> "
        f"{forcing.tau0_dyne_cm2 * 0.1!r} N/m^2"
    )
    force_sec.finish()

    num_defaults = _default_numerics(kind)
    num_sec = section("numerics")
    numerics = NumericsSpec(
        dt=num_sec.scalar("dt_days", num_defaults.dt, DAY, "days"),
        sample_interval=num_sec.scalar("sample_interval_days",
                                       num_defaults.sample_interval, DAY, "days"),
        spin_up=num_sec.scalar("spin_up_days", num_defaults.spin_up, DAY, "days"),
        ramp=num_sec.scalar("ramp_days", num_defaults.ramp, DAY, "days"),
        max_spin_up=num_sec.scalar("max_spin_up_days",
                                   num_defaults.max_spin_up, DAY, "days"),
        trajectory=num_sec.scalar("trajectory_days",
                                  num_defaults.trajectory, DAY, "days"),
        scheme=num_sec.word("scheme", "rk4", choices={"rk4", "euler"}),
    )
    num_sec.finish()

    sweep_defaults = SweepSpec()
    sweep_sec = section("sweep")
    sweep = SweepSpec(
        horizons=sweep_sec.listing("horizons_days", _default_horizons(kind),
                                   DAY, "days"),
        alphas=sweep_sec.listing("alphas_m", sweep_defaults.alphas),
        wavenumbers=tuple(int(v) for v in sweep_sec.listing(
            "wavenumbers", sweep_defaults.wavenumbers)),
        norm=sweep_sec.word("norm", _default_norm(kind),
                            choices={"enstrophy", "energy", "euclidean"}),
        top_k=sweep_sec.integer("top_k", 5),
        fit_window=sweep_sec.scalar("fit_window_days",
                                    sweep_defaults.fit_window, DAY, "days"),
        stability_bracket=sweep_sec.listing("stability_bracket",
                                            sweep_defaults.stability_bracket),
        stability_days=sweep_sec.scalar("stability_days",
                                        sweep_defaults.stability_days,
                                        DAY, "days"),
        workers=sweep_sec.integer("workers", 1),
    )
    sweep_sec.finish()

    config = ExperimentConfig(
        kind=kind, seed=seed, output=output, mesh=mesh, physics=physics,
        topography=topography, forcing=forcing, numerics=numerics,
        sweep=sweep, conversions=tuple(log),
    )
    validate_config(config)
    return config


def _default_viscosity(kind: str) -> float:
    if kind in ("alpha_sweep", "wavenumber_sweep"):
        return 3000.0
    if kind == "growth_regime":
        return 2000.0
    if kind == "realistic_basin":
        return 300.0
    return 500.0


def _default_norm(kind: str) -> str:
    return "energy" if kind == "growth_regime" else "enstrophy"


def _default_horizons(kind: str) -> tuple:
    if kind in ("alpha_sweep", "wavenumber_sweep"):
        return (1.0 * DAY,)
    if kind == "growth_regime":
        days = (1e-3, 2e-3, 4e-3, 1e-2, 2e-2, 4e-2, 0.1, 0.2, 0.4, 1.0,
                1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0)
        return tuple(d * DAY for d in days)
    return (0.8 * DAY, 12.8 * DAY)


def _default_numerics(kind: str) -> NumericsSpec:
    base = NumericsSpec()
    if kind in ("alpha_sweep", "wavenumber_sweep"):
        return NumericsSpec(spin_up=800.0 * DAY, trajectory=0.0)
    if kind == "growth_regime":
        return NumericsSpec(spin_up=3500.0 * DAY, trajectory=0.0)
    return base


def validate_config(config: ExperimentConfig) -> None:
    """Range and file-existence checks; raises ConfigError before any compute."""
    num = config.numerics
    for label, value in (("dt", num.dt), ("sample_interval", num.sample_interval)):
        if value <= 0.0:
            raise ConfigError(f"numerics.{label} must be positive")
    for label, value in (("spin_up", num.spin_up), ("ramp", num.ramp),
                         ("trajectory", num.trajectory)):
        if value < 0.0:
            raise ConfigError(f"numerics.{label} must be non-negative")
    if num.max_spin_up < num.spin_up:
        raise ConfigError("numerics.max_spin_up must be >= spin_up")
    phys = config.physics
    if phys.viscosity <= 0.0 or phys.rho0 <= 0.0 or phys.ref_depth <= 0.0:
        raise ConfigError("physics viscosity, rho0 and ref_depth must be positive")
    if phys.drag < 0.0:
        raise ConfigError("physics.drag must be non-negative")
    mesh = config.mesh
    if mesh.kind == "square":
        if mesh.side_length <= 0.0:
            raise ConfigError("mesh.side_length_km must be positive")
        if mesh.n_coarse < 2 or mesh.grading_ratio < 1.0:
            raise ConfigError("mesh needs n_coarse >= 2 and grading_ratio >= 1")
    else:
        if not mesh.path:
            raise ConfigError("mesh.kind = file requires mesh.path")
        if not os.path.exists(mesh.path):
            raise ConfigError(f"mesh file not found: {mesh.path}")
    topo = config.topography
    if topo.kind == "sinusoidal":
        if topo.base_depth - abs(topo.amplitude) <= 0.0:
            raise ConfigError(
                f"sinusoidal topography reaches the surface "
                f"(base {topo.base_depth:g} m, amplitude {topo.amplitude:g} m)"
            )
    else:
        if not topo.path:
            raise ConfigError("topography.kind = grid requires topography.path")
        if not os.path.exists(topo.path):
            raise ConfigError(f"topography file not found: {topo.path}")
    forcing = config.forcing
    if forcing.kind == "grid":
        for label, p in (("taux_path", forcing.taux_path),
                         ("tauy_path", forcing.tauy_path)):
            if not p:
                raise ConfigError(f"forcing.kind = grid requires forcing.{label}")
            if not os.path.exists(p):
                raise ConfigError(f"forcing file not found: {p}")
    sweep = config.sweep
    if any(h <= 0.0 for h in sweep.horizons) or not sweep.horizons:
        raise ConfigError("sweep.horizons_days must be positive and non-empty")
    if sweep.top_k < 1:
        raise ConfigError("sweep.top_k must be >= 1")
    if sweep.workers < 1:
        raise ConfigError("sweep.workers must be >= 1")
    if len(sweep.stability_bracket) != 2 or \
            not 0.0 < sweep.stability_bracket[0] < sweep.stability_bracket[1]:
        raise ConfigError("sweep.stability_bracket must be '<low> <high>' with "
                          "0 < low < high")


def apply_paper_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Restore the publication-scale run lengths (20-year spin-up,
    204.8-day sampled trajectory)."""
    from dataclasses import replace
    numerics = replace(config.numerics,
                       spin_up=7300.0 * DAY,
                       max_spin_up=max(config.numerics.max_spin_up, 7300.0 * DAY),
                       trajectory=204.8 * DAY)
    note = ("paper-scale: spin_up -> 7300 days, trajectory -> 204.8 days")
    return replace(config, numerics=numerics,
                   conversions=config.conversions + (note,))


def default_alphas() -> tuple:
    """The 30-step topography-height ladder, -300 m to +300 m inclusive."""
    return tuple(-300.0 + 20.0 * n for n in range(31))
