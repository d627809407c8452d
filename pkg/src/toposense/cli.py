"""Command-line front end.

Verbs:

* ``mesh gen``   write a graded square mesh file
* ``mesh check`` validate a mesh file and print its invariants
* ``run``        execute an experiment config (``--dry-run`` validates only)
* ``spectrum``   recompute the singular spectrum from a saved operator file
* ``fdcheck``    Taylor-test the tangent linearization for a config

All heavy lifting lives in the library modules; this file only parses
arguments and prints results.  No plotting.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .campaigns import (CampaignError, file_sha256, load_operator,
                        run_experiment, run_fd_check, write_csv)
from .config import KM, ConfigError, parse_config
from .mesh import (MeshError, build_dof_map, generate_graded_square_mesh,
                   load_mesh, save_mesh)
from .sensitivity import compute_spectrum, null_space_report


def _cmd_mesh_gen(args) -> int:
    mesh = generate_graded_square_mesh(args.side_km * KM, args.n_coarse,
                                       args.grading)
    save_mesh(mesh, args.output)
    dofmap = build_dof_map(mesh)
    print(f"wrote {args.output}")
    print(f"vertices {mesh.n_vertices}  triangles {mesh.n_triangles}  "
          f"dofs {dofmap.n_dofs}  interior {dofmap.n_interior}")
    return 0


def _cmd_mesh_check(args) -> int:
    try:
        mesh = load_mesh(args.path)
        mesh.validate()
    except (MeshError, OSError) as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return 1
    dofmap = build_dof_map(mesh)
    areas = mesh.areas()
    total = float(areas.sum())
    print(f"vertices {mesh.n_vertices}  triangles {mesh.n_triangles}  "
          f"boundary edges {len(mesh.boundary_edges)}")
    print(f"dofs {dofmap.n_dofs}  interior {dofmap.n_interior}")
    print(f"min area {areas.min():.6e}  total area {total:.6e}")
    print(f"sha256 {file_sha256(args.path)}")
    return 0


def _cmd_run(args) -> int:
    try:
        config = parse_config(args.config)
        directory = run_experiment(config, output_dir=args.output_dir,
                                   dry_run=args.dry_run,
                                   paper_scale=args.paper_scale)
    except (ConfigError, CampaignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    label = "validated (dry run)" if args.dry_run else "complete"
    print(f"{label}: outputs in {directory}")
    return 0


def _cmd_spectrum(args) -> int:
    try:
        op, norm, mass_diag, boundary_flags = load_operator(args.operator)
    except (OSError, KeyError) as exc:
        print(f"cannot read operator file: {exc}", file=sys.stderr)
        return 1
    spectrum = compute_spectrum(op, norm)
    out = args.output or "spectrum.csv"
    write_csv(out, ["index", "lambda"],
              [[i, v] for i, v in enumerate(spectrum.singular_values)])
    report = null_space_report(spectrum, boundary_flags, mass_diag)
    print(f"t0 {op.t0!r}  horizon {op.horizon!r}  mode {op.mode}  "
          f"norm {norm.kind}")
    print(f"lambda_max {spectrum.lambda_max!r}  null_dim {spectrum.null_dim}")
    print(report.summary())
    print(f"wrote {out}")
    return 0


def _cmd_fdcheck(args) -> int:
    try:
        config = parse_config(args.config)
        directory = run_fd_check(config, output_dir=args.output_dir)
    except (ConfigError, CampaignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"complete: outputs in {directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toposense",
        description="Topographic sensitivity analysis of a barotropic "
                    "ocean model",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = mesh.add_subparsers(dest="mesh_verb", required=True)
    gen = mesh_sub.add_parser("gen", help="generate a graded square mesh")
    gen.add_argument("--side-km", type=float, default=4000.0)
    gen.add_argument("--n-coarse", type=int, default=9)
    gen.add_argument("--grading", type=float, default=16.0)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=_cmd_mesh_gen)
    check = mesh_sub.add_parser("check", help="validate a mesh file")
    check.add_argument("path")
    check.set_defaults(func=_cmd_mesh_check)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--dry-run", action="store_true",
                     help="validate and write the manifest without computing")
    run.add_argument("--output-dir", default=None)
    run.add_argument("--paper-scale", action="store_true",
                     help="publication-scale spin-up and trajectory lengths")
    run.set_defaults(func=_cmd_run)

    spec = sub.add_parser("spectrum",
                          help="singular spectrum of a saved operator file")
    spec.add_argument("operator")
    spec.add_argument("-o", "--output", default=None)
    spec.set_defaults(func=_cmd_spectrum)

    fdc = sub.add_parser("fdcheck",
                         help="finite-difference check of the linearization")
    fdc.add_argument("config")
    fdc.add_argument("--output-dir", default=None)
    fdc.set_defaults(func=_cmd_fdcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
