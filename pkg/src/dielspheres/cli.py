"""Command-line surface: experiment specs, CSV emission, subcommands.

Experiments are described either by YAML files (see :func:`parse_config`)
or by flags mirroring the config keys; every study writes CSV with the
fixed column set ``kind,param,solver,tol,iterations,rel_error,
rel_residual,wall_time_s`` in a deterministic row order.  The environment
variable ``DIELSPHERES_CACHE_DIR`` relocates the reference-solution cache.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import yaml

from . import experiments
from .coeffs import save_coeff_vector
from .experiments import ResultRow
from .geometry import Configuration, Sphere, build_lattice
from .hierarchical import FarFieldParams, build_tree
from .strategies import solve_cg_strategy, solve_gmres_strategy

CSV_HEADER = ["kind", "param", "solver", "tol", "iterations",
              "rel_error", "rel_residual", "wall_time_s"]

KINDS = ("solve", "sweep-n", "sweep-kappa", "sweep-radii",
         "sweep-separation", "sweep-lmax", "fmm-study", "bench")


class ConfigError(ValueError):
    """A config file violated the documented schema."""


@dataclass
class ExperimentSpec:
    """Validated description of one experiment run."""

    kind: str
    geometry: Configuration | None = None
    solvers: tuple = ("gmres", "cg")
    tolerances: tuple = (1e-8,)
    lmax: int = 5
    mode: str = "direct"                 # direct | hierarchical
    p: int | None = None
    depth: int | None = None
    leaf_cap: int | None = None
    output_path: str = "results.csv"
    solution_path: str | None = None
    parallel: bool = False


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"kind", "geometry", "solver", "matvec", "output"}
_GEOMETRY_KEYS = {"lattice_dims", "edge", "species", "pattern", "spheres", "kappa0"}
_SOLVER_KEYS = {"method", "tol", "lmax", "x0"}
_MATVEC_KEYS = {"mode", "p", "d", "leaf_cap"}
_OUTPUT_KEYS = {"path", "solution_path"}


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} under '{where}'")


def _parse_geometry(geo: dict) -> Configuration:
    _reject_unknown(geo, _GEOMETRY_KEYS, "geometry")
    kappa0 = float(geo.get("kappa0", 1.0))
    if "spheres" in geo:
        if "lattice_dims" in geo:
            raise ConfigError("geometry: give either 'spheres' or a lattice recipe")
        spheres = []
        for i, s in enumerate(geo["spheres"]):
            try:
                spheres.append(Sphere(center=tuple(s["center"]),
                                      radius=float(s["radius"]),
                                      kappa=float(s["kappa"]),
                                      charge=float(s.get("charge", 0.0))))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"geometry.spheres[{i}]: {exc}") from exc
        return Configuration(spheres, kappa0=kappa0)
    try:
        nx, ny, nz = geo["lattice_dims"]
        species = [(float(s["radius"]), float(s["kappa"]),
                    float(s.get("charge", 0.0))) for s in geo["species"]]
        return build_lattice(int(nx), int(ny), int(nz), float(geo["edge"]),
                             species, kappa0=kappa0,
                             pattern=geo.get("pattern", "alternating"))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"geometry: missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc


def parse_config(path) -> ExperimentSpec:
    """Load and validate a YAML experiment description.

    Documented keys: ``kind``; ``geometry.{lattice_dims, edge, species[],
    pattern, kappa0}`` or ``geometry.spheres[]``; ``solver.{method, tol[],
    lmax, x0}``; ``matvec.{mode, p, d, leaf_cap}``; ``output.{path,
    solution_path}``.  Unknown keys are rejected.
    """
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "<root>")
    kind = raw.get("kind", "solve")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    spec = ExperimentSpec(kind=kind)
    if "geometry" in raw:
        spec.geometry = _parse_geometry(raw["geometry"])
    solver = raw.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    method = solver.get("method", "both")
    if method not in ("gmres", "cg", "both"):
        raise ConfigError(f"solver.method must be gmres|cg|both, got {method!r}")
    spec.solvers = ("gmres", "cg") if method == "both" else (method,)
    tol = solver.get("tol", [1e-8])
    spec.tolerances = tuple(float(t) for t in (tol if isinstance(tol, list) else [tol]))
    if not spec.tolerances:
        raise ConfigError("solver.tol must list at least one tolerance")
    spec.lmax = int(solver.get("lmax", 5))
    if solver.get("x0", "zero") != "zero":
        raise ConfigError("solver.x0: only 'zero' is supported")
    matvec = raw.get("matvec", {})
    _reject_unknown(matvec, _MATVEC_KEYS, "matvec")
    spec.mode = matvec.get("mode", "direct")
    if spec.mode not in ("direct", "hierarchical"):
        raise ConfigError(f"matvec.mode must be direct|hierarchical, got {spec.mode!r}")
    spec.p = matvec.get("p")
    spec.depth = matvec.get("d")
    spec.leaf_cap = matvec.get("leaf_cap")
    if spec.depth is not None and spec.leaf_cap is not None:
        raise ConfigError("matvec: 'd' and 'leaf_cap' are mutually exclusive")
    output = raw.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    spec.output_path = output.get("path", "results.csv")
    spec.solution_path = output.get("solution_path")
    return spec


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Inverse of :func:`parse_config` for round-trip checks."""
    out = {"kind": spec.kind,
           "solver": {"method": "both" if len(spec.solvers) == 2 else spec.solvers[0],
                      "tol": list(spec.tolerances), "lmax": spec.lmax,
                      "x0": "zero"},
           "matvec": {"mode": spec.mode},
           "output": {"path": spec.output_path}}
    if spec.p is not None:
        out["matvec"]["p"] = spec.p
    if spec.depth is not None:
        out["matvec"]["d"] = spec.depth
    if spec.leaf_cap is not None:
        out["matvec"]["leaf_cap"] = spec.leaf_cap
    if spec.solution_path:
        out["output"]["solution_path"] = spec.solution_path
    if spec.geometry is not None:
        cfg = spec.geometry
        out["geometry"] = {
            "kappa0": cfg.kappa0,
            "spheres": [{"center": list(s.center), "radius": s.radius,
                         "kappa": s.kappa, "charge": s.charge}
                        for s in cfg.spheres]}
    return out


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def emit_csv(rows, path) -> None:
    """Write result rows with the fixed header and deterministic order.

    Rows are sorted by (param ascending, solver name, tol descending); all
    columns except wall_time_s are reproducible across identical runs in
    direct mode.
    """
    rows = sorted(rows, key=lambda r: (r.param, r.solver, -r.tol))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([
                r.kind, f"{r.param:.10g}", r.solver, f"{r.tol:.10g}",
                r.iterations, f"{r.rel_error:.12e}", f"{r.rel_residual:.12e}",
                f"{r.wall_time_s:.6f}"])


# ---------------------------------------------------------------------------
# experiment dispatch
# ---------------------------------------------------------------------------

def _run_solve(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.geometry is None:
        raise ConfigError("kind 'solve' requires a geometry section")
    coupling = None
    if spec.mode == "hierarchical":
        p = spec.p if spec.p is not None else 2 * spec.lmax
        params = (FarFieldParams(p=p, depth=spec.depth)
                  if spec.depth is not None
                  else FarFieldParams(p=p, max_particles_per_leaf=spec.leaf_cap or 32))
        coupling = build_tree(spec.geometry, params)
    rows = []
    result = None
    for solver in spec.solvers:
        run = solve_gmres_strategy if solver == "gmres" else solve_cg_strategy
        for tol in spec.tolerances:
            result = run(spec.geometry, spec.lmax, tol=tol, coupling=coupling)
            rows.append(ResultRow(
                kind="solve", param=float(spec.geometry.nspheres),
                solver=solver, tol=tol, iterations=result.report.iterations,
                rel_error=float("nan"),
                rel_residual=result.report.residual_history[-1],
                wall_time_s=result.report.wall_time))
    if spec.solution_path and result is not None:
        save_coeff_vector(spec.solution_path, result.nu)
    return rows


_SWEEP_CELLS = {
    "sweep-n": (experiments.sweep_n, "sizes", (2, 3, 4, 5, 6)),
    "sweep-kappa": (experiments.sweep_kappa, "ratios", experiments.KAPPA_RATIO_GRID),
    "sweep-radii": (experiments.sweep_radii, "radii", experiments.RADIUS_GRID),
    "sweep-separation": (experiments.sweep_separation, "separations",
                         experiments.SEPARATION_GRID),
}


def _sweep_cell(kind, value, lmax, tolerances):
    func, key, _ = _SWEEP_CELLS[kind]
    return func(**{key: (value,)}, lmax=lmax, tolerances=tolerances)


def run(spec: ExperimentSpec) -> list[ResultRow]:
    """Execute an experiment spec and write its CSV; returns the rows."""
    if spec.kind == "solve":
        rows = _run_solve(spec)
    elif spec.kind in _SWEEP_CELLS:
        _, key, grid = _SWEEP_CELLS[spec.kind]
        if spec.parallel:
            with ProcessPoolExecutor(max_workers=2) as pool:
                parts = pool.map(_sweep_cell, [spec.kind] * len(grid), grid,
                                 [spec.lmax] * len(grid),
                                 [spec.tolerances] * len(grid))
                rows = [r for part in parts for r in part]
        else:
            rows = [r for v in grid
                    for r in _sweep_cell(spec.kind, v, spec.lmax, spec.tolerances)]
    elif spec.kind == "sweep-lmax":
        rows = experiments.sweep_lmax(tolerances=spec.tolerances)
    elif spec.kind == "fmm-study":
        rows = experiments.fmm_study(lmax=spec.lmax)
    elif spec.kind == "bench":
        rows = experiments.bench(lmax=spec.lmax,
                                 tol=min(spec.tolerances),
                                 leaf_cap=spec.leaf_cap or 32)
    else:
        raise ConfigError(f"unhandled kind {spec.kind!r}")
    emit_csv(rows, spec.output_path)
    return rows


# ---------------------------------------------------------------------------
# argparse front end
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="YAML experiment description")
    sub.add_argument("--output", help="CSV output path")
    sub.add_argument("--lmax", type=int, help="spherical-harmonic cutoff degree")
    sub.add_argument("--tol", type=float, action="append",
                     help="tolerance (repeatable)")
    sub.add_argument("--method", choices=["gmres", "cg", "both"])
    sub.add_argument("--mode", choices=["direct", "hierarchical"])
    sub.add_argument("--p", type=int, help="far-field expansion degree")
    sub.add_argument("--d", type=int, help="octree depth")
    sub.add_argument("--leaf-cap", type=int, help="max spheres per leaf")
    sub.add_argument("--parallel", action="store_true",
                     help="run independent sweep cells in worker processes")
    sub.add_argument("--seed", type=int, default=0,
                     help="reserved; all computations here are deterministic")


def _spec_from_args(args) -> ExperimentSpec:
    if args.config:
        spec = parse_config(args.config)
        spec.kind = args.kind       # the subcommand wins over the file
    else:
        spec = ExperimentSpec(kind=args.kind)
    if args.output:
        spec.output_path = args.output
    if args.lmax is not None:
        spec.lmax = args.lmax
    if args.tol:
        spec.tolerances = tuple(args.tol)
    if args.method:
        spec.solvers = ("gmres", "cg") if args.method == "both" else (args.method,)
    if args.mode:
        spec.mode = args.mode
    if args.p is not None:
        spec.p = args.p
    if args.d is not None:
        spec.depth = args.d
    if args.leaf_cap is not None:
        spec.leaf_cap = args.leaf_cap
    if args.d is not None and args.leaf_cap is not None:
        raise ConfigError("--d and --leaf-cap are mutually exclusive")
    spec.parallel = bool(args.parallel)
    return spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dielspheres",
        description="Polarisation solver and experiment drivers for "
                    "dielectric sphere ensembles")
    subs = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub = subs.add_parser(kind)
        _add_common(sub)
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
        rows = run(spec)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{len(rows)} result rows -> {spec.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
