"""Command line driver: presets, config files, optimization runs and sweeps.

A run couples the pieces of the library into the optimization loop: fit the
network to a seeded hole pattern, then alternate finite element analysis,
velocity construction, parameter ODE integration, reinitialization and
multiplier updates until the compliance history flattens at the target
volume.

Configs are plain sectioned key = value files.  Every run writes its fully
resolved config next to its outputs, so any result directory can be checked
later with the `recompute` command.
"""

from __future__ import annotations

import argparse
import logging
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import evolution as ev
from . import fem
from . import geometry as geo
from . import network as net

log = logging.getLogger(__name__)

PRESETS = ("mbb", "cantilever")
SOLVERS = ("direct", "pcg", "dense")

# width times depth grid used by the architecture sweep
SWEEP_ARCHITECTURES = (
    (5,), (10,), (15,),
    (5, 5), (10, 10), (15, 15),
    (5, 5, 5), (10, 10, 10), (15, 15, 15),
)


class ConfigError(ValueError):
    """Raised for malformed config files or override strings."""


# ------------------------------------------------------------------ run config


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one optimization run.

    Geometry fields describe the physical problem; `symmetry` halves the
    beam to its left portion with a mirror condition (only meaningful for
    the beam preset).  The numeric fields feed the per-module configs built
    by `build_problem`.
    """

    preset: str
    nx: int
    ny: int
    volume_target: float
    architecture: tuple[int, ...]
    seed: int
    max_iterations: int
    symmetry: bool
    solver: str
    multiplier_mode: str
    multiplier_value: float
    multiplier_gamma: float
    tau: float
    ode_abs_tol: float
    ode_rel_tol: float
    reinit_every: int
    reinit_steps: int
    stop_window: int
    stop_tol: float
    stop_volume_tol: float
    fit_iterations: int
    fit_step_size: float

    def __post_init__(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}, expected one of {PRESETS}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.multiplier_mode not in ("fixed", "augmented"):
            raise ConfigError(f"unknown multiplier mode {self.multiplier_mode!r}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("nx and ny must be positive element counts")
        if not 0.0 < self.volume_target < 1.0:
            raise ConfigError("volume_target must lie strictly between 0 and 1")
        if not self.architecture or any(w < 1 for w in self.architecture):
            raise ConfigError("architecture needs at least one positive width")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.stop_window < 2:
            raise ConfigError("stopping window must span at least two iterations")


def preset_config(name: str) -> RunConfig:
    """Baseline config for a named benchmark problem."""
    common = dict(
        volume_target=0.4,
        architecture=(8, 8),
        seed=0,
        max_iterations=300,
        solver="direct",
        multiplier_mode="augmented",
        multiplier_gamma=2.0,
        tau=3e-3,
        ode_abs_tol=1e-8,
        ode_rel_tol=1e-6,
        reinit_every=1,
        reinit_steps=5,
        stop_window=10,
        stop_tol=2e-3,
        stop_volume_tol=0.0075,
        fit_iterations=2000,
        fit_step_size=1e-2,
    )
    if name == "mbb":
        return RunConfig(
            preset="mbb", nx=200, ny=100, symmetry=True, multiplier_value=5.0, **common
        )
    if name == "cantilever":
        return RunConfig(
            preset="cantilever", nx=100, ny=100, symmetry=False, multiplier_value=3.0, **common
        )
    raise ConfigError(f"unknown preset {name!r}, expected one of {PRESETS}")


# ------------------------------------------------------------------ config files


def _parse_arch(text: str) -> tuple[int, ...]:
    parts = text.split()
    if not parts:
        raise ValueError("architecture needs at least one width")
    widths = tuple(int(p) for p in parts)
    if any(w < 1 for w in widths):
        raise ValueError("widths must be positive")
    return widths


def _parse_bool(text: str) -> bool:
    if text in ("on", "true", "1"):
        return True
    if text in ("off", "false", "0"):
        return False
    raise ValueError(f"expected on or off, got {text!r}")


def _fmt_float(v) -> str:
    return repr(float(v))


def _fmt_arch(v) -> str:
    return " ".join(str(w) for w in v)


def _fmt_bool(v) -> str:
    return "on" if v else "off"


# (section, key) -> (config field, parser, formatter); kept in file order
_SCHEMA = {
    ("problem", "preset"): ("preset", str, str),
    ("problem", "nx"): ("nx", int, str),
    ("problem", "ny"): ("ny", int, str),
    ("problem", "volume_target"): ("volume_target", float, _fmt_float),
    ("problem", "architecture"): ("architecture", _parse_arch, _fmt_arch),
    ("problem", "seed"): ("seed", int, str),
    ("problem", "max_iterations"): ("max_iterations", int, str),
    ("problem", "symmetry"): ("symmetry", _parse_bool, _fmt_bool),
    ("problem", "solver"): ("solver", str, str),
    ("multiplier", "mode"): ("multiplier_mode", str, str),
    ("multiplier", "value"): ("multiplier_value", float, _fmt_float),
    ("multiplier", "gamma"): ("multiplier_gamma", float, _fmt_float),
    ("ode", "tau"): ("tau", float, _fmt_float),
    ("ode", "abs_tol"): ("ode_abs_tol", float, _fmt_float),
    ("ode", "rel_tol"): ("ode_rel_tol", float, _fmt_float),
    ("reinit", "every"): ("reinit_every", int, str),
    ("reinit", "steps"): ("reinit_steps", int, str),
    ("stopping", "window"): ("stop_window", int, str),
    ("stopping", "tol"): ("stop_tol", float, _fmt_float),
    ("stopping", "volume_tol"): ("stop_volume_tol", float, _fmt_float),
    ("fit", "iterations"): ("fit_iterations", int, str),
    ("fit", "step_size"): ("fit_step_size", float, _fmt_float),
}
_SECTIONS = tuple(dict.fromkeys(section for section, _ in _SCHEMA))


def parse_config(text: str) -> RunConfig:
    """Read a sectioned key = value config into a RunConfig.

    The preset provides defaults; every other key overrides one field.
    Unknown sections, unknown keys, duplicates and type errors all report
    the offending line number.
    """
    values: dict[str, object] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        entry = _SCHEMA.get((section, key.strip()))
        if entry is None:
            raise ConfigError(f"line {lineno}: unknown key {key.strip()!r} in [{section}]")
        field_name, parse, _ = entry
        if field_name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key.strip()!r}")
        try:
            values[field_name] = parse(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key.strip()!r}: {exc}") from None
    if "preset" not in values:
        raise ConfigError("config must set preset in [problem]")
    base = preset_config(values.pop("preset"))
    return replace(base, **values)


def write_config(cfg: RunConfig) -> str:
    """Render every field in section order; parse_config inverts this."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for (sec, key), (field_name, _, fmt) in _SCHEMA.items():
            if sec == section:
                lines.append(f"{key} = {fmt(getattr(cfg, field_name))}")
        lines.append("")
    return "\n".join(lines)


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply `section.key=value` strings on top of a config."""
    for pair in pairs:
        dotted, eq, val = pair.partition("=")
        sec, dot, key = dotted.strip().partition(".")
        if not eq or not dot:
            raise ConfigError(f"override must look like section.key=value, got {pair!r}")
        entry = _SCHEMA.get((sec.strip(), key.strip()))
        if entry is None:
            raise ConfigError(f"unknown override target {dotted.strip()!r}")
        field_name, parse, _ = entry
        try:
            cfg = replace(cfg, **{field_name: parse(val.strip())})
        except ValueError as exc:
            raise ConfigError(f"bad override value in {pair!r}: {exc}") from None
    return cfg


# ------------------------------------------------------------------ problem assembly


@dataclass(frozen=True)
class Problem:
    """Concrete objects for one run, derived from a RunConfig."""

    grid: geo.Grid
    bcs: fem.BoundaryConditions
    material: fem.MaterialModel
    heaviside: geo.HeavisideParams
    ode: ev.OdeConfig
    reinit: ev.ReinitConfig
    scheme: ev.MultiplierScheme
    fit: geo.FitConfig
    seeds: geo.HoleSeedPattern
    arch: net.NetworkArchitecture


def _mbb_half_bcs(grid: geo.Grid) -> fem.BoundaryConditions:
    # left edge is the mirror plane: no normal displacement; the full point
    # load sits on that plane so the mirrored whole carries twice the load
    fixed = {(grid.node_id(0, j), 0) for j in range(grid.ny + 1)}
    fixed.add((grid.node_id(grid.nx, 0), 1))
    load = (grid.node_id(0, grid.ny), 1, -1.0)
    return fem.BoundaryConditions(frozenset(fixed), (load,))


def _mbb_full_bcs(grid: geo.Grid) -> fem.BoundaryConditions:
    corner = grid.node_id(0, 0)
    fixed = {(corner, 0), (corner, 1), (grid.node_id(grid.nx, 0), 1)}
    load = (grid.node_id(grid.nx // 2, grid.ny), 1, -1.0)
    return fem.BoundaryConditions(frozenset(fixed), (load,))


def _cantilever_bcs(grid: geo.Grid) -> fem.BoundaryConditions:
    fixed = {(grid.node_id(0, j), d) for j in range(grid.ny + 1) for d in (0, 1)}
    load = (grid.node_id(grid.nx, grid.ny // 2), 1, -1.0)
    return fem.BoundaryConditions(frozenset(fixed), (load,))


def build_problem(cfg: RunConfig) -> Problem:
    """Derive grid, boundary conditions and scaled numeric configs.

    Lengths inside the level set modules live in the network input frame;
    one grid cell spans h * norm_scale input units, and the Heaviside band,
    reinitialization steps and fit target are all expressed in that unit.
    """
    if cfg.preset == "mbb" and cfg.symmetry:
        if cfg.nx % 2:
            raise ConfigError("the symmetric half model needs an even nx")
        grid = geo.Grid(cfg.nx // 2, cfg.ny)
        bcs = _mbb_half_bcs(grid)
    elif cfg.preset == "mbb":
        grid = geo.Grid(cfg.nx, cfg.ny)
        bcs = _mbb_full_bcs(grid)
    else:
        grid = geo.Grid(cfg.nx, cfg.ny)
        bcs = _cantilever_bcs(grid)

    cell = grid.h * grid.norm_scale
    return Problem(
        grid=grid,
        bcs=bcs,
        material=fem.MaterialModel(),
        heaviside=geo.HeavisideParams(half_width=2 * cell),
        ode=ev.OdeConfig(tau=cfg.tau, abs_tol=cfg.ode_abs_tol, rel_tol=cfg.ode_rel_tol),
        reinit=ev.ReinitConfig(
            every_n_iterations=cfg.reinit_every,
            pseudo_steps=cfg.reinit_steps,
            step_size=0.5 * cell,
            sign_smoothing_eps=cell,
        ),
        scheme=ev.MultiplierScheme(
            mode=cfg.multiplier_mode,
            fixed_value=cfg.multiplier_value,
            gamma=cfg.multiplier_gamma,
        ),
        fit=geo.FitConfig(
            iterations=cfg.fit_iterations,
            step_size=cfg.fit_step_size,
            target_scale=grid.norm_scale,
            clamp_limit=6 * cell,
        ),
        seeds=geo.default_hole_lattice(grid),
        arch=net.NetworkArchitecture(cfg.architecture),
    )


# ------------------------------------------------------------------ optimization run


@dataclass
class RunResult:
    status: str  # converged | max-iterations | failed
    iterations: int
    compliance: float
    volume_fraction: float
    wall_time: float
    out_dir: Path
    message: str = ""


def _csv_row(i, comp, vol, lam, substeps, residual) -> str:
    return f"{i},{comp:.12e},{vol:.12e},{lam:.12e},{substeps},{residual:.6e}\n"


def _write_summary(path: Path, cfg: RunConfig, result: RunResult, lam: float) -> None:
    lines = [
        f"preset: {cfg.preset}",
        f"architecture: [{_fmt_arch(cfg.architecture)}]",
        f"status: {result.status}",
        f"iterations: {result.iterations}",
        f"compliance: {result.compliance:.12e}",
        f"volume_fraction: {result.volume_fraction:.12e}",
        f"multiplier: {lam:.12e}",
        f"wall_time_seconds: {result.wall_time:.1f}",
    ]
    if result.message:
        lines.append(f"message: {result.message}")
    path.write_text("\n".join(lines) + "\n")


def read_summary(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text().splitlines():
        key, sep, val = line.partition(":")
        if sep:
            out[key.strip()] = val.strip()
    return out


def _save_design(out: Path, problem: Problem, theta: net.ParameterVector, phi: geo.ScalarField) -> None:
    net.save_checkpoint(theta, out / "theta.ckpt")
    density = geo.ScalarField(problem.grid, geo.heaviside(phi.values, problem.heaviside))
    geo.write_vtk(out / "phi.vtk", {"phi": phi, "density": density})
    geo.write_pgm(out / "density.pgm", density.as_2d())


def optimize(cfg: RunConfig, out_dir: Path, snapshot_every: int = 10) -> RunResult:
    """Run the optimization loop, leaving all artifacts in `out_dir`.

    Each iteration evaluates the current design (analysis, compliance,
    volume), appends to history.csv, refreshes the checkpoint, and then
    advances the parameters unless the stopping test fired.  On failure the
    artifacts of the last evaluated design remain in place.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(write_config(cfg))
    problem = build_problem(cfg)
    grid = problem.grid
    pts = grid.normalized_node_coords()
    t0 = time.perf_counter()

    status, message = "failed", ""
    comp = vol = float("nan")
    iterations = 0
    state = None
    try:
        target = geo.seed_field(problem.seeds, grid)
        theta = geo.fit_network(problem.arch, cfg.seed, target, problem.fit)
        state = ev.OptimizationState(theta=theta, lam=cfg.multiplier_value)

        with open(out / "history.csv", "w") as hist:
            hist.write("iteration,compliance,volume_fraction,lambda,ode_substeps,reinit_residual\n")
            status = "max-iterations"
            for i in range(cfg.max_iterations):
                phi = geo.ScalarField(grid, net.forward(state.theta, pts))
                moduli = fem.interpolate_modulus(phi, problem.heaviside, problem.material)
                u = fem.assemble_and_solve(
                    grid, moduli, problem.bcs, problem.material, solver=cfg.solver
                )
                comp = fem.compliance(u, problem.bcs)
                vol = geo.volume_fraction(phi, problem.heaviside)
                iterations = i + 1
                state.history.append((comp, vol))
                hist.write(
                    _csv_row(i, comp, vol, state.lam, state.last_ode_substeps, state.last_reinit_residual)
                )
                hist.flush()
                log.info(
                    "iter %3d  compliance %10.4f  volume %.4f  multiplier %8.4f",
                    i, comp, vol, state.lam,
                )
                _save_design(out, problem, state.theta, phi)
                if snapshot_every and i % snapshot_every == 0:
                    density = geo.heaviside(phi.values, problem.heaviside)
                    geo.write_pgm(out / f"density_{i:04d}.pgm", density.reshape(grid.ny + 1, grid.nx + 1))
                if ev.check_convergence(
                    state.history, cfg.stop_window, cfg.stop_tol, cfg.volume_target, cfg.stop_volume_tol
                ):
                    status = "converged"
                    break

                energy = fem.strain_energy_density(grid, u, problem.material)
                velocity = ev.normal_velocity(energy, state.lam)
                state = ev.advance_design(state, velocity, problem.ode)
                if state.iteration % problem.reinit.every_n_iterations == 0:
                    state = ev.reinitialize(state, problem.reinit, grid, problem.heaviside.half_width)
                state.lam = ev.update_multiplier(state, cfg.volume_target, problem.scheme, vol)
    except (fem.SolverError, fem.SingularSystemError, ev.StiffnessError, geo.FitDivergence) as exc:
        status, message = "failed", str(exc)
        log.error("run aborted: %s", exc)

    result = RunResult(
        status=status,
        iterations=iterations,
        compliance=comp,
        volume_fraction=vol,
        wall_time=time.perf_counter() - t0,
        out_dir=out,
        message=message,
    )
    _write_summary(out / "summary.txt", cfg, result, state.lam if state else float("nan"))
    log.info("%s after %d iterations (%.1f s)", status, iterations, result.wall_time)
    return result


# ------------------------------------------------------------------ sweep


def _arch_dir_name(widths: tuple[int, ...]) -> str:
    return "arch_" + "_".join(str(w) for w in widths)


def _sweep_worker(payload) -> tuple[str, RunResult]:
    cfg, out_dir = payload
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return _arch_dir_name(cfg.architecture), optimize(cfg, out_dir)


def sweep(
    base: RunConfig,
    architectures: tuple[tuple[int, ...], ...],
    out_root: Path,
    workers: int = 1,
) -> list[tuple[str, RunResult]]:
    """Run the same problem once per architecture.

    With more than one worker, runs execute in spawned processes; BLAS
    threading is pinned to one thread per process so workers do not fight
    over cores.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = [
        (replace(base, architecture=widths), out_root / _arch_dir_name(widths))
        for widths in architectures
    ]
    if workers <= 1:
        results = [_sweep_worker(job) for job in jobs]
    else:
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_sweep_worker, jobs))

    with open(out_root / "sweep_summary.csv", "w") as fh:
        fh.write("architecture,status,iterations,compliance,volume_fraction\n")
        for name, res in results:
            fh.write(
                f"{name},{res.status},{res.iterations},"
                f"{res.compliance:.12e},{res.volume_fraction:.12e}\n"
            )
    return results


# ------------------------------------------------------------------ recompute


def recompute(run_dir: Path, rel_tol: float = 1e-9) -> bool:
    """Re-evaluate a finished run's design and compare against its summary.

    Rebuilds the problem from the stored config, analyses the checkpointed
    parameters once, and checks compliance and volume fraction against the
    recorded values to `rel_tol` relative difference.
    """
    run_dir = Path(run_dir)
    cfg = parse_config((run_dir / "config.cfg").read_text())
    problem = build_problem(cfg)
    theta = net.load_checkpoint(run_dir / "theta.ckpt")
    if theta.arch != problem.arch:
        raise ConfigError(
            f"checkpoint architecture {theta.arch} does not match config {problem.arch}"
        )
    pts = problem.grid.normalized_node_coords()
    phi = geo.ScalarField(problem.grid, net.forward(theta, pts))
    moduli = fem.interpolate_modulus(phi, problem.heaviside, problem.material)
    u = fem.assemble_and_solve(problem.grid, moduli, problem.bcs, problem.material, solver=cfg.solver)
    comp = fem.compliance(u, problem.bcs)
    vol = geo.volume_fraction(phi, problem.heaviside)

    summary = read_summary(run_dir / "summary.txt")
    stored_comp = float(summary["compliance"])
    stored_vol = float(summary["volume_fraction"])
    ok = True
    for label, stored, fresh in (
        ("compliance", stored_comp, comp),
        ("volume_fraction", stored_vol, vol),
    ):
        diff = abs(fresh - stored) / max(abs(stored), 1e-300)
        ok = ok and diff <= rel_tol
        print(f"{label}: stored {stored:.12e}  recomputed {fresh:.12e}  rel diff {diff:.3e}")
    print(f"recompute: {'MATCH' if ok else 'MISMATCH'} (tolerance {rel_tol:g})")
    return ok


# ------------------------------------------------------------------ fit


def fit_seed_design(cfg: RunConfig, out_dir: Path) -> float:
    """Fit the network to the preset's hole pattern and store the result.

    Returns the solid-mask overlap between the fitted field and the target,
    a quick fidelity check for architecture or budget choices.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(write_config(cfg))
    problem = build_problem(cfg)
    target = geo.seed_field(problem.seeds, problem.grid)
    theta = geo.fit_network(problem.arch, cfg.seed, target, problem.fit)
    phi = geo.ScalarField(problem.grid, net.forward(theta, problem.grid.normalized_node_coords()))
    _save_design(out, problem, theta, phi)
    iou = geo.zero_level_iou(phi, target)
    print(f"fit overlap (solid mask IoU): {iou:.4f}")
    return iou


# ------------------------------------------------------------------ entry point


def _resolve_config(args) -> RunConfig:
    if args.config is not None:
        cfg = parse_config(Path(args.config).read_text())
    elif args.preset is not None:
        cfg = preset_config(args.preset)
    else:
        raise ConfigError("choose a --preset or provide a --config file")
    return apply_overrides(cfg, args.overrides)


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deeplevelset",
        description="Topology optimization with a neural network level set function.",
    )
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--preset", choices=PRESETS, help="start from a benchmark preset")
        p.add_argument("--config", type=Path, help="read settings from a config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="SECTION.KEY=VALUE", help="override one setting (repeatable)",
        )
        p.add_argument("--out", type=Path, required=True, help="output directory")

    run_p = sub.add_parser("run", help="optimize one design")
    add_config_args(run_p)

    sweep_p = sub.add_parser("sweep", help="repeat a run across architectures")
    add_config_args(sweep_p)
    sweep_p.add_argument(
        "--arch", dest="archs", action="append", default=[], metavar="WIDTHS",
        help="architecture like '10 10' (repeatable; default: 3x3 width/depth grid)",
    )
    sweep_p.add_argument(
        "--workers", type=int,
        default=int(os.environ.get("DEEPLEVELSET_WORKERS", "1")),
        help="parallel processes (default from DEEPLEVELSET_WORKERS, else 1)",
    )

    fit_p = sub.add_parser("fit", help="only fit the network to the seed pattern")
    add_config_args(fit_p)

    rec_p = sub.add_parser("recompute", help="verify a finished run directory")
    rec_p.add_argument("run_dir", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            result = optimize(_resolve_config(args), args.out)
            print(
                f"{result.status}: compliance {result.compliance:.4f}, "
                f"volume {result.volume_fraction:.4f} after {result.iterations} iterations"
            )
            return {"converged": 0, "max-iterations": 2}.get(result.status, 1)
        if args.command == "sweep":
            archs = tuple(_parse_arch(a) for a in args.archs) or SWEEP_ARCHITECTURES
            results = sweep(_resolve_config(args), archs, args.out, workers=args.workers)
            for name, res in results:
                print(f"{name}: {res.status}, compliance {res.compliance:.4f}, volume {res.volume_fraction:.4f}")
            statuses = {res.status for _, res in results}
            if "failed" in statuses:
                return 1
            return 2 if "max-iterations" in statuses else 0
        if args.command == "fit":
            fit_seed_design(_resolve_config(args), args.out)
            return 0
        if args.command == "recompute":
            return 0 if recompute(args.run_dir) else 1
    except (ConfigError, OSError, net.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
