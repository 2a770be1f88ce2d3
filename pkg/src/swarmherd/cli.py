"""Batch command line: feasibility, simulate, continuum, analyze, sweep.

Exit codes: 0 success, 2 infeasible configuration, 1 any other error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .continuum import verify_herder_convergence, verify_target_convergence
from .feasibility import (
    DeconvolutionOperator,
    InfeasibleError,
    feasibility_map,
    plan_herders,
    von_mises_density,
)
from .fileio import (
    write_decay,
    write_field,
    write_metrics,
    write_sweep_csv,
    write_trajectory,
    read_trajectory,
)
from .grids import ScalarField, mass
from .microsim import AgentEnsemble, containment, run
from .torus import PI


def _meta(config: ExperimentConfig, seed: int | None = None) -> dict:
    meta = {"config_sha256": config.hash(), "seed": config.sim.seed if seed is None else seed}
    return meta


def _plan(config: ExperimentConfig):
    return plan_herders(
        goal=config.goal.region(),
        n_targets=config.population.n_targets,
        diffusion=config.sim.diffusion,
        kernel=config.kernel.params(),
        deconv_grid=config.grids.deconvolution_grid(),
        control_grid=config.grids.control_grid(),
        cross_term=config.target_density.cross_term,
        n_herders=config.population.n_herders,
        concentration=config.target_density.concentration,
    )


def cmd_feasibility(config: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(config)
    summary: dict = {"config_sha256": config.hash()}
    code = 0
    try:
        plan = _plan(config)
    except InfeasibleError as exc:
        summary.update({"feasible": False, "min_mass": exc.min_mass})
        code = 2
    else:
        summary.update({
            "feasible": True,
            "min_mass": plan.min_mass,
            "n_herders": plan.n_herders,
            "n_targets": plan.n_targets,
            "target_mass": plan.target_mass,
            "herder_mass": plan.herder_mass,
            "offset": plan.offset,
            "deconvolution_residual": plan.residual,
            "curvature_sup_norm": plan.stability.sup_norm,
            "feedforward_rate": plan.stability.rate,
            "rate_certified": plan.stability.certified,
        })
        write_field(out / "rho_bar_T.field", plan.rho_bar_t, "density", meta)
        write_field(out / "rho_bar_H.field", plan.rho_bar_h, "density", meta)
        write_field(out / "v_bar_TH.field", plan.desired_velocity, "vector", meta)
        write_field(out / "deconvolution_H.field", plan.feasibility.deconvolved,
                    "scalar", meta)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return code


def cmd_simulate(config: ExperimentConfig, out: Path, seed: int | None = None,
                 arena_half_width: float | None = None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    effective_seed = config.sim.seed if seed is None else seed
    meta = _meta(config, effective_seed)
    try:
        plan = _plan(config)
    except InfeasibleError as exc:
        (out / "summary.json").write_text(json.dumps(
            {"feasible": False, "min_mass": exc.min_mass}, indent=2) + "\n")
        print(f"infeasible: minimal herder mass {exc.min_mass:.4f} >= 1",
              file=sys.stderr)
        return 2

    result = run(
        n_targets=plan.n_targets,
        n_herders=plan.n_herders,
        rho_bar_h=plan.rho_bar_h,
        goal=plan.goal,
        gain=config.gain,
        kernel=config.kernel.params(),
        kde=config.kde.params(),
        sim=config.sim.params(seed=effective_seed),
        metrics_every=config.output.metrics_every,
        snapshot_every=config.output.snapshot_every,
        kde_sequential=config.kde.sequential,
    )

    arena = arena_half_width if arena_half_width is not None \
        else config.domain.arena_half_width
    scale = (arena / PI) if arena else 1.0
    if arena:
        meta = dict(meta, arena_half_width=arena)
    write_metrics(out / "metrics.csv", result.metric_times, result.chi,
                  result.n_inside, result.herder_error_l2, meta)
    write_trajectory(out / "trajectory.csv", result.snapshots, meta, scale=scale)
    if config.output.fields:
        write_field(out / "rho_bar_H.field", plan.rho_bar_h, "density", meta,
                    arena_half_width=arena)
        write_field(out / "rho_bar_T.field", plan.rho_bar_t, "density", meta,
                    arena_half_width=arena)
    summary = {
        "config_sha256": config.hash(),
        "seed": effective_seed,
        "n_targets": plan.n_targets,
        "n_herders": plan.n_herders,
        "chi_final": float(result.chi[-1]),
        "n_inside_final": int(result.n_inside[-1]),
        "goal_radius": plan.goal.radius * scale,
        "wall_time_s": result.wall_time,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_continuum(config: ExperimentConfig, out: Path, mode: str,
                  perturbation: float = 0.01, horizon: float | None = None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(config)
    try:
        plan = _plan(config)
    except InfeasibleError as exc:
        print(f"infeasible: minimal herder mass {exc.min_mass:.4f} >= 1",
              file=sys.stderr)
        return 2
    grid = config.grids.control_grid()
    if mode == "herders":
        gain = config.gain
        x1 = grid.nodes()[..., 0]
        rho0 = ScalarField(grid, plan.rho_bar_h.values + perturbation * np.cos(x1))
        report = verify_herder_convergence(
            rho0, plan.rho_bar_h, gain,
            horizon=horizon if horizon is not None else 3.0 / gain,
        )
        write_decay(out / "herder_decay.csv", report.times,
                    {"error_l2": report.error_l2}, meta)
        summary = {
            "mode": "herders",
            "gain": gain,
            "fitted_rate": report.fitted_rate,
            "relative_deviation": report.relative_deviation,
            "mass_drift": report.mass_drift,
        }
    elif mode == "targets":
        rho_bar_t = plan.rho_bar_t
        uniform = np.full((grid.m, grid.m), plan.target_mass / (4 * PI * PI))
        from .grids import DensityField

        report = verify_target_convergence(
            DensityField(grid, uniform), rho_bar_t, config.sim.diffusion,
            horizon=horizon if horizon is not None else 20.0,
        )
        write_decay(out / "target_decay.csv", report.times,
                    {"error_sq": report.error_sq, "envelope": report.envelope}, meta)
        summary = {
            "mode": "targets",
            "curvature_sup_norm": report.stability.sup_norm,
            "feedforward_rate": report.stability.rate,
            "rate_certified": report.stability.certified,
            "bounded": report.bounded,
            "mass_drift": report.mass_drift,
        }
    else:
        print(f"unknown continuum mode {mode!r}", file=sys.stderr)
        return 1
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_analyze(config: ExperimentConfig, trajectory: Path, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    goal = config.goal.region()
    frames = read_trajectory(trajectory)
    if not frames:
        print("trajectory file holds no frames", file=sys.stderr)
        return 1
    rows = []
    for t, herders, targets in frames:
        if targets.size == 0:
            print(f"frame t={t}: no targets, containment undefined", file=sys.stderr)
            return 1
        metric = containment(AgentEnsemble(herders=herders, targets=targets), goal, t)
        rows.append((t, metric.chi, metric.n_inside))
    meta = _meta(config)
    with open(out / "chi.csv", "w") as fh:
        from .fileio import metadata_lines, FLOAT_FMT

        for line in metadata_lines(meta):
            fh.write(line + "\n")
        fh.write("t,chi,n_inside\n")
        for t, chi, n_in in rows:
            fh.write(f"{FLOAT_FMT % t},{FLOAT_FMT % chi},{n_in}\n")
    print(f"wrote {out / 'chi.csv'} ({len(rows)} frames)")
    return 0


def cmd_sweep(config: ExperimentConfig, out: Path, k_range: str, d_range: str) -> int:
    out.mkdir(parents=True, exist_ok=True)

    def parse_range(spec: str) -> np.ndarray:
        try:
            lo, hi, n = spec.split(":")
            return np.linspace(float(lo), float(hi), int(n))
        except ValueError as exc:
            raise ConfigError(f"bad range {spec!r}, expected lo:hi:n") from exc

    k_values = parse_range(k_range)
    d_values = parse_range(d_range)
    grid = config.grids.deconvolution_grid()
    kernel = config.kernel.params()
    operator = DeconvolutionOperator.build(grid, kernel)
    matrix = feasibility_map(k_values, d_values, kernel, grid, operator)
    write_sweep_csv(out / "feasibility_map.csv", k_values, d_values, matrix,
                    _meta(config))
    n_infeasible = int(np.count_nonzero(matrix >= 1.0))
    print(f"wrote {out / 'feasibility_map.csv'}; "
          f"{n_infeasible}/{matrix.size} cells infeasible")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmherd",
        description="Shepherding control of large swarms on a periodic domain",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: config output.directory)")

    p_feas = sub.add_parser("feasibility", help="herder mass / count analysis")
    add_common(p_feas)

    p_sim = sub.add_parser("simulate", help="closed-loop microscopic run")
    add_common(p_sim)
    p_sim.add_argument("--seed", type=int, default=None, help="override config seed")
    p_sim.add_argument("--rescale-arena", type=float, default=None, metavar="W",
                       help="write positions scaled to the arena [-W, W]^2")

    p_cont = sub.add_parser("continuum", help="density-twin convergence checks")
    add_common(p_cont)
    p_cont.add_argument("--mode", choices=("herders", "targets"), default="herders")
    p_cont.add_argument("--horizon", type=float, default=None)
    p_cont.add_argument("--perturbation", type=float, default=0.01)

    p_an = sub.add_parser("analyze", help="recompute containment from a trajectory")
    add_common(p_an)
    p_an.add_argument("--trajectory", type=Path, required=True)

    p_sw = sub.add_parser("sweep", help="minimum-mass map over (k, D)")
    add_common(p_sw)
    p_sw.add_argument("--k-range", default="0.5:6:8", help="lo:hi:n")
    p_sw.add_argument("--d-range", default="0.005:0.1:8", help="lo:hi:n")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = (ExperimentConfig.load(args.config) if args.config
                  else ExperimentConfig())
        out = args.out if args.out is not None else Path(config.output.directory)
        t0 = time.perf_counter()
        if args.command == "feasibility":
            code = cmd_feasibility(config, out)
        elif args.command == "simulate":
            code = cmd_simulate(config, out, seed=args.seed,
                                arena_half_width=args.rescale_arena)
        elif args.command == "continuum":
            code = cmd_continuum(config, out, args.mode,
                                 perturbation=args.perturbation,
                                 horizon=args.horizon)
        elif args.command == "analyze":
            code = cmd_analyze(config, args.trajectory, out)
        elif args.command == "sweep":
            code = cmd_sweep(config, out, args.k_range, args.d_range)
        else:  # pragma: no cover - argparse enforces choices
            code = 1
        if code == 0:
            print(f"[{args.command}] done in {time.perf_counter() - t0:.1f} s",
                  file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
