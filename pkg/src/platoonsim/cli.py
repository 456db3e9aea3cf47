"""Command-line front end: run, tune, sweep, and grid workflows.

Every command reads a scenario config (bundled preset name or file path),
applies `--set section.key=value` overrides, and writes CSV artifacts into
the output directory. Exit codes: 0 success, 1 config error, 2 numerical
failure, 3 safety violation under --strict-safety.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from .controller import beta_upper_bound
from .errors import ConfigError, DomainError, NumericalBlowupError, OptimizeError
from .metrics import (
    default_fuel_coefficients,
    load_fuel_coefficients,
    log_fuel_exponents,
    summarize,
    write_metrics_csv,
)
from .optimizer import optimize, write_trace_csv
from .simulator import PlatoonEngine, check_safety, place_avs, simulate, write_trajectory_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_SAFETY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonsim",
        description="Simulate mixed platoons and tune traffic-smoothing AV gains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument(
            "--scenario",
            required=True,
            help="config file path or bundled preset "
            f"({', '.join(cfgmod.preset_names())})",
        )
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="config override, repeatable",
        )
        p.add_argument("--controller", choices=("ts-ops", "ts-trc", "none"))
        p.add_argument("--dt", type=float)
        p.add_argument("--integrator", choices=("rk4", "euler"))
        p.add_argument(
            "--dump-config", metavar="PATH", help="write the effective config"
        )

    p_run = sub.add_parser("run", help="simulate one scenario")
    add_common(p_run)
    p_run.add_argument(
        "--strict-safety",
        action="store_true",
        help="exit 3 if any spacing drops below the safe minimum",
    )

    p_tune = sub.add_parser("tune", help="optimize the ts-ops controller gains")
    add_common(p_tune)

    p_sweep = sub.add_parser("sweep", help="metrics across AV penetration rates")
    add_common(p_sweep)
    p_sweep.add_argument(
        "--mprs",
        default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
        help="comma-separated penetration rates",
    )
    p_sweep.add_argument(
        "--tune-first",
        action="store_true",
        help="re-tune the ts-ops gains at every penetration rate",
    )

    p_grid = sub.add_parser("grid", help="metrics over a beta/gamma grid")
    add_common(p_grid)
    p_grid.add_argument("--beta-range", required=True, metavar="LO:HI:N")
    p_grid.add_argument("--gamma-range", required=True, metavar="LO:HI:N")

    return parser


def _prepare(args):
    cp = cfgmod.load_config(args.scenario)
    cfgmod.apply_overrides(cp, args.overrides)
    if args.controller:
        cfgmod.apply_overrides(cp, [f"controller.kind={args.controller}"])
    if args.dt is not None:
        cfgmod.apply_overrides(cp, [f"scenario.dt={args.dt}"])
    if args.integrator:
        cfgmod.apply_overrides(cp, [f"scenario.integrator={args.integrator}"])
    scenario = cfgmod.build_scenario(cp)
    if args.dump_config:
        cfgmod.dump_config(cp, args.dump_config)
    os.makedirs(args.out, exist_ok=True)
    return cp, scenario


def _fuel_coeffs(cp):
    path = None
    if cp.has_option("metrics", "fuel_coefficients"):
        path = cp.get("metrics", "fuel_coefficients")
    return load_fuel_coefficients(path) if path else default_fuel_coefficients()


def cmd_run(args) -> int:
    cp, scenario = _prepare(args)
    coeffs = _fuel_coeffs(cp)
    traj = simulate(scenario)
    violations = check_safety(traj, scenario.min_safe_spacing)
    report = summarize(traj, scenario, coeffs)

    write_trajectory_csv(traj, os.path.join(args.out, "trajectory.csv"))
    write_metrics_csv(report, os.path.join(args.out, "metrics.csv"))
    with open(os.path.join(args.out, "safety.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "vehicle", "spacing"])
        for v in violations:
            writer.writerow([f"{v.time:.6f}", v.vehicle, f"{v.spacing:.6f}"])

    print(
        f"platoon ASV {report.platoon_asv:.4f} m/s, "
        f"platoon FC {report.platoon_fc:.2f} ml, "
        f"safety violations: {len(violations)}"
    )
    if report.saturated:
        print("warning: fuel-rate saturation encountered", file=sys.stderr)
    if violations and args.strict_safety:
        return EXIT_SAFETY
    return EXIT_OK


def cmd_tune(args) -> int:
    cp, scenario = _prepare(args)
    if not scenario.av_indices:
        raise ConfigError("no AV to tune: scenario has zero penetration")
    ocfg = cfgmod.build_optimizer_config(cp, scenario)
    theta, trace = optimize(scenario, ocfg)
    write_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    with open(os.path.join(args.out, "theta_opt.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "gamma", "J"])
        writer.writerow(
            [
                f"{theta.beta:.6g}",
                f"{theta.gamma:.6g}",
                f"{trace.objectives[trace.best_index]:.6g}",
            ]
        )
    print(
        f"converged gains: beta={theta.beta:.4f} gamma={theta.gamma:.4f} "
        f"(J={trace.objectives[trace.best_index]:.6f}, "
        f"{len(trace)} iterations, {trace.reason})"
    )
    return EXIT_OK


def _platoon_metrics_batch(scenario, raw, coeffs):
    """Platoon-mean ASV and FC per batch lane from raw engine arrays."""
    t = raw["t"]
    t1, t2 = scenario.metric_window
    mask = (t >= t1 - 1e-9) & (t <= t2 + 1e-9)
    tm = t[mask]
    v_fol = raw["v"][mask][..., 1:]
    a_fol = raw["a"][mask]
    asv_veh = np.trapezoid(np.abs(v_fol - scenario.v_star), tm, axis=0) / (t2 - t1)
    expo = log_fuel_exponents(v_fol, a_fol, coeffs)
    fc_veh = np.trapezoid(np.exp(np.minimum(expo, 80.0)) * 1e3, tm, axis=0)
    return asv_veh.mean(axis=-1), fc_veh.mean(axis=-1)


def cmd_sweep(args) -> int:
    cp, scenario = _prepare(args)
    coeffs = _fuel_coeffs(cp)
    try:
        mprs = [float(tok) for tok in args.mprs.split(",") if tok.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --mprs list: {err}") from err
    if any(not 0.0 <= m <= 1.0 for m in mprs):
        raise ConfigError("--mprs values must lie in [0, 1]")

    base = replace(scenario, mpr=0.0)
    raw0 = PlatoonEngine(base).run(record=("v", "a"))
    asv0, fc0 = _platoon_metrics_batch(base, raw0, coeffs)

    rows = []
    failures = 0
    for mpr in mprs:
        point = replace(scenario, mpr=mpr)
        try:
            if args.tune_first and point.av_indices:
                ocfg = cfgmod.build_optimizer_config(cp, point)
                theta, _ = optimize(point, ocfg)
                point = replace(
                    point,
                    controller=replace(
                        point.controller, beta=theta.beta, gamma=theta.gamma
                    ),
                )
            raw = PlatoonEngine(point).run(record=("v", "a"))
            asv_m, fc_m = _platoon_metrics_batch(point, raw, coeffs)
            rows.append(
                (
                    mpr,
                    float(asv_m),
                    float(fc_m),
                    100.0 * (1.0 - asv_m / asv0),
                    100.0 * (1.0 - fc_m / fc0),
                )
            )
        except (NumericalBlowupError, OptimizeError) as err:
            print(f"mpr={mpr}: {err}", file=sys.stderr)
            rows.append((mpr, float("nan"),) + (float("nan"),) * 3)
            failures += 1

    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mpr", "asv", "fc", "asv_impr_pct", "fc_impr_pct"])
        for row in rows:
            writer.writerow([f"{row[0]:.3f}"] + [f"{val:.6f}" for val in row[1:]])
    for row in rows:
        print(
            f"mpr={row[0]:.2f} asv={row[1]:.4f} fc={row[2]:.2f} "
            f"asv_impr={row[3]:.2f}% fc_impr={row[4]:.2f}%"
        )
    return EXIT_NUMERICAL if failures else EXIT_OK


def _parse_range(raw: str) -> np.ndarray:
    try:
        lo, hi, n = raw.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as err:
        raise ConfigError(f"bad range {raw!r}, expected LO:HI:N") from err
    if n < 1 or hi < lo:
        raise ConfigError(f"bad range {raw!r}: need HI >= LO and N >= 1")
    return np.linspace(lo, hi, n)


def cmd_grid(args) -> int:
    cp, scenario = _prepare(args)
    coeffs = _fuel_coeffs(cp)
    betas = _parse_range(args.beta_range)
    gammas = _parse_range(args.gamma_range)
    bound = beta_upper_bound(
        scenario.envelope_s0_effective(),
        scenario.min_safe_spacing,
        scenario.t_f,
    )
    # small relative slack so ranges quoted at display precision (e.g. the
    # bound rounded to three significant figures) are not rejected
    if betas.min() < 0 or betas.max() > bound * (1 + 1e-4) + 1e-12:
        raise ConfigError(
            f"beta range [{betas.min()}, {betas.max()}] leaves the feasible "
            f"interval [0, {bound:.6g}]"
        )
    if gammas.min() < 0:
        raise ConfigError("gamma range must be non-negative")

    bb, gg = np.meshgrid(betas, gammas, indexing="ij")
    flat_b, flat_g = bb.ravel(), gg.ravel()
    asv_vals = np.empty(flat_b.size)
    fc_vals = np.empty(flat_b.size)
    chunk = 64  # lanes integrated together; bounds the recording memory
    for start in range(0, flat_b.size, chunk):
        sl = slice(start, min(start + chunk, flat_b.size))
        engine = PlatoonEngine(
            scenario,
            beta=flat_b[sl],
            gamma=flat_g[sl],
            av_mask=np.broadcast_to(
                _mask_for(scenario), (sl.stop - sl.start, scenario.n_followers)
            ),
        )
        raw = engine.run(record=("v", "a"))
        asv_vals[sl], fc_vals[sl] = _platoon_metrics_batch(scenario, raw, coeffs)

    with open(os.path.join(args.out, "grid.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "gamma", "asv", "fc"])
        for b, g, a_val, f_val in zip(flat_b, flat_g, asv_vals, fc_vals):
            writer.writerow(
                [f"{b:.6g}", f"{g:.6g}", f"{a_val:.6f}", f"{f_val:.6f}"]
            )
    print(f"grid of {flat_b.size} points written to grid.csv")
    return EXIT_OK


def _mask_for(scenario) -> np.ndarray:
    mask = np.zeros(scenario.n_followers, dtype=bool)
    for i in place_avs(scenario.n_followers, scenario.mpr):
        mask[i - 1] = True
    return mask


_COMMANDS = {
    "run": cmd_run,
    "tune": cmd_tune,
    "sweep": cmd_sweep,
    "grid": cmd_grid,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowupError, OptimizeError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
