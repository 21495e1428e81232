"""Command-line front end: simulate / sweep / kickmap / compare.

Every subcommand reads the flat key-value config (all eight documented
keys required) or falls back to the desk defaults, applies one-for-one
flag overrides, runs, and emits fixed-schema CSV files plus a JSON
manifest into --out-dir.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 non-convergence only.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, output
from .cycles import run_to_cycle
from .dynamics import initial_state
from .integrator import IntegratorConfig, NumericalBlowupError, integrate
from .kickmap import balance_audit, find_fixed_cycles
from .params import (
    DEFAULT_CONFIG,
    GeometryError,
    ParameterError,
    SystemParams,
    load_config,
)
from .sweep import (
    EnsembleSpec,
    SweepPlan,
    compare_oracles,
    continuation_sweep,
    duffing_sweep,
    power_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NOT_CONVERGED = 4

# flag name <-> config key, applied one-for-one
_OVERRIDES = {
    "omega_m_hz": float,
    "mass_kg": float,
    "gamma_over_omega_m": float,
    "kappa_over_omega_m": float,
    "lambda_nm": float,
    "n_order": int,
    "power_w": float,
    "duffing_alpha_per_m2": float,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value parameter file")
    parser.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    for key, typ in _OVERRIDES.items():
        parser.add_argument(f"--{key.replace('_', '-')}", type=typ, default=None, dest=key)


def _resolve_params(args) -> SystemParams:
    cfg = dict(DEFAULT_CONFIG) if args.config is None else load_config(args.config)
    for key in _OVERRIDES:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    return SystemParams.from_config(cfg)


def _parse_powers(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="optomech",
        description="Multimode cavity-optomechanics simulator (batch CLI).",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="drive one seed to its limit cycle")
    _add_common(sim)
    sim.add_argument("--seed-amplitude-um", type=float, default=1.0,
                     help="seed momentum as equivalent amplitude [um]")
    sim.add_argument("--seed-velocity", type=float, default=None,
                     help="seed velocity [m/s] (overrides --seed-amplitude-um)")
    sim.add_argument("--max-periods", type=int, default=400)
    sim.add_argument("--rel-tol", type=float, default=1e-3)
    sim.add_argument("--window-periods", type=int, default=20)
    sim.add_argument("--tail-periods", type=int, default=3,
                     help="densely sampled periods written to trajectory.csv")
    sim.add_argument("--dump-modes", action="store_true",
                     help="also write per-mode amplitudes (modes.csv)")

    sw = sub.add_parser("sweep", help="parameter scan (attractor diagram, continuation)")
    _add_common(sw)
    sw.add_argument("--variable", choices=["power", "duffing_alpha"], default="power")
    sw.add_argument("--from", dest="lo", type=float, help="first value")
    sw.add_argument("--to", dest="hi", type=float, help="last value")
    sw.add_argument("--step", type=float, help="grid step")
    sw.add_argument("--values", type=str, default=None, help="explicit comma-separated grid")
    sw.add_argument("--mode", choices=["independent", "continue-up", "continue-down"],
                    default="independent")
    sw.add_argument("--seeds", type=int, default=12)
    sw.add_argument("--seed-min-um", type=float, default=0.25)
    sw.add_argument("--seed-max-um", type=float, default=6.0)
    sw.add_argument("--max-periods", type=int, default=400)
    sw.add_argument("--workers", type=int, default=None)

    km = sub.add_parser("kickmap", help="semi-analytic fixed-cycle table")
    _add_common(km)
    km.add_argument("--powers", type=str, default=None,
                    help="comma-separated powers [W]; default: config power")
    km.add_argument("--grid-min-um", type=float, default=0.1)
    km.add_argument("--grid-max-um", type=float, default=6.0)
    km.add_argument("--grid-n", type=int, default=60)
    km.add_argument("--audit", action="store_true",
                    help="add work/dissipation audit columns")

    cp = sub.add_parser("compare", help="kickmap vs full-simulation branch matching")
    _add_common(cp)
    cp.add_argument("--powers", type=str, default="7,11,15")
    cp.add_argument("--seeds", type=int, default=12)
    cp.add_argument("--seed-min-um", type=float, default=0.25)
    cp.add_argument("--seed-max-um", type=float, default=6.0)
    cp.add_argument("--match-tol", type=float, default=0.10)
    cp.add_argument("--workers", type=int, default=None)
    cp.add_argument("--max-periods", type=int, default=400)
    return ap


def _manifest_base(args, params, t0) -> dict:
    return {
        "tool": "optomech",
        "version": __version__,
        "command": args.command,
        "params": output.params_payload(params),
        "elapsed_s": round(time.time() - t0, 3),
    }


def _cmd_simulate(args) -> int:
    t0 = time.time()
    params = _resolve_params(args)
    out = args.out_dir
    v0 = (
        args.seed_velocity
        if args.seed_velocity is not None
        else params.omega_m * args.seed_amplitude_um * 1e-6
    )
    try:
        res = run_to_cycle(
            params, v0=v0, rel_tol=args.rel_tol, window_periods=args.window_periods,
            max_periods=args.max_periods,
        )
    except NumericalBlowupError as exc:
        print(f"error: numerical blowup: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    manifest = _manifest_base(args, params, t0)
    manifest["seed_velocity_m_s"] = v0
    manifest["status"] = res.status
    manifest["periods_run"] = res.periods_run

    if res.status == "blowup":
        output.write_manifest(out / "manifest.json", manifest)
        print("error: numerical blowup; partial outputs flagged in manifest", file=sys.stderr)
        return EXIT_NUMERICAL

    # densely sampled tail: the trajectory/photon series outputs
    state = res.final_state if res.final_state is not None else initial_state(params, v=v0)
    cfg = IntegratorConfig(
        t_end=2 * np.pi * args.tail_periods, sample_stride=25, dump_modes=args.dump_modes
    )
    try:
        tail = integrate(state, cfg, params)
    except NumericalBlowupError as exc:
        print(f"error: numerical blowup in tail sampling: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    output.write_trajectory_csv(out / "trajectory.csv", tail)
    output.write_photons_csv(out / "photons.csv", tail)
    if args.dump_modes:
        output.write_mode_dump_csv(out / "modes.csv", tail)
    if res.cycle is not None and res.cycle.points.size:
        output.write_limit_cycle_csv(out / "limit_cycle.csv", res.cycle)
        manifest["limit_cycle"] = {
            "a_min_m": res.cycle.a_min,
            "a_max_m": res.cycle.a_max,
            "a_bar_m": res.cycle.a_bar,
            "period_s": res.cycle.period,
            "n_sawtooth_jumps": len(res.cycle.jumps),
        }
    manifest["files"] = ["trajectory.csv", "photons.csv", "limit_cycle.csv", "manifest.json"]
    if args.dump_modes:
        manifest["files"].append("modes.csv")
    output.write_manifest(out / "manifest.json", manifest)

    if res.status != "converged":
        print(f"not converged after {res.periods_run} periods", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"converged: a_bar = {res.cycle.a_bar:.6e} m ({res.periods_run:.0f} periods)")
    return EXIT_OK


def _grid_from_args(args) -> list[float]:
    if args.values is not None:
        vals = _parse_powers(args.values)
    else:
        if args.lo is None or args.hi is None or args.step is None:
            raise ParameterError("sweep needs --values or all of --from/--to/--step")
        n = int(round((args.hi - args.lo) / args.step))
        vals = [args.lo + i * args.step for i in range(n + 1)]
    return vals


def _cmd_sweep(args) -> int:
    t0 = time.time()
    params = _resolve_params(args)
    out = args.out_dir
    try:
        values = _grid_from_args(args)
        seeds = EnsembleSpec(n=args.seeds, a_lo=args.seed_min_um * 1e-6,
                             a_hi=args.seed_max_um * 1e-6)
        plan = SweepPlan(variable=args.variable, values=tuple(values), seeds=seeds,
                         mode=args.mode)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    manifest = _manifest_base(args, params, t0)
    manifest["plan"] = {
        "variable": plan.variable, "values": list(plan.values), "mode": plan.mode,
        "seeds": {"n": seeds.n, "a_lo_m": seeds.a_lo, "a_hi_m": seeds.a_hi},
        "branch_jump_threshold": 0.25,
    }

    if plan.mode == "independent":
        run = power_sweep if plan.variable == "power" else duffing_sweep
        points = run(plan, params, max_workers=args.workers, max_periods=args.max_periods)
        attractor_rows = []
        branch_rows = []
        any_unconverged = False
        for pt in points:
            n_seeds = len(pt.statuses)
            if pt.branches is None:
                attractor_rows.append((pt.value, float("nan"), -1, n_seeds, "no_cycles"))
            else:
                for bid, b in enumerate(pt.branches.branches):
                    attractor_rows.append((pt.value, b.center, bid, n_seeds, "ok"))
                    rep = b.representative
                    branch_rows.append((pt.value, b.center, rep.a_min, rep.a_max, bid, b.count))
            if any(s != "converged" for s in pt.statuses):
                any_unconverged = True
        output.write_attractor_csv(out / "attractor.csv", attractor_rows)
        output.write_branch_table_csv(out / "branch_table.csv", branch_rows)
        manifest["statuses"] = {str(pt.value): pt.statuses for pt in points}
        manifest["files"] = ["attractor.csv", "branch_table.csv", "manifest.json"]
        output.write_manifest(out / "manifest.json", manifest)
        if any_unconverged:
            print("some runs did not converge (recorded in manifest)", file=sys.stderr)
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    trace = continuation_sweep(plan, params, max_periods=args.max_periods)
    output.write_trace_csv(out / "trace.csv", trace)
    manifest["files"] = ["trace.csv", "manifest.json"]
    manifest["statuses"] = [t.status for t in trace]
    output.write_manifest(out / "manifest.json", manifest)
    if any(t.status not in ("converged", "rest") for t in trace):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_kickmap(args) -> int:
    t0 = time.time()
    params = _resolve_params(args)
    if params.duffing_alpha != 0.0:
        print(
            "error: the kick map assumes harmonic arcs; duffing_alpha_per_m2 must be 0 "
            "(Duffing runs use the full integrator)",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    out = args.out_dir
    powers = _parse_powers(args.powers) if args.powers else [params.power]
    grid = np.linspace(args.grid_min_um * 1e-6, args.grid_max_um * 1e-6, args.grid_n)

    rows = []
    for power in powers:
        cycles = find_fixed_cycles(params.with_power(power), a_grid=grid)
        for c in cycles:
            row = [power, c.a_min, c.a_max, c.a_bar, c.stable, c.balance_residual]
            if args.audit:
                row += [c.balance_lhs, c.balance_rhs, c.valid]
            rows.append(tuple(row))
    output.write_fixed_cycles_csv(out / "fixed_cycles.csv", rows, audit=args.audit)
    manifest = _manifest_base(args, params, t0)
    manifest["powers"] = powers
    manifest["grid"] = {"min_m": float(grid[0]), "max_m": float(grid[-1]), "n": int(grid.size)}
    manifest["files"] = ["fixed_cycles.csv", "manifest.json"]
    output.write_manifest(out / "manifest.json", manifest)
    print(f"{len(rows)} fixed cycles over {len(powers)} power(s)")
    return EXIT_OK


def _cmd_compare(args) -> int:
    t0 = time.time()
    params = _resolve_params(args)
    out = args.out_dir
    powers = _parse_powers(args.powers)
    seeds = EnsembleSpec(n=args.seeds, a_lo=args.seed_min_um * 1e-6, a_hi=args.seed_max_um * 1e-6)
    reports = compare_oracles(
        powers, params, seeds=seeds, match_tol=args.match_tol,
        max_workers=args.workers, max_periods=args.max_periods,
    )
    rows = []
    for rep in reports:
        for m in rep.matches:
            rows.append((rep.power, m.a_bar_full, m.a_bar_kickmap, m.rel_diff, m.matched))
        for f in rep.unmatched_full:
            rows.append((rep.power, f, float("nan"), float("nan"), False))
    output.write_comparison_csv(out / "comparison.csv", rows)
    manifest = _manifest_base(args, params, t0)
    manifest["powers"] = powers
    manifest["match_tol"] = args.match_tol
    manifest["files"] = ["comparison.csv", "manifest.json"]
    output.write_manifest(out / "manifest.json", manifest)
    for rep in reports:
        n_match = sum(m.matched for m in rep.matches)
        print(
            f"P = {rep.power} W: {len(rep.full_branches)} full branches, "
            f"{len(rep.matches)} stable kickmap roots, {n_match} matched"
        )
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        handler = {
            "simulate": _cmd_simulate,
            "sweep": _cmd_sweep,
            "kickmap": _cmd_kickmap,
            "compare": _cmd_compare,
        }[args.command]
        return handler(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"error: geometry: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalBlowupError as exc:
        print(f"error: numerical blowup: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
