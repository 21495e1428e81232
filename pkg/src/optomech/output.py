"""CSV and manifest emission.  All numeric output is SI at full double precision.

Schemas are fixed (header text and column order are part of the tool's
contract); plotting is downstream.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .cycles import LimitCycle
from .integrator import Trajectory

TRAJECTORY_HEADER = "t_s,x_m,p_kgms,n_photons_total,work_J,dissipated_J"
PHOTONS_HEADER = "t_s,n_photons_total"
LIMIT_CYCLE_HEADER = "x_m,p_kgms"
BRANCH_TABLE_HEADER = "power_w,a_bar_m,a_min_m,a_max_m,branch_id,seed_count"
ATTRACTOR_HEADER = "power_w,a_bar_m,branch_id,n_seeds,status"
COMPARISON_HEADER = "power_w,a_bar_full_m,a_bar_kickmap_m,rel_diff,matched"
FIXED_CYCLE_HEADER = "power_w,a_min_m,a_max_m,a_bar_m,stable,balance_residual"
FIXED_CYCLE_AUDIT_HEADER = FIXED_CYCLE_HEADER + ",balance_lhs_J,balance_rhs_J,valid"
TRACE_HEADER = "value,a_bar_m,a_min_m,a_max_m,status,jumped"
MODES_HEADER = "t_s,k,re_alpha,im_alpha"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return f"{float(x):.17g}"


def _write_rows(path, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def write_trajectory_csv(path, traj: Trajectory) -> None:
    _write_rows(
        path,
        TRAJECTORY_HEADER,
        zip(traj.t_s, traj.x_m, traj.p_kgms, traj.n_photons_total, traj.work_J, traj.dissipated_J),
    )


def write_photons_csv(path, traj: Trajectory) -> None:
    _write_rows(path, PHOTONS_HEADER, zip(traj.t_s, traj.n_photons_total))


def write_limit_cycle_csv(path, cycle: LimitCycle) -> None:
    _write_rows(path, LIMIT_CYCLE_HEADER, cycle.points)


def write_mode_dump_csv(path, traj: Trajectory) -> None:
    if traj.mode_dump is None:
        raise ValueError("trajectory carries no mode dump; integrate with dump_modes=True")
    dump = traj.mode_dump
    margin = dump["margin"]

    def rows():
        for i, t in enumerate(dump["t_s"]):
            kc = int(dump["k_center"][i])
            for j in range(2 * margin + 1):
                alpha = dump["alpha"][i, j]
                yield (t, kc - margin + j, alpha.real, alpha.imag)

    _write_rows(path, MODES_HEADER, rows())


def write_branch_table_csv(path, rows) -> None:
    """rows: (power_w, a_bar_m, a_min_m, a_max_m, branch_id, seed_count)."""
    _write_rows(path, BRANCH_TABLE_HEADER, rows)


def write_attractor_csv(path, rows) -> None:
    """rows: (power_w, a_bar_m, branch_id, n_seeds, status)."""
    _write_rows(path, ATTRACTOR_HEADER, rows)


def write_comparison_csv(path, rows) -> None:
    """rows: (power_w, a_bar_full_m, a_bar_kickmap_m, rel_diff, matched)."""
    _write_rows(path, COMPARISON_HEADER, rows)


def write_fixed_cycles_csv(path, rows, audit: bool = False) -> None:
    header = FIXED_CYCLE_AUDIT_HEADER if audit else FIXED_CYCLE_HEADER
    _write_rows(path, header, rows)


def write_trace_csv(path, trace) -> None:
    _write_rows(
        path,
        TRACE_HEADER,
        ((t.value, t.a_bar, t.a_min, t.a_max, t.status, t.jumped) for t in trace),
    )


def write_manifest(path, payload: dict, include_wallclock: bool = True) -> None:
    payload = dict(payload)
    if include_wallclock:
        payload["wall_clock_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def params_payload(params) -> dict:
    return {
        "omega_m_hz": params.omega_m,
        "mass_kg": params.mass,
        "gamma_over_omega_m": params.gamma / params.omega_m,
        "kappa_over_omega_m": params.kappa / params.omega_m,
        "lambda_nm": params.lambda_l * 1e9,
        "n_order": params.N,
        "power_w": params.power,
        "duffing_alpha_per_m2": params.duffing_alpha,
    }
