"""Parameter scans: attractor diagrams, hysteresis continuation, oracle comparison.

Independent-mode sweeps run a seed ensemble to convergence at every
parameter value (embarrassingly parallel across a process pool) and
cluster the surviving cycles into branches.  Continuation sweeps chain
runs, seeding each power from the previous converged state, which tracks
a single branch and exposes hysteresis.  `compare_oracles` pairs the
kick-map's stable fixed cycles against the full-simulation branches.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .cycles import BranchSet, CycleRun, cluster_branches, run_to_cycle, seed_velocities
from .dynamics import initial_state
from .integrator import IntegratorConfig, integrate
from .kickmap import FixedCycle, find_fixed_cycles
from .params import ParameterError, SystemParams


@dataclass(frozen=True)
class EnsembleSpec:
    """Seed grid: (x, p) = (0, m*v0), v0 = omega_m * A for A uniform on [a_lo, a_hi]."""

    n: int = 12
    a_lo: float = 0.25e-6   # [m]
    a_hi: float = 6e-6      # [m]

    def velocities(self, params: SystemParams) -> np.ndarray:
        return seed_velocities(params, self.n, self.a_lo, self.a_hi)


@dataclass(frozen=True)
class SweepPlan:
    variable: str                    # 'power' | 'duffing_alpha'
    values: tuple                    # strictly increasing
    seeds: EnsembleSpec = EnsembleSpec()
    mode: str = "independent"        # 'independent' | 'continue-up' | 'continue-down'

    def __post_init__(self):
        if self.variable not in ("power", "duffing_alpha"):
            raise ParameterError(f"unknown sweep variable {self.variable!r}")
        if self.mode not in ("independent", "continue-up", "continue-down"):
            raise ParameterError(f"unknown sweep mode {self.mode!r}")
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ParameterError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ParameterError("sweep values must be strictly increasing")
        if self.mode != "independent" and len(vals) < 2:
            raise ParameterError("continuation needs at least two values")
        object.__setattr__(self, "values", vals)


@dataclass
class SweepPoint:
    value: float                     # the swept parameter value
    branches: BranchSet | None       # None when no run converged
    runs: list                       # per-seed CycleRun summaries
    statuses: list                   # per-seed status strings


@dataclass
class TracePoint:
    value: float
    a_bar: float
    a_min: float
    a_max: float
    status: str
    jumped: bool = False             # branch jump versus previous point


def _apply(params: SystemParams, variable: str, value: float) -> SystemParams:
    if variable == "power":
        return params.with_power(value)
    return params.with_duffing_alpha(value)


def _run_seed(args):
    """Worker-pool task: one (value, seed) run to its attractor."""
    params, variable, value, v0, run_kw = args
    p = _apply(params, variable, value)
    res = run_to_cycle(p, v0=v0, capture_shape=False, **run_kw)
    c = res.cycle
    return (
        res.status,
        None if c is None else (c.a_min, c.a_max, c.period),
        res.periods_run,
    )


def _pool(max_workers: int | None):
    workers = max_workers or os.cpu_count() or 1
    # fork keeps the parent's warmed JIT kernel; tasks are pure functions
    return ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork"))


def _warm_kernel(params: SystemParams):
    # one tiny integration compiles (or loads from cache) the stepping kernel
    st = initial_state(params, x=0.0, v=0.1)
    integrate(st, IntegratorConfig(t_end=1e-3, sample_stride=10), params)


def _ensemble_sweep(
    plan: SweepPlan, params: SystemParams, run_kw: dict, max_workers: int | None
) -> list[SweepPoint]:
    from .cycles import LimitCycle

    run_kw = dict(run_kw)
    tasks = []
    for value in plan.values:
        for v0 in plan.seeds.velocities(params):
            tasks.append((params, plan.variable, value, float(v0), run_kw))

    _warm_kernel(params)
    if (len(tasks)) == 1 or (os.cpu_count() or 1) == 1:
        outcomes = [_run_seed(t) for t in tasks]
    else:
        with _pool(max_workers) as pool:
            outcomes = list(pool.map(_run_seed, tasks, chunksize=1))

    points = []
    n_seeds = plan.seeds.n
    for i, value in enumerate(plan.values):
        chunk = outcomes[i * n_seeds : (i + 1) * n_seeds]
        cycles = []
        statuses = []
        for status, amp, _ in chunk:
            statuses.append(status)
            if status == "converged" and amp is not None:
                a_min, a_max, period = amp
                cycles.append(LimitCycle(a_min=a_min, a_max=a_max, period=period))
        nontrivial = [c for c in cycles if not c.is_trivial]
        branches = (
            cluster_branches(nontrivial, lambda_l=params.lambda_l) if nontrivial else None
        )
        points.append(SweepPoint(value=value, branches=branches, runs=chunk, statuses=statuses))
    return points


def power_sweep(
    plan: SweepPlan,
    params: SystemParams,
    max_workers: int | None = None,
    **run_kw,
) -> list[SweepPoint]:
    """Independent seed ensemble at every power; the attractor diagram data."""
    if plan.variable != "power":
        raise ParameterError("power_sweep needs a power-variable plan")
    if plan.mode != "independent":
        raise ParameterError("power_sweep runs independent mode; see continuation_sweep")
    return _ensemble_sweep(plan, params, run_kw, max_workers)


def duffing_sweep(
    plan: SweepPlan,
    params: SystemParams,
    max_workers: int | None = None,
    **run_kw,
) -> list[SweepPoint]:
    """Independent seed ensemble at every cubic-stiffness value, fixed power."""
    if plan.variable != "duffing_alpha":
        raise ParameterError("duffing_sweep needs a duffing_alpha-variable plan")
    return _ensemble_sweep(plan, params, run_kw, max_workers)


def continuation_sweep(
    plan: SweepPlan,
    params: SystemParams,
    jump_threshold: float = 0.25,
    **run_kw,
) -> list[TracePoint]:
    """Follow one branch adiabatically as the parameter steps up or down.

    Each run seeds from the previous converged mirror state (modes re-slave
    within 1/kappa, so they are re-initialised adiabatically).  continue-up
    starts from the lowest branch at the first value, continue-down from
    the highest branch at the last value.  A relative jump of `a_bar`
    beyond `jump_threshold` between adjacent values is flagged; decay to
    rest terminates the trace.
    """
    if plan.mode not in ("continue-up", "continue-down"):
        raise ParameterError("continuation_sweep needs mode continue-up or continue-down")
    values = plan.values if plan.mode == "continue-up" else tuple(reversed(plan.values))
    seeds = plan.seeds.velocities(params)
    v_start = float(seeds.min() if plan.mode == "continue-up" else seeds.max())

    trace: list[TracePoint] = []
    state = None
    prev_a_bar = None
    for value in values:
        p = _apply(params, plan.variable, value)
        if state is None:
            res = run_to_cycle(p, v0=v_start, **run_kw)
        else:
            seeded = initial_state(p, x=state.mirror.x, v=state.mirror.p / p.mass)
            res = run_to_cycle(p, initial=seeded, **run_kw)
        if res.status != "converged" or res.cycle is None:
            trace.append(TracePoint(value, math.nan, math.nan, math.nan, res.status))
            break
        c = res.cycle
        if c.is_trivial:
            trace.append(TracePoint(value, 0.0, 0.0, 0.0, "rest"))
            break
        jumped = prev_a_bar is not None and abs(c.a_bar - prev_a_bar) > jump_threshold * prev_a_bar
        trace.append(TracePoint(value, c.a_bar, c.a_min, c.a_max, "converged", jumped))
        prev_a_bar = c.a_bar
        state = res.final_state
    return trace


@dataclass
class OracleMatch:
    a_bar_kickmap: float
    a_bar_full: float | None     # nearest full branch, None when none exists
    rel_diff: float | None       # |km - full| / full
    matched: bool
    stable: bool
    valid: bool


@dataclass
class ComparisonReport:
    power: float
    full_branches: list           # branch centres [m]
    kickmap_cycles: list          # FixedCycle
    matches: list                 # OracleMatch per stable+valid kickmap root
    unmatched_full: list          # full branch centres no kickmap root claimed


def compare_oracles(
    powers,
    params: SystemParams,
    seeds: EnsembleSpec = EnsembleSpec(),
    a_grid: np.ndarray | None = None,
    match_tol: float = 0.10,
    max_workers: int | None = None,
    **run_kw,
) -> list[ComparisonReport]:
    """Pair kick-map stable roots with full-simulation branches per power."""
    powers = [float(p) for p in powers]
    reports = []
    for power in powers:
        plan = SweepPlan(variable="power", values=(power,), seeds=seeds)
        point = _ensemble_sweep(plan, params, run_kw, max_workers)[0]
        centers = list(point.branches.centers()) if point.branches else []
        km = find_fixed_cycles(_apply(params, "power", power), a_grid=a_grid)
        matches = []
        claimed = set()
        for c in km:
            if not (c.stable and c.valid):
                continue
            if centers:
                j = int(np.argmin([abs(c.a_bar - f) for f in centers]))
                rel = abs(c.a_bar - centers[j]) / centers[j]
                matches.append(
                    OracleMatch(c.a_bar, centers[j], rel, bool(rel < match_tol), c.stable, c.valid)
                )
                if rel < match_tol:
                    claimed.add(j)
            else:
                matches.append(OracleMatch(c.a_bar, None, None, False, c.stable, c.valid))
        unmatched = [f for j, f in enumerate(centers) if j not in claimed]
        reports.append(
            ComparisonReport(
                power=power,
                full_branches=centers,
                kickmap_cycles=km,
                matches=matches,
                unmatched_full=unmatched,
            )
        )
    return reports
