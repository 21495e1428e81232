"""Limit-cycle extraction, sawtooth profiling, and multistability branches.

A converged self-sustained oscillation is characterised by its turning
amplitudes: A_min (leftmost excursion, measured from the static
equilibrium x = 0) and A_max (rightmost), combined into the average
amplitude

    A_bar = sqrt((A_min^2 + A_max^2)/2).

Convergence is declared when both turning sequences are steady to a
relative tolerance over a trailing window of periods.  Ensembles of
converged cycles are clustered on A_bar into branches; at fixed drive
power the branch centres are the attractor diagram's discrete dots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import initial_state
from .integrator import (
    IntegratorConfig,
    NumericalBlowupError,
    Trajectory,
    integrate,
)
from .params import ParameterError, SystemParams, coupling_strength, resonance_position


@dataclass(frozen=True)
class LimitCycle:
    a_min: float                 # left amplitude = -min x over cycle [m]
    a_max: float                 # right amplitude = max x over cycle [m]
    period: float                # [s]
    a_bar: float = field(init=False)  # sqrt((a_min^2 + a_max^2)/2), by construction
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))  # (x [m], p [kg m/s])
    jumps: tuple = ()            # per-crossing velocity jumps, see sawtooth_profile

    def __post_init__(self):
        if self.a_min < 0 or self.a_max < 0:
            raise ParameterError("amplitudes must be non-negative")
        object.__setattr__(self, "a_bar", math.sqrt((self.a_min**2 + self.a_max**2) / 2.0))

    @property
    def is_trivial(self) -> bool:
        return self.a_bar == 0.0


@dataclass(frozen=True)
class Branch:
    center: float                # cluster centre of a_bar [m]
    spread: float                # max - min a_bar within the cluster [m]
    count: int                   # member cycles
    representative: LimitCycle   # member closest to the centre


@dataclass(frozen=True)
class BranchSet:
    branches: tuple              # Branch, ascending centre

    def __len__(self):
        return len(self.branches)

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.branches])


def turning_points(traj: Trajectory) -> np.ndarray:
    """Sample-based p = 0 crossings: columns (t [s], x [m], sign).

    sign = +1 for a right turning point (p: + -> -), -1 for left.
    Requires sampling dense enough that p changes sign at most once
    between adjacent samples.
    """
    p = traj.p_kgms
    t = traj.t_s
    x = traj.x_m
    s_prev = p[:-1]
    s_next = p[1:]
    hits = np.where((s_prev > 0) & (s_next <= 0) | ((s_prev < 0) & (s_next >= 0)))[0]
    out = np.empty((hits.shape[0], 3))
    for row, i in enumerate(hits):
        frac = s_prev[i] / (s_prev[i] - s_next[i])
        out[row, 0] = t[i] + frac * (t[i + 1] - t[i])
        out[row, 1] = x[i] + frac * (x[i + 1] - x[i])
        out[row, 2] = 1.0 if s_prev[i] > 0 else -1.0
    return out


def _crossings_of(traj: Trajectory) -> np.ndarray:
    """Prefer the integrator's step-resolution turning events; fall back to samples."""
    if traj.crossings.size:
        return traj.crossings[:, :3]
    return turning_points(traj)


def detect_limit_cycle(
    traj: Trajectory,
    rel_tol: float = 1e-3,
    window_periods: int = 20,
    noise_floor: float = 1e-9,
) -> LimitCycle | None:
    """Extract the converged limit cycle, or None when not converged.

    Converged iff both the left- and right-amplitude sequences vary by
    less than rel_tol (relative to their mean) over the last
    window_periods.  A trajectory that has decayed below `noise_floor`
    is the trivial rest cycle (a_bar = 0).
    """
    if rel_tol <= 0:
        raise ParameterError("rel_tol must be positive")
    cross = _crossings_of(traj)
    right = cross[cross[:, 2] > 0]
    left = cross[cross[:, 2] < 0]
    if right.shape[0] < window_periods + 1 or left.shape[0] < window_periods:
        return None

    r_x = right[-(window_periods + 1):, 1]
    l_x = -left[-window_periods:, 1]
    a_max = float(np.mean(r_x))
    a_min = float(np.mean(l_x))

    if a_max < noise_floor:
        return LimitCycle(a_min=0.0, a_max=0.0, period=2 * math.pi / traj.params.omega_m)

    for seq, mean in ((r_x, a_max), (l_x, a_min)):
        scale = max(abs(mean), noise_floor)
        if (seq.max() - seq.min()) / scale >= rel_tol:
            return None
    if a_min < 0 or a_max < 0:
        return None  # lopsided orbit not enclosing the origin; treat as unconverged

    r_t = right[-(window_periods + 1):, 0]
    period = float(np.mean(np.diff(r_t)))
    points = _one_period_points(traj, r_t[-1], period)
    cycle = LimitCycle(a_min=a_min, a_max=a_max, period=period, points=points)
    jumps = sawtooth_profile(cycle, traj.params)
    return LimitCycle(a_min=a_min, a_max=a_max, period=period, points=points, jumps=jumps)


def _one_period_points(traj: Trajectory, t_end: float, period: float) -> np.ndarray:
    mask = (traj.t_s >= t_end - period) & (traj.t_s <= t_end)
    return np.column_stack([traj.x_m[mask], traj.p_kgms[mask]])


def equilibrium_shift(cycle: LimitCycle) -> float:
    """Time-averaged mirror position over one period [m].

    Points are uniformly sampled in time, so a plain mean applies.
    Radiation pressure pushes outward, so driven cycles shift positive.
    """
    if cycle.points.shape[0] == 0:
        raise ParameterError("cycle carries no sampled points")
    return float(np.mean(cycle.points[:, 0]))


def sawtooth_profile(cycle: LimitCycle, params: SystemParams) -> tuple:
    """Velocity jumps at each resonance position crossed by the cycle.

    For every crossing of x_k = k*lambda/2 strictly inside
    (-a_min, a_max), measures the change of |p| across a window of width
    10*kappa/g centred on x_k.  Records (k, direction, dp_abs) with
    direction +1 for forward passes (jump expected positive: sharp
    acceleration) and -1 for backward passes (negative: deceleration).
    """
    pts = cycle.points
    if pts.shape[0] < 8:
        return ()
    x = pts[:, 0]
    p = pts[:, 1]
    out = []
    k_lo = int(math.floor(-cycle.a_min / params.half_wavelength)) + 1
    k_hi = int(math.ceil(cycle.a_max / params.half_wavelength)) - 1
    for k in range(k_lo, k_hi + 1):
        xk = resonance_position(params, k)
        half = 5.0 * params.kappa / coupling_strength(params, k)
        sign_change = (x[:-1] - xk) * (x[1:] - xk) < 0
        for i in np.where(sign_change)[0]:
            direction = 1 if x[i + 1] > x[i] else -1
            before = _p_at_offset(x, p, i, xk - direction * half, direction)
            after = _p_at_offset(x, p, i, xk + direction * half, direction)
            if before is None or after is None:
                continue
            out.append((k, direction, abs(after) - abs(before)))
    return tuple(out)


def _p_at_offset(x, p, i_cross, x_target, direction):
    """Interpolate p at x_target on the pass containing sample index i_cross.

    Walks from the crossing in the direction of travel (or against it for
    the 'before' point) until the bracketing sample pair is found; gives
    up at a turning point, where the pass ends.
    """
    n = x.shape[0]
    # target lies ahead in time iff it is on the far side along the travel direction
    ahead = (x_target - x[i_cross]) * direction > 0
    step = 1 if ahead else -1
    j = i_cross
    while 0 <= j < n - 1:
        if (x[j] - x_target) * (x[j + 1] - x_target) <= 0:
            if x[j + 1] == x[j]:
                return p[j]
            frac = (x_target - x[j]) / (x[j + 1] - x[j])
            return p[j] + frac * (p[j + 1] - p[j])
        if j != i_cross and p[j] * direction <= 0:
            return None  # pass turned around before reaching the offset
        j += step
    return None


def cluster_branches(cycles, gap_factor: float = 3.0, lambda_l: float | None = None) -> BranchSet:
    """Single-linkage clustering of cycles on a_bar.

    Splits where the adjacent gap exceeds max(gap_factor * median
    intra-cluster spread, lambda_l/20).  The absolute floor keeps
    duplicate-free ensembles from fragmenting.
    """
    cycles = list(cycles)
    if not cycles:
        raise ParameterError("at least one cycle required")
    if lambda_l is None:
        lambda_l = 1e-6
    floor = lambda_l / 20.0

    order = np.argsort([c.a_bar for c in cycles])
    sorted_cycles = [cycles[i] for i in order]
    a = np.array([c.a_bar for c in sorted_cycles])

    def split(threshold):
        groups = [[0]] if len(a) else []
        for i in range(1, len(a)):
            if a[i] - a[i - 1] > threshold:
                groups.append([i])
            else:
                groups[-1].append(i)
        return groups

    groups = split(floor)
    spreads = [a[g].max() - a[g].min() for g in groups if len(g) > 1]
    med = float(np.median(spreads)) if spreads else 0.0
    threshold = max(gap_factor * med, floor)
    groups = split(threshold)

    branches = []
    for g in groups:
        center = float(np.mean(a[g]))
        spread = float(a[g].max() - a[g].min())
        rep = sorted_cycles[min(g, key=lambda i: abs(a[i] - center))]
        branches.append(Branch(center=center, spread=spread, count=len(g), representative=rep))
    return BranchSet(branches=tuple(branches))


@dataclass
class CycleRun:
    """Outcome of driving one seed to its attractor."""

    status: str                  # 'converged' | 'not_converged' | 'blowup'
    cycle: LimitCycle | None
    periods_run: float
    final_state: object = None
    seed_velocity: float | None = None


def seed_velocities(params: SystemParams, n: int = 12, a_lo: float = 0.25e-6, a_hi: float = 6e-6):
    """Seed momenta as equivalent harmonic amplitudes: v0 = omega_m * A."""
    return params.omega_m * np.linspace(a_lo, a_hi, n)


def run_to_cycle(
    params: SystemParams,
    v0: float = 0.0,
    x0: float = 0.0,
    initial=None,
    rel_tol: float = 1e-3,
    window_periods: int = 20,
    max_periods: int = 400,
    min_periods: int = 60,
    chunk_periods: int = 40,
    dt_base: float = 2e-5,
    refine_factor: int = 10,
    dense_stride: int = 25,
    capture_shape: bool = True,
) -> CycleRun:
    """Integrate from a seed until a limit cycle converges (or give up).

    Chunked integration with a trailing-window convergence test on the
    turning amplitudes; after convergence one extra period is re-sampled
    densely to capture the cycle shape and its sawtooth jumps
    (skipped when capture_shape is False; amplitudes are enough for
    branch tables).
    """
    state = initial if initial is not None else initial_state(params, x=x0, v=v0)
    two_pi = 2 * math.pi

    all_cross = []
    periods = 0.0
    converged_amp = None
    while periods < max_periods:
        chunk = min(chunk_periods, max_periods - periods)
        cfg = IntegratorConfig(
            t_end=chunk * two_pi, dt_base=dt_base, refine_factor=refine_factor,
            sample_stride=4000,
        )
        try:
            traj = integrate(state, cfg, params)
        except NumericalBlowupError:
            return CycleRun(status="blowup", cycle=None, periods_run=periods, seed_velocity=v0)
        state = traj.final_state
        if traj.crossings.size:
            all_cross.append(traj.crossings[:, :3])
        periods += chunk
        if periods < min_periods or not all_cross:
            continue
        cross = np.vstack(all_cross)
        converged_amp = _window_amplitudes(cross, rel_tol, window_periods)
        if converged_amp is not None:
            break

    if converged_amp is None:
        return CycleRun(
            status="not_converged", cycle=None, periods_run=periods,
            final_state=state, seed_velocity=v0,
        )

    a_min, a_max, period_si = converged_amp
    if a_max < 1e-9:
        cycle = LimitCycle(a_min=0.0, a_max=0.0, period=two_pi / params.omega_m)
        return CycleRun("converged", cycle, periods, state, v0)

    if not capture_shape:
        cycle = LimitCycle(a_min=a_min, a_max=a_max, period=period_si)
        return CycleRun("converged", cycle, periods, state, v0)

    # dense re-sample of one converged period for shape and sawteeth
    cfg_dense = IntegratorConfig(
        t_end=1.05 * period_si * params.omega_m,
        dt_base=dt_base, refine_factor=refine_factor, sample_stride=dense_stride,
    )
    traj_dense = integrate(state, cfg_dense, params)
    pts_t = traj_dense.t_s - traj_dense.t_s[0]
    mask = pts_t <= period_si
    points = np.column_stack([traj_dense.x_m[mask], traj_dense.p_kgms[mask]])
    cycle = LimitCycle(a_min=a_min, a_max=a_max, period=period_si, points=points)
    cycle = LimitCycle(
        a_min=a_min, a_max=a_max, period=period_si, points=points,
        jumps=sawtooth_profile(cycle, params),
    )
    return CycleRun("converged", cycle, periods, traj_dense.final_state, v0)


def _window_amplitudes(cross: np.ndarray, rel_tol: float, window_periods: int):
    """(a_min, a_max, period [s]) from the trailing window, or None if unsteady."""
    right = cross[cross[:, 2] > 0]
    left = cross[cross[:, 2] < 0]
    if right.shape[0] < window_periods + 1 or left.shape[0] < window_periods:
        return None
    r_x = right[-(window_periods + 1):, 1]
    l_x = -left[-window_periods:, 1]
    a_max = float(np.mean(r_x))
    a_min = float(np.mean(l_x))
    if a_max < 1e-9:
        # decayed to rest: steady by definition
        return 0.0, 0.0, float(np.mean(np.diff(right[-(window_periods + 1):, 0])))
    for seq, mean in ((r_x, a_max), (l_x, a_min)):
        scale = max(abs(mean), 1e-9)
        if (seq.max() - seq.min()) / scale >= rel_tol:
            return None
    if a_min < 0:
        return None
    period = float(np.mean(np.diff(right[-(window_periods + 1):, 0])))
    return a_min, a_max, period
