"""Semi-analytic cycle oracle: damped arcs joined by velocity kicks.

Away from the resonance positions x_k = k*lambda/2 the mirror follows the
closed-form underdamped oscillator.  Each crossing of an x_k exchanges a
fixed quantum of work with the light field:

    forward:   W+ =  hbar*alpha_L^2*pi/kappa + 3*hbar^2*alpha_L^4*g*pi/(8*m*kappa^4*v-)
    backward:  W- = -hbar*alpha_L^2*pi/kappa - 3*hbar^2*alpha_L^4*g*pi/(8*m*kappa^4*v+)

applied as instantaneous velocity jumps v -> sqrt(v^2 + 2W/m).  A backward
crossing whose radicand goes non-positive is *blocked*: the light barrier
reflects the mirror and the crossing becomes a turning point at x_k.

Composing arcs and kicks from (-A_min, 0) out to the right turning point
and back gives a return map A_min -> A_min'; its fixed points are the
self-sustained cycles, and the work/dissipation balance

    sum_k (W+ + W-) = E_gamma

holds there by construction.  Because the kick work is identically the
kinetic-energy jump, the audit residual telescopes to the cycle closure
error, so fixed points are refined well past the nominal tolerance.

The 1/v correction is perturbative: whenever it exceeds half the leading
term the kick (and any cycle containing it) is flagged as outside the
approximation's validity rather than silently clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .params import ParameterError, SystemParams, coupling_strength, drive_amplitude


class KickmapError(RuntimeError):
    """Arc propagation or cycle mapping failed (runaway or root-finder trouble)."""


@dataclass(frozen=True)
class ArcState:
    x: float   # position [m]
    v: float   # velocity [m/s]
    t: float   # time [s]


@dataclass(frozen=True)
class ArcEvent:
    kind: str         # 'crossing' | 'turning'
    state: ArcState   # state at the event
    k: int | None     # resonance index for crossings


@dataclass(frozen=True)
class Kick:
    k: int            # resonance index
    direction: int    # +1 forward, -1 backward
    v_before: float   # [m/s]
    v_after: float    # [m/s]; equal v_before magnitude => blocked
    work: float       # [J]
    valid: bool       # 1/v correction below half the leading term
    blocked: bool = False


@dataclass(frozen=True)
class CycleCandidate:
    a_min_in: float                 # starting left amplitude [m]
    a_max: float                    # right turning amplitude [m]
    a_min_out: float                # left amplitude after the return half [m]
    residual: float                 # a_min_out - a_min_in [m]
    kicks: tuple = ()               # Kick log, forward then backward
    e_gamma: float = 0.0            # damping loss over all arcs [J]
    valid: bool = True              # every kick inside perturbative validity

    @property
    def a_bar(self) -> float:
        return math.sqrt((self.a_min_in**2 + self.a_max**2) / 2.0)


@dataclass(frozen=True)
class FixedCycle:
    a_min: float
    a_max: float
    a_bar: float
    stable: bool          # |return-map slope| < 1 (finite-difference estimate)
    valid: bool           # no approximation-invalid kicks on the cycle
    balance_lhs: float    # sum of kick works [J]
    balance_rhs: float    # E_gamma [J]
    balance_residual: float
    candidate: CycleCandidate


def _damped_coeffs(params: SystemParams):
    w = params.omega_m
    g2 = params.gamma / 2.0
    if g2 >= w:
        raise ParameterError("kick map requires the underdamped regime gamma < 2*omega_m")
    wd = math.sqrt(w * w - g2 * g2)
    return wd, g2


def arc_position(params: SystemParams, start: ArcState, dt: float) -> tuple[float, float]:
    """Closed-form (x, v) a time dt after `start` on a light-free arc."""
    wd, g2 = _damped_coeffs(params)
    w2 = params.omega_m**2
    x0, v0 = start.x, start.v
    cx = x0
    sx = (v0 + g2 * x0) / wd
    cv = v0
    sv = -(w2 * x0 + g2 * v0) / wd
    env = math.exp(-g2 * dt)
    c = math.cos(wd * dt)
    s = math.sin(wd * dt)
    return env * (cx * c + sx * s), env * (cv * c + sv * s)


def _first_turning_time(params: SystemParams, start: ArcState) -> float:
    """First strictly positive root of v(t) = 0 on the arc."""
    wd, g2 = _damped_coeffs(params)
    w2 = params.omega_m**2
    av = start.v
    bv = (w2 * start.x + g2 * start.v) / wd
    # v(t) ~ av*cos(wd t) - bv*sin(wd t) = R*cos(wd t + phi); zeros pi/wd apart
    phi = math.atan2(bv, av)
    half = math.pi / wd
    t = math.fmod((math.pi / 2.0 - phi) / wd, half)
    eps = 1e-12 * 2 * math.pi / wd
    if t <= eps:
        t += half
    return t


def damped_arc(params: SystemParams, start: ArcState) -> ArcEvent:
    """Propagate the analytic damped arc to its next event.

    The next event is either the first resonance position x_k in the
    direction of motion (if reached before the велocity zero) or the
    turning point.  Event times come from safeguarded root-finding on the
    closed-form solution; x is monotone along the arc, so the bracket is
    guaranteed.
    """
    h = params.half_wavelength
    t_turn = _first_turning_time(params, start)
    x_turn, _ = arc_position(params, start, t_turn)

    direction = 1 if start.v > 0 else (-1 if start.v < 0 else (1 if start.x < 0 else -1))

    # next grid index strictly beyond the start in the travel direction;
    # starts lying exactly on a grid point step over it
    ratio = start.x / h
    near = round(ratio)
    on_grid = abs(ratio - near) < 1e-9
    if direction > 0:
        k_next = near + 1 if on_grid else math.floor(ratio) + 1
        reached = x_turn >= k_next * h
    else:
        k_next = near - 1 if on_grid else math.ceil(ratio) - 1
        reached = x_turn <= k_next * h

    if not reached:
        return ArcEvent("turning", ArcState(x_turn, 0.0, start.t + t_turn), None)

    x_target = k_next * h

    def f(t):
        return arc_position(params, start, t)[0] - x_target

    t_cross = brentq(f, 0.0, t_turn, xtol=1e-18, rtol=8.9e-16, maxiter=200)
    x_c, v_c = arc_position(params, start, t_cross)
    # land exactly on the grid point; the analytic v at the root is kept
    return ArcEvent("crossing", ArcState(x_target, v_c, start.t + t_cross), k_next)


def _kick_energies(params: SystemParams, k: int) -> tuple[float, float]:
    """(leading work B [J], 1/v coefficient C [J*m/s]) for resonance k."""
    al2 = drive_amplitude(params) ** 2
    b = params.hbar * al2 * math.pi / params.kappa
    c = (
        3.0 * params.hbar**2 * al2**2 * coupling_strength(params, k) * math.pi
        / (8.0 * params.mass * params.kappa**4)
    )
    return b, c


def kick_work(params: SystemParams, k: int, v_approach: float, direction: int) -> float:
    """Work done by the light on one crossing of x_k [J].

    direction +1 (forward) requires v_approach > 0 and yields positive
    work; -1 (backward) requires v_approach < 0 and yields negative work.
    Callers are responsible for only invoking this when x_k is actually
    crossed (see `resonance_in_range`).
    """
    if v_approach == 0.0:
        raise ParameterError("kick work diverges at zero approach velocity")
    if direction not in (-1, 1):
        raise ParameterError(f"direction must be +-1, got {direction}")
    if direction * v_approach <= 0:
        raise ParameterError(
            f"approach velocity {v_approach} inconsistent with direction {direction}"
        )
    b, c = _kick_energies(params, k)
    if direction > 0:
        return b + c / v_approach
    return -b - c / v_approach


def kick_valid(params: SystemParams, k: int, v_approach: float, limit: float = 0.5) -> bool:
    """Perturbative validity: the 1/v correction below `limit` of the leading term."""
    b, c = _kick_energies(params, k)
    if b == 0.0:
        return True  # dark cavity: no kick at all
    return abs(c / v_approach) <= limit * b


def resonance_in_range(params: SystemParams, k: int, a_min: float, a_max: float) -> bool:
    """Whether x_k lies inside the oscillation range [-a_min, a_max]."""
    xk = k * params.half_wavelength
    return -a_min <= xk <= a_max


def forward_kick(params: SystemParams, k: int, v_minus: float) -> Kick:
    """Velocity jump for a forward crossing; always accelerates."""
    if v_minus <= 0:
        raise ParameterError(f"forward kick requires v > 0, got {v_minus}")
    work = kick_work(params, k, v_minus, +1)
    v_plus = math.sqrt(v_minus * v_minus + 2.0 * work / params.mass)
    return Kick(
        k=k, direction=+1, v_before=v_minus, v_after=v_plus, work=work,
        valid=kick_valid(params, k, v_minus),
    )


def backward_kick(params: SystemParams, k: int, v_plus: float) -> Kick:
    """Velocity jump for a backward crossing, or a blocked reflection.

    The radicand v+^2 + 2*W-/m can go non-positive for slow approaches:
    the mirror cannot pass and is reflected at x_k (blocked).
    """
    if v_plus >= 0:
        raise ParameterError(f"backward kick requires v < 0, got {v_plus}")
    work = kick_work(params, k, v_plus, -1)
    radicand = v_plus * v_plus + 2.0 * work / params.mass
    if radicand <= 0.0:
        return Kick(
            k=k, direction=-1, v_before=v_plus, v_after=0.0, work=work,
            valid=kick_valid(params, k, v_plus), blocked=True,
        )
    return Kick(
        k=k, direction=-1, v_before=v_plus, v_after=-math.sqrt(radicand), work=work,
        valid=kick_valid(params, k, v_plus),
    )


_MAX_EVENTS = 10_000


def half_cycle_map(params: SystemParams, a_start: float, direction: int):
    """One half-cycle of the piecewise arc/kick dynamics.

    direction +1: from (-a_start, 0) through forward kicks to the right
    turning point; returns (a_end = x_turn, kicks).  direction -1: from
    (+a_start, 0) through backward kicks to the left turning point;
    returns (a_end = -x_turn, kicks); a blocked crossing turns the mirror
    around at x_k itself.
    """
    if a_start <= 0:
        raise ParameterError("half-cycle map needs a positive starting amplitude")
    if drive_amplitude(params) == 0.0:
        # dark cavity: single pure arc, no kicks
        start = ArcState(-direction * a_start, 0.0, 0.0)
        ev = damped_arc(params, start)
        # with no grid interactions the arc still reports grid crossings;
        # walk through them without kicks
        kicks: list = []
        while ev.kind == "crossing":
            ev = damped_arc(params, ev.state)
        return direction * ev.state.x, tuple(kicks)

    state = ArcState(-direction * a_start, 0.0, 0.0)
    kicks = []
    for _ in range(_MAX_EVENTS):
        ev = damped_arc(params, state)
        if ev.kind == "turning":
            return direction * ev.state.x, tuple(kicks)
        if direction > 0:
            kick = forward_kick(params, ev.k, ev.state.v)
        else:
            kick = backward_kick(params, ev.k, ev.state.v)
        kicks.append(kick)
        if kick.blocked:
            # reflection at x_k: the crossing is the turning point
            return direction * ev.state.x, tuple(kicks)
        state = ArcState(ev.state.x, kick.v_after, ev.state.t)
    raise KickmapError(
        f"no turning point after {_MAX_EVENTS} events (a_start = {a_start}, "
        f"direction = {direction}); parameters outside the model's validity"
    )


def full_cycle_map(params: SystemParams, a_min_in: float) -> CycleCandidate:
    """Forward half then backward half; the complete return map on A_min.

    E_gamma comes from the exact telescoping of arc endpoint energies:
    every arc loses (E_start - E_end) to damping and every kick adds its
    work, so the total arc loss over the cycle is

        E_gamma = E(-a_min_in, 0) - E(-a_min_out, 0) + sum of kick works.
    """
    a_max, fwd = half_cycle_map(params, a_min_in, +1)
    a_min_out, bwd = half_cycle_map(params, a_max, -1)
    kicks = tuple(fwd) + tuple(bwd)
    total_work = sum(k.work for k in kicks)
    e_in = _energy(params, a_min_in, 0.0)
    e_out = _energy(params, a_min_out, 0.0)
    return CycleCandidate(
        a_min_in=a_min_in,
        a_max=a_max,
        a_min_out=a_min_out,
        residual=a_min_out - a_min_in,
        kicks=kicks,
        e_gamma=e_in - e_out + total_work,
        valid=all(k.valid for k in kicks),
    )


def _energy(params: SystemParams, x: float, v: float = 0.0) -> float:
    return 0.5 * params.mass * (v * v + params.omega_m**2 * x * x)


def balance_audit(params: SystemParams, candidate: CycleCandidate):
    """(lhs, rhs, relative residual) of the work/dissipation balance.

    lhs = sum of kick works, rhs = E_gamma from the arc energy ledger.
    lhs - rhs telescopes to the cycle-closure energy error, so the
    residual vanishes exactly at a fixed point (up to root tolerance) and
    its sign matches the sign of the map residual elsewhere.
    """
    lhs = sum(k.work for k in candidate.kicks)
    rhs = candidate.e_gamma
    denom = max(abs(lhs), rhs)
    residual = 0.0 if denom == 0.0 else abs(lhs - rhs) / denom
    return lhs, rhs, residual


def default_amplitude_grid() -> np.ndarray:
    """60 points spanning 0.1-6 um; resolves the half-wavelength shell spacing."""
    return np.linspace(0.1e-6, 6e-6, 60)


def find_fixed_cycles(
    params: SystemParams,
    a_grid: np.ndarray | None = None,
    slope_delta: float | None = None,
) -> list[FixedCycle]:
    """Locate and classify the closed cycles of the return map.

    Evaluates r(a) = a_min_out(a) - a on the grid, brackets sign changes,
    and bisects each bracket (well past the nominal lambda/1e4 tolerance,
    so the balance audit closes to root precision).  The stability flag
    compares the finite-difference return-map slope magnitude |1 + dr/da|
    against 1; this classification is a construction of this library, not
    part of the arc/kick model itself.
    """
    if a_grid is None:
        a_grid = default_amplitude_grid()
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size == 0:
        raise ParameterError("amplitude grid must be non-empty")
    if a_grid.size > 1 and not np.all(np.diff(a_grid) > 0):
        raise ParameterError("amplitude grid must be strictly increasing")
    if np.any(a_grid <= 0):
        raise ParameterError("amplitude grid must be positive")
    if drive_amplitude(params) == 0.0:
        return []  # dark cavity: only the trivial rest state

    if slope_delta is None:
        slope_delta = params.lambda_l / 2000.0
    tol_amp = params.lambda_l / 1e4

    def residual_at(a):
        # grazing crossings (v -> 0 exactly at a shell) blow the 1/v term
        # up into a runaway excursion; such amplitudes are isolated map
        # discontinuities and are simply masked out
        try:
            return full_cycle_map(params, a).residual
        except KickmapError:
            return math.nan

    residuals = np.array([residual_at(a) for a in a_grid])

    roots: list[float] = []
    for i in range(a_grid.size - 1):
        r0, r1 = residuals[i], residuals[i + 1]
        if not (np.isfinite(r0) and np.isfinite(r1)):
            continue
        if r0 == 0.0:
            roots.append(float(a_grid[i]))
            continue
        if r0 * r1 < 0:
            lo, hi = float(a_grid[i]), float(a_grid[i + 1])
            rlo = r0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid == lo or mid == hi:
                    break  # bracket exhausted at float resolution
                rm = residual_at(mid)
                if math.isnan(rm):
                    # nudge off the pathological amplitude
                    rm = residual_at(lo + 0.4 * (hi - lo))
                    if math.isnan(rm):
                        break
                    mid = lo + 0.4 * (hi - lo)
                if rm == 0.0:
                    lo = hi = mid
                    break
                if rlo * rm < 0:
                    hi = mid
                else:
                    lo, rlo = mid, rm
            root = 0.5 * (lo + hi)
            r_root = residual_at(root)
            if math.isfinite(r_root) and abs(r_root) <= tol_amp:
                roots.append(root)

    cycles = []
    for a in roots:
        cand = full_cycle_map(params, a)
        d = slope_delta
        r_plus = residual_at(a + d)
        r_minus = residual_at(max(a - d, 1e-12))
        drda = (r_plus - r_minus) / (a + d - max(a - d, 1e-12))
        stable = bool(abs(1.0 + drda) < 1.0) if math.isfinite(drda) else False
        lhs, rhs, res = balance_audit(params, cand)
        cycles.append(
            FixedCycle(
                a_min=cand.a_min_in,
                a_max=cand.a_max,
                a_bar=cand.a_bar,
                stable=stable,
                valid=cand.valid,
                balance_lhs=lhs,
                balance_rhs=rhs,
                balance_residual=res,
                candidate=cand,
            )
        )
    return cycles
