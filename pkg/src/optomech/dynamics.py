"""Equations of motion for the coupled mirror/multimode-cavity system.

Mode amplitudes follow

    d alpha_{N+k}/dt = -i*(omega_{N+k}(x) - omega_l)*alpha - i*alpha_L - kappa*alpha

and the mirror obeys

    dx/dt = p/m
    dp/dt = -m*omega_m^2*(1 + duffing_alpha*x^2)*x + F_rad - gamma*p

with the radiation force F_rad = hbar * sum_k (N+k)*pi*c/(x+L0)^2 * |alpha_{N+k}|^2.
duffing_alpha = 0 recovers the harmonic mirror exactly.

The quasi-static (fast-cavity) photon number near one resonance is also
provided: a Lorentzian of half-width kappa/g in position, with a first-order
velocity correction that captures the field lag responsible for the net
work exchange on each resonance passage.

Everything here is a pure function of state; the compiled integrator has
its own scaled-unit transcription which is tested against these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import (
    GeometryError,
    SystemParams,
    coupling_strength,
    drive_amplitude,
    mode_frequency,
    resonance_position,
)


@dataclass(frozen=True)
class MirrorState:
    x: float  # position [m]
    p: float  # momentum [kg*m/s]

    def velocity(self, params: SystemParams) -> float:
        return self.p / params.mass


@dataclass(frozen=True)
class ModeSet:
    """Complex amplitudes alpha_{N+k} for a contiguous window of offsets k."""

    window: range                 # integer offsets k
    amplitudes: np.ndarray        # complex, same length as window

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "amplitudes", amps)
        if len(self.window) != amps.shape[0]:
            raise ValueError(
                f"window has {len(self.window)} offsets but "
                f"{amps.shape[0]} amplitudes were given"
            )

    def amplitude(self, k: int) -> complex:
        if k not in self.window:
            raise KeyError(f"mode offset {k} outside window {self.window}")
        return complex(self.amplitudes[k - self.window.start])

    def photon_numbers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def total_photons(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class FullState:
    mirror: MirrorState
    modes: ModeSet
    time: float = 0.0  # [s]


def adiabatic_mode_amplitude(params: SystemParams, k: int, x: float) -> complex:
    """Zeroth-order slaved amplitude -i*alpha_L / (i*Delta + kappa) at fixed x."""
    delta = mode_frequency(params, k, x) - params.omega_l
    return -1j * drive_amplitude(params) / (1j * delta + params.kappa)


def adiabatic_modeset(params: SystemParams, x: float, window: range) -> ModeSet:
    """ModeSet with every mode at its zeroth-order adiabatic value at position x."""
    amps = np.array(
        [adiabatic_mode_amplitude(params, k, x) for k in window], dtype=np.complex128
    )
    return ModeSet(window=window, amplitudes=amps)


def initial_state(
    params: SystemParams, x: float = 0.0, v: float = 0.0, window: range | None = None
) -> FullState:
    """Mirror at (x, m*v) with modes pre-relaxed to their adiabatic values.

    Starting the fields on their slaved values avoids an artificial
    transient spike at t = 0.
    """
    if window is None:
        from .params import active_window

        window = active_window(params, x, x, margin=2)
    return FullState(
        mirror=MirrorState(x=x, p=params.mass * v),
        modes=adiabatic_modeset(params, x, window),
        time=0.0,
    )


def mode_rhs(state: FullState, k: int, params: SystemParams) -> complex:
    """Time derivative of alpha_{N+k}."""
    x = state.mirror.x
    alpha = state.modes.amplitude(k)
    delta = mode_frequency(params, k, x) - params.omega_l
    return -1j * delta * alpha - 1j * drive_amplitude(params) - params.kappa * alpha


def radiation_force(state: FullState, params: SystemParams) -> float:
    """Radiation pressure on the mirror [N]; non-negative (pushes outward)."""
    x = state.mirror.x
    length = x + params.L0
    if length <= 0:
        raise GeometryError(f"mirror position x = {x} collapses the cavity")
    orders = params.N + np.asarray(state.modes.window)
    n_photons = state.modes.photon_numbers()
    return float(params.hbar * math.pi * params.c / length**2 * np.dot(orders, n_photons))


def restoring_force(params: SystemParams, x: float) -> float:
    """Mechanical restoring force -m*omega_m^2*(1 + alpha*x^2)*x [N]."""
    return -params.mass * params.omega_m**2 * (1.0 + params.duffing_alpha * x * x) * x


def mirror_rhs(state: FullState, params: SystemParams) -> tuple[float, float]:
    """(dx/dt, dp/dt) for the mirror."""
    v = state.mirror.velocity(params)
    dpdt = (
        restoring_force(params, state.mirror.x)
        + radiation_force(state, params)
        - params.gamma * state.mirror.p
    )
    return v, dpdt


def mechanical_energy(params: SystemParams, x: float, p: float) -> float:
    """Kinetic plus potential energy [J]; quartic term consistent with the
    Duffing restoring force."""
    w2 = params.omega_m**2
    return (
        p * p / (2.0 * params.mass)
        + 0.5 * params.mass * w2 * x * x
        + 0.25 * params.mass * w2 * params.duffing_alpha * x**4
    )


def adiabatic_photon_number(
    params: SystemParams, k: int, x: float, v: float, clamp: bool = True
) -> float:
    """Quasi-static photon number of mode N+k for a mirror moving at v.

    Lorentzian in (x - x_k) of half-width kappa/g, times a first-order
    velocity correction.  The correction can drive the bracket negative
    for fast passages, outside the approximation's validity; by default
    the result is clamped at zero (photon numbers are non-negative).
    """
    g = coupling_strength(params, k)
    dx = x - resonance_position(params, k)
    lor = g * g * dx * dx + params.kappa**2
    bracket = 1.0 + 4.0 * params.kappa * g * g * dx * v / (lor * lor)
    value = drive_amplitude(params) ** 2 / lor * bracket
    if clamp and value < 0.0:
        return 0.0
    return value


def adiabatic_velocity_correction_ok(
    params: SystemParams, k: int, x: float, v: float, limit: float = 0.5
) -> bool:
    """True when the first-order velocity term is below `limit` of the
    zeroth-order Lorentzian, i.e. the quasi-static expansion is trustworthy."""
    g = coupling_strength(params, k)
    dx = x - resonance_position(params, k)
    lor = g * g * dx * dx + params.kappa**2
    return abs(4.0 * params.kappa * g * g * dx * v) <= limit * lor * lor
