"""Equations of motion: fixed points, force properties, quasi-static photon number."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech import (
    FullState,
    MirrorState,
    ModeSet,
    SystemParams,
    adiabatic_mode_amplitude,
    adiabatic_photon_number,
    coupling_strength,
    drive_amplitude,
    initial_state,
    mirror_rhs,
    mode_frequency,
    mode_rhs,
    radiation_force,
)
from optomech.dynamics import adiabatic_velocity_correction_ok, mechanical_energy, restoring_force


@pytest.fixture
def desk():
    return SystemParams.desk_defaults(power=1.0)


def _single_mode_state(params, x, alpha, k=0, p=0.0):
    return FullState(
        mirror=MirrorState(x=x, p=p),
        modes=ModeSet(window=range(k, k + 1), amplitudes=np.array([alpha])),
        time=0.0,
    )


def test_mode_rhs_undriven_vacuum(desk):
    dark = desk.with_power(0.0)
    st0 = _single_mode_state(dark, x=0.0, alpha=0.0)
    assert mode_rhs(st0, 0, dark) == 0.0


def test_mode_rhs_fixed_point_zero_detuning(desk):
    # frozen mirror at x_0: alpha* = -i alpha_L / kappa
    al = drive_amplitude(desk)
    alpha_star = -1j * al / desk.kappa
    st0 = _single_mode_state(desk, x=0.0, alpha=alpha_star)
    assert abs(mode_rhs(st0, 0, desk)) < 1e-8 * al
    assert abs(alpha_star) ** 2 == pytest.approx(al**2 / desk.kappa**2, rel=1e-14)


@pytest.mark.parametrize("detuning_over_kappa", [0.0, 0.5, 1.0, 5.0])
def test_mode_rhs_fixed_point_detuned(desk, detuning_over_kappa):
    # solve the linear fixed point independently: alpha* = -i*a_L/(i*Delta + kappa)
    delta = detuning_over_kappa * desk.kappa
    g = coupling_strength(desk, 0)
    x = -delta / g  # linearized detuning Delta ~ -g(x - x_0)
    delta_exact = mode_frequency(desk, 0, x) - desk.omega_l
    al = drive_amplitude(desk)
    alpha_star = -1j * al / (1j * delta_exact + desk.kappa)
    st0 = _single_mode_state(desk, x=x, alpha=alpha_star)
    assert abs(mode_rhs(st0, 0, desk)) < 1e-9 * al
    assert abs(alpha_star) ** 2 == pytest.approx(
        al**2 / (delta_exact**2 + desk.kappa**2), rel=1e-12
    )


def test_mode_rhs_modulus_balance(desk):
    # d|alpha|^2/dt = 2 Re(conj(alpha) * dalpha/dt) = -2 kappa |a|^2 - 2 a_L Im(a)
    rng = np.random.default_rng(7)
    for _ in range(20):
        alpha = complex(rng.normal(), rng.normal()) * 1e4
        x = rng.uniform(-1e-9, 1e-9)
        st0 = _single_mode_state(desk, x=x, alpha=alpha)
        lhs = 2 * (mode_rhs(st0, 0, desk) * np.conj(alpha)).real
        rhs = -2 * desk.kappa * abs(alpha) ** 2 - 2 * drive_amplitude(desk) * alpha.imag
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_radiation_force_examples(desk):
    dark = _single_mode_state(desk, x=0.0, alpha=0.0)
    assert radiation_force(dark, desk) == 0.0

    # single resonant mode at steady state, P = 1 W: F ~ hbar g (alpha_L/kappa)^2
    al = drive_amplitude(desk)
    st0 = _single_mode_state(desk, x=0.0, alpha=-1j * al / desk.kappa)
    f = radiation_force(st0, desk)
    assert f == pytest.approx(desk.hbar * coupling_strength(desk, 0) * (al / desk.kappa) ** 2, rel=1e-9)
    assert f == pytest.approx(4.0e-7, rel=2e-2)

    # cross-check against 2 * P_circ / c: n photons hit the mirror every round trip
    n_photons = (al / desk.kappa) ** 2
    p_circ = n_photons * desk.hbar * desk.omega_l * desk.c / (2 * desk.L0)
    assert f == pytest.approx(2 * p_circ / desk.c, rel=1e-9)


@given(phase=st.floats(0, 2 * math.pi), n=st.floats(0, 1e10))
@settings(max_examples=100, deadline=None)
def test_radiation_force_phase_invariant_and_nonnegative(phase, n):
    desk = SystemParams.desk_defaults(power=1.0)
    alpha = math.sqrt(n) * complex(math.cos(phase), math.sin(phase))
    st0 = _single_mode_state(desk, x=0.3e-6, alpha=alpha)
    ref = _single_mode_state(desk, x=0.3e-6, alpha=math.sqrt(n))
    assert radiation_force(st0, desk) >= 0.0
    assert radiation_force(st0, desk) == pytest.approx(radiation_force(ref, desk), rel=1e-12, abs=1e-30)


def test_mirror_rhs_equilibrium(desk):
    dark = desk.with_power(0.0)
    st0 = _single_mode_state(dark, x=0.0, alpha=0.0)
    assert mirror_rhs(st0, dark) == (0.0, 0.0)


def test_mirror_rhs_duffing_reduction(desk):
    # duffing_alpha = 0 gives the plain harmonic restoring force
    assert restoring_force(desk, 1e-6) == -desk.mass * desk.omega_m**2 * 1e-6
    # x = 1 um, alpha = 1e12 m^-2 doubles the restoring force
    stiff = desk.with_duffing_alpha(1e12)
    assert restoring_force(stiff, 1e-6) == pytest.approx(2 * restoring_force(desk, 1e-6), rel=1e-14)


def test_mechanical_energy_quartic_consistency(desk):
    # potential consistent with the force: E_pot = 1/2 m w^2 x^2 + 1/4 m w^2 a x^4
    stiff = desk.with_duffing_alpha(3e11)
    x, dx = 0.8e-6, 1e-12
    de = mechanical_energy(stiff, x + dx, 0.0) - mechanical_energy(stiff, x - dx, 0.0)
    assert -de / (2 * dx) == pytest.approx(restoring_force(stiff, x), rel=1e-6)


def test_adiabatic_photon_number_static_values(desk):
    al2 = drive_amplitude(desk) ** 2
    # on resonance, at rest: alpha_L^2 / kappa^2
    assert adiabatic_photon_number(desk, 0, 0.0, 0.0) == pytest.approx(al2 / desk.kappa**2, rel=1e-14)
    # at rest, any x: plain Lorentzian
    g = coupling_strength(desk, 0)
    for dx in (0.3e-9, 2e-9, 40e-9):
        expected = al2 / (g * g * dx * dx + desk.kappa**2)
        assert adiabatic_photon_number(desk, 0, dx, 0.0) == pytest.approx(expected, rel=1e-6)


def test_adiabatic_photon_number_clamps(desk):
    # large backward velocity just past resonance drives the bracket negative
    g = coupling_strength(desk, 0)
    dx = desk.kappa / g / math.sqrt(3)  # near the steepest point of the correction
    v = -1e3
    assert adiabatic_photon_number(desk, 0, dx, v) == 0.0
    raw = adiabatic_photon_number(desk, 0, dx, v, clamp=False)
    assert raw < 0.0
    assert not adiabatic_velocity_correction_ok(desk, 0, dx, v)


def _sweep_mode_amplitude(params, k, x0, v, t_end, dt):
    """Independent oracle: integrate the single-mode equation along x(t) = x0 + v t
    with classic RK4, returning (positions, photon numbers)."""
    al = drive_amplitude(params)

    def rhs(t, alpha):
        x = x0 + v * t
        delta = mode_frequency(params, k, x) - params.omega_l
        return -1j * delta * alpha - 1j * al - params.kappa * alpha

    n = int(round(t_end / dt))
    alpha = adiabatic_mode_amplitude(params, k, x0)
    xs = np.empty(n + 1)
    ns = np.empty(n + 1)
    xs[0], ns[0] = x0, abs(alpha) ** 2
    t = 0.0
    for i in range(n):
        k1 = rhs(t, alpha)
        k2 = rhs(t + dt / 2, alpha + dt / 2 * k1)
        k3 = rhs(t + dt / 2, alpha + dt / 2 * k2)
        k4 = rhs(t + dt, alpha + dt * k3)
        alpha = alpha + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        xs[i + 1], ns[i + 1] = x0 + v * t, abs(alpha) ** 2
    return xs, ns


@pytest.mark.parametrize("v_factor", [0.05, 0.1])
def test_adiabatic_photon_number_vs_full_sweep(v_factor):
    # slow passage: |v| well below kappa^2/g; peaks must agree within 5%
    params = SystemParams.desk_defaults(power=11.0)
    g = coupling_strength(params, 0)
    v = v_factor * params.kappa**2 / g
    width = params.kappa / g
    x0 = -30 * width
    t_end = 2 * abs(x0) / v
    # step limited by both the cavity decay and the starting detuning g|x0|
    dt = min(0.02 / params.kappa, 2.0 / (g * abs(x0)))
    xs, ns = _sweep_mode_amplitude(params, 0, x0, v, t_end, dt)
    n_peak_ode = ns.max()
    grid = np.linspace(-3 * width, 3 * width, 3001)
    n_peak_model = max(adiabatic_photon_number(params, 0, x, v) for x in grid)
    assert n_peak_ode == pytest.approx(n_peak_model, rel=0.05)
    # and the zeroth-order static peak alone is biased low: velocity lag matters
    n_static = adiabatic_photon_number(params, 0, 0.0, 0.0)
    assert n_peak_ode > n_static * 0.8


def test_initial_state_prerelaxed(desk):
    st0 = initial_state(desk, x=0.2e-6, v=3.0)
    for k in st0.modes.window:
        dalpha = mode_rhs(st0, k, desk)
        # adiabatic start: residual derivative only from the drive-free terms
        assert abs(dalpha) < 1e-6 * max(abs(st0.modes.amplitude(k)), 1.0) * desk.kappa
