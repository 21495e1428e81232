"""Parameter handling, derived scales, and resonance geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech import (
    GeometryError,
    ParameterError,
    ScaledUnits,
    SystemParams,
    active_window,
    coupling_strength,
    drive_amplitude,
    load_config,
    mode_frequency,
    resonance_position,
)
from optomech.params import CONFIG_KEYS, DEFAULT_CONFIG


@pytest.fixture
def desk():
    return SystemParams.desk_defaults(power=1.0)


def test_desk_defaults_match_documented_values(desk):
    assert desk.omega_m == 1e7
    assert desk.mass == 5e-15
    assert desk.gamma == 1e5
    assert desk.kappa == 1e9
    assert desk.lambda_l == 1e-6
    assert desk.N == 10000
    assert desk.L0 == desk.N * desk.lambda_l / 2  # exact identity


def test_parameter_validation():
    with pytest.raises(ParameterError):
        SystemParams.desk_defaults(power=-1.0)
    with pytest.raises(ParameterError):
        SystemParams(omega_m=-1, mass=1, gamma=0, kappa=1, lambda_l=1e-6, N=10, power=0)
    # weak-sideband regime warns but does not refuse
    with pytest.warns(UserWarning):
        SystemParams(omega_m=1e7, mass=5e-15, gamma=0.0, kappa=2e7, lambda_l=1e-6, N=100, power=0)


def test_drive_amplitude_examples(desk):
    # zero drive
    assert drive_amplitude(desk.with_power(0.0)) == 0.0
    # P = 1 W, kappa = 1e9/s, lambda = 1000 nm; independent one-liner:
    expected = math.sqrt(2 * 1e9 * 1.0 / (1.054571817e-34 * 2 * math.pi * 299792458.0 / 1e-6))
    assert drive_amplitude(desk) == pytest.approx(expected, rel=1e-14)
    assert drive_amplitude(desk) == pytest.approx(1.004e14, rel=1e-3)
    # quadrupling P doubles alpha_L
    assert drive_amplitude(desk.with_power(4.0)) == pytest.approx(2 * drive_amplitude(desk), rel=1e-14)


def test_drive_amplitude_power_identity(desk):
    # alpha_L^2 * hbar * omega_l / (2 kappa) recovers the power
    for power in (0.3, 1.0, 7.0, 18.0):
        p = desk.with_power(power)
        al = drive_amplitude(p)
        assert al**2 * p.hbar * p.omega_l / (2 * p.kappa) == pytest.approx(power, rel=1e-12)


def test_mode_frequency_examples(desk):
    # static resonance: mode N at x = 0 sits exactly on the drive
    assert mode_frequency(desk, 0, 0.0) == pytest.approx(desk.omega_l, rel=1e-15)
    # mode N+3 meets the drive at x_3 = 3*lambda/2
    assert mode_frequency(desk, 3, 3 * desk.lambda_l / 2) == pytest.approx(desk.omega_l, rel=1e-15)
    # k = 0 displaced by a quarter wavelength: ratio N/(N + 1/2)
    ratio = mode_frequency(desk, 0, desk.lambda_l / 4) / desk.omega_l
    assert ratio == pytest.approx(desk.N / (desk.N + 0.5), rel=1e-12)


def test_mode_frequency_geometry_error(desk):
    with pytest.raises(GeometryError):
        mode_frequency(desk, 0, -desk.L0)


def test_resonance_positions(desk):
    assert resonance_position(desk, 0) == 0.0
    assert resonance_position(desk, 1) == pytest.approx(500e-9, rel=1e-15)
    assert resonance_position(desk, -4) == pytest.approx(-2000e-9, rel=1e-15)


def test_coupling_strength_examples(desk):
    # identity 4*pi*c/(N lambda^2) == omega_l / L0
    assert coupling_strength(desk, 0) == pytest.approx(desk.omega_l / desk.L0, rel=1e-14)
    assert coupling_strength(desk, 0) == pytest.approx(3.767e17, rel=1e-3)
    # ratio law g_{N+k}/g_N = N/(N+k)
    for k in (-7, 1, 12):
        assert coupling_strength(desk, k) / coupling_strength(desk, 0) == pytest.approx(
            desk.N / (desk.N + k), rel=1e-14
        )
    with pytest.raises(GeometryError):
        coupling_strength(desk, -desk.N)


def test_coupling_is_frequency_slope_at_resonance(desk):
    # |d omega/dx| at x_k by central finite difference
    for k in (-3, 0, 5):
        xk = resonance_position(desk, k)
        eps = 1e-12
        slope = (mode_frequency(desk, k, xk + eps) - mode_frequency(desk, k, xk - eps)) / (2 * eps)
        assert abs(slope) == pytest.approx(coupling_strength(desk, k), rel=1e-6)
        assert slope < 0  # frequency falls as the cavity lengthens


def test_mode_frequency_at_resonance_property(desk):
    for k in range(-12, 13):
        xk = resonance_position(desk, k)
        assert mode_frequency(desk, k, xk) == pytest.approx(desk.omega_l, rel=5e-16)


def test_active_window_examples(desk):
    assert list(active_window(desk, -1e-9, 1e-9, margin=0)) == [0]
    assert list(active_window(desk, -1600e-9, 2100e-9, margin=1)) == list(range(-4, 6))


@given(
    x_lo=st.floats(-3e-6, 3e-6),
    width=st.floats(0, 3e-6),
    margin=st.integers(0, 4),
)
@settings(max_examples=200, deadline=None)
def test_active_window_monotone_in_margin(x_lo, width, margin):
    desk = SystemParams.desk_defaults()
    narrow = set(active_window(desk, x_lo, x_lo + width, margin))
    wide = set(active_window(desk, x_lo, x_lo + width, margin + 1))
    assert narrow <= wide


@given(
    t=st.floats(1e-12, 1e3),
    x=st.floats(-1e-5, 1e-5),
    power=st.floats(0.1, 20),
)
@settings(max_examples=200, deadline=None)
def test_scaled_units_round_trip(t, x, power):
    units = ScaledUnits.for_params(SystemParams.desk_defaults(power=power))
    assert units.time_to_si(units.time_to_scaled(t)) == pytest.approx(t, rel=1e-14)
    assert units.length_to_si(units.length_to_scaled(x)) == pytest.approx(x, rel=1e-14)
    a = complex(x, t)
    back = units.amplitude_to_si(units.amplitude_to_scaled(a))
    assert back == pytest.approx(a, rel=1e-14)


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    lines = [f"{k} = {v}" for k, v in DEFAULT_CONFIG.items()]
    path.write_text("# desk parameters\n" + "\n".join(lines) + "\n")
    params = SystemParams.from_config(load_config(path))
    assert params == SystemParams.desk_defaults(power=DEFAULT_CONFIG["power_w"])


def test_load_config_missing_key_names_it(tmp_path):
    path = tmp_path / "bad.cfg"
    cfg = {k: v for k, v in DEFAULT_CONFIG.items() if k != "mass_kg"}
    path.write_text("\n".join(f"{k} = {v}" for k, v in cfg.items()))
    with pytest.raises(ParameterError, match="mass_kg"):
        load_config(path)


def test_load_config_unknown_key_names_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("bogus_key = 3\n")
    with pytest.raises(ParameterError, match=r"bad.cfg:1.*bogus_key"):
        load_config(path)


def test_load_config_bad_value(tmp_path):
    path = tmp_path / "bad.cfg"
    lines = [f"{k} = {v}" for k, v in DEFAULT_CONFIG.items()]
    lines[1] = "mass_kg = five"
    path.write_text("\n".join(lines))
    with pytest.raises(ParameterError, match="mass_kg"):
        load_config(path)


def test_config_keys_documented():
    assert set(DEFAULT_CONFIG) == set(CONFIG_KEYS)
