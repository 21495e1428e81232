"""Physical parameters, derived scales, and cavity-resonance geometry.

A Fabry-Perot cavity of static length L0 = N*lambda_l/2 is driven on the
N-th longitudinal mode; the right mirror is a mechanical resonator
(omega_m, m, gamma).  When the mirror sits at x, the (N+k)-th mode has
frequency

    omega_{N+k}(x) = (N+k)*pi*c / (x + L0)

which crosses the drive frequency omega_l = 2*pi*c/lambda_l exactly at
x = x_k = k*lambda_l/2.  Everything downstream (mode equations, kick
strengths, resonance bookkeeping) is built from the helpers here.

All public values are SI.  Integrators work in scaled units (ScaledUnits):
time in 1/omega_m, length in lambda_l/2, mode amplitude in alpha_L/omega_m,
which keeps every state component within a few orders of magnitude of 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

# CODATA values, compiled in; config files may not override them.
HBAR = 1.054571817e-34  # reduced Planck constant [J*s]
C_LIGHT = 299792458.0   # speed of light [m/s]

#: config keys accepted by load_config / from_config, in documentation order
CONFIG_KEYS = (
    "omega_m_hz",
    "mass_kg",
    "gamma_over_omega_m",
    "kappa_over_omega_m",
    "lambda_nm",
    "n_order",
    "power_w",
    "duffing_alpha_per_m2",
)

#: paper-grade desk defaults: omega_m = 1e7 /s, m = 5e-15 kg, gamma = 1e-2
#: omega_m, kappa = 1e2 omega_m, lambda = 1000 nm, N = 10000
DEFAULT_CONFIG = {
    "omega_m_hz": 1.0e7,
    "mass_kg": 5.0e-15,
    "gamma_over_omega_m": 1.0e-2,
    "kappa_over_omega_m": 1.0e2,
    "lambda_nm": 1000.0,
    "n_order": 10000,
    "power_w": 1.0,
    "duffing_alpha_per_m2": 0.0,
}


class ParameterError(ValueError):
    """Invalid physical parameter or malformed configuration."""


class GeometryError(ValueError):
    """Mirror position incompatible with the cavity (x <= -L0, or mode order <= 0)."""


@dataclass(frozen=True)
class SystemParams:
    """All physical constants of the setup.  Immutable; safe to share."""

    omega_m: float        # mechanical angular frequency [rad/s]
    mass: float           # mechanical mass [kg]
    gamma: float          # mechanical damping rate [1/s]
    kappa: float          # cavity amplitude decay rate, common to all modes [1/s]
    lambda_l: float       # drive wavelength [m]
    N: int                # order of the statically resonant mode
    power: float          # drive power [W]
    duffing_alpha: float = 0.0  # cubic nonlinear constant [1/m^2]
    hbar: float = HBAR
    c: float = C_LIGHT

    def __post_init__(self):
        if self.omega_m <= 0 or self.mass <= 0 or self.kappa <= 0:
            raise ParameterError(
                f"omega_m, mass, kappa must be positive "
                f"(got {self.omega_m}, {self.mass}, {self.kappa})"
            )
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0 (got {self.gamma})")
        if self.power < 0:
            raise ParameterError(f"power must be >= 0 (got {self.power})")
        if self.lambda_l <= 0:
            raise ParameterError(f"lambda_l must be positive (got {self.lambda_l})")
        if self.N <= 0:
            raise ParameterError(f"mode order N must be positive (got {self.N})")
        if self.kappa < 10.0 * self.omega_m:
            # unresolved-sideband regime is the intended domain; the cavity
            # must respond much faster than the mechanical motion
            warnings.warn(
                f"kappa/omega_m = {self.kappa / self.omega_m:.3g} is not >> 1; "
                "the fast-cavity (unresolved sideband) assumption is weak here",
                stacklevel=2,
            )

    @property
    def L0(self) -> float:
        """Static cavity length [m]; exactly N*lambda_l/2 by construction."""
        return self.N * self.lambda_l / 2.0

    @property
    def omega_l(self) -> float:
        """Drive angular frequency 2*pi*c/lambda_l [rad/s]."""
        return 2.0 * math.pi * self.c / self.lambda_l

    @property
    def half_wavelength(self) -> float:
        """Resonance-position spacing lambda_l/2 [m]."""
        return self.lambda_l / 2.0

    @classmethod
    def from_config(cls, cfg: dict) -> "SystemParams":
        """Build from the flat key-value mapping documented in CONFIG_KEYS."""
        missing = [k for k in CONFIG_KEYS if k not in cfg]
        if missing:
            raise ParameterError(f"missing config key(s): {', '.join(missing)}")
        unknown = [k for k in cfg if k not in CONFIG_KEYS]
        if unknown:
            raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
        omega_m = float(cfg["omega_m_hz"])
        return cls(
            omega_m=omega_m,
            mass=float(cfg["mass_kg"]),
            gamma=float(cfg["gamma_over_omega_m"]) * omega_m,
            kappa=float(cfg["kappa_over_omega_m"]) * omega_m,
            lambda_l=float(cfg["lambda_nm"]) / 1e9,
            N=int(cfg["n_order"]),
            power=float(cfg["power_w"]),
            duffing_alpha=float(cfg["duffing_alpha_per_m2"]),
        )

    @classmethod
    def desk_defaults(cls, power: float = 1.0, duffing_alpha: float = 0.0) -> "SystemParams":
        """The standard desk-scale parameter set (see DEFAULT_CONFIG)."""
        cfg = dict(DEFAULT_CONFIG, power_w=power, duffing_alpha_per_m2=duffing_alpha)
        return cls.from_config(cfg)

    def with_power(self, power: float) -> "SystemParams":
        return replace(self, power=power)

    def with_duffing_alpha(self, alpha: float) -> "SystemParams":
        return replace(self, duffing_alpha=alpha)


def load_config(path) -> dict:
    """Parse a flat ``key = value`` config file into a dict.

    Lines are ``key = value`` (or ``key value``); '#' starts a comment;
    blank lines are skipped.  All CONFIG_KEYS must be present; unknown or
    repeated keys are errors.  Errors name the offending key and line.
    """
    cfg: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ParameterError(f"{path}:{lineno}: cannot parse line {raw!r}")
                key, value = parts
            key = key.strip()
            value = value.strip()
            if key not in CONFIG_KEYS:
                raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
            if key in cfg:
                raise ParameterError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                cfg[key] = int(value) if key == "n_order" else float(value)
            except ValueError as exc:
                raise ParameterError(
                    f"{path}:{lineno}: bad value for {key!r}: {value!r}"
                ) from exc
    missing = [k for k in CONFIG_KEYS if k not in cfg]
    if missing:
        raise ParameterError(f"{path}: missing config key(s): {', '.join(missing)}")
    return cfg


@dataclass(frozen=True)
class ScaledUnits:
    """Conversion factors between SI and the internal scaled system.

    scaled time   = t * omega_m           (unit: 1/omega_m seconds)
    scaled length = x / (lambda_l/2)      (unit: half-wavelengths)
    scaled mode   = alpha / (alpha_L/omega_m)

    With these, the mode equation loses its power dependence entirely:
    da/dtau = -(i*delta + kappa~)*a - i, where delta and kappa~ are in
    units of omega_m, and the on-resonance steady state is -i/kappa~.
    """

    time_scale: float       # [s] per scaled time unit
    length_scale: float     # [m] per scaled length unit
    amplitude_scale: float  # [sqrt(photons)] per scaled amplitude unit

    @classmethod
    def for_params(cls, params: SystemParams) -> "ScaledUnits":
        a_l = drive_amplitude(params)
        return cls(
            time_scale=1.0 / params.omega_m,
            length_scale=params.half_wavelength,
            # alpha_L = 0 (dark cavity) still needs a usable unit
            amplitude_scale=(a_l / params.omega_m) if a_l > 0 else 1.0,
        )

    # SI <-> scaled; round trips are exact to ~1 ulp
    def time_to_scaled(self, t: float) -> float:
        return t / self.time_scale

    def time_to_si(self, tau: float) -> float:
        return tau * self.time_scale

    def length_to_scaled(self, x: float) -> float:
        return x / self.length_scale

    def length_to_si(self, xi: float) -> float:
        return xi * self.length_scale

    def amplitude_to_scaled(self, alpha: complex) -> complex:
        return alpha / self.amplitude_scale

    def amplitude_to_si(self, a: complex) -> complex:
        return a * self.amplitude_scale


def drive_amplitude(params: SystemParams) -> float:
    """Real drive amplitude alpha_L [1/s], from |alpha_L|^2 = 2*kappa*P/(hbar*omega_l)."""
    if params.power < 0:
        raise ParameterError(f"power must be >= 0 (got {params.power})")
    return math.sqrt(2.0 * params.kappa * params.power / (params.hbar * params.omega_l))


def mode_frequency(params: SystemParams, k: int, x: float) -> float:
    """Angular frequency of mode N+k with the mirror at x: (N+k)*pi*c/(x+L0)."""
    length = x + params.L0
    if length <= 0:
        raise GeometryError(f"mirror position x = {x} collapses the cavity (x <= -L0)")
    return (params.N + k) * math.pi * params.c / length


def resonance_position(params: SystemParams, k: int) -> float:
    """Mirror position x_k = k*lambda_l/2 at which mode N+k meets the drive."""
    return k * params.half_wavelength


def coupling_strength(params: SystemParams, k: int) -> float:
    """Optomechanical coupling g_{N+k} = 4*pi*c/((N+k)*lambda_l^2) [rad/(s*m)].

    Equals |d omega_{N+k}/dx| evaluated at x = x_k.
    """
    n = params.N + k
    if n <= 0:
        raise GeometryError(f"mode order N+k = {n} must be positive")
    return 4.0 * math.pi * params.c / (n * params.lambda_l**2)


def active_window(params: SystemParams, x_min: float, x_max: float, margin: int = 2) -> range:
    """Offsets k whose resonance positions fall in [x_min, x_max] padded by margin.

    Returns every k with x_min - margin*lambda_l/2 <= x_k <= x_max + margin*lambda_l/2,
    as a range (possibly empty when x_min > x_max by more than the padding).
    """
    if x_min > x_max:
        raise ParameterError(f"x_min = {x_min} exceeds x_max = {x_max}")
    if margin < 0:
        raise ParameterError(f"margin must be >= 0 (got {margin})")
    h = params.half_wavelength
    k_lo = math.ceil((x_min - margin * h) / h - 1e-12)
    k_hi = math.floor((x_max + margin * h) / h + 1e-12)
    return range(k_lo, k_hi + 1)
