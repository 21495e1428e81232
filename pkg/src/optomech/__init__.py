"""Multimode cavity optomechanics in the large-swing regime.

A movable cavity mirror sweeping across many half-wavelengths excites a
ladder of longitudinal modes, each kicking it at the resonance positions
x_k = k*lambda/2.  The package integrates the coupled mirror/mode dynamics,
extracts limit cycles and multistable branches, and cross-checks them
against a semi-analytic kick map built on per-crossing work formulas.
"""

from .params import (
    CONFIG_KEYS,
    DEFAULT_CONFIG,
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
from .dynamics import (
    FullState,
    MirrorState,
    ModeSet,
    adiabatic_mode_amplitude,
    adiabatic_modeset,
    adiabatic_photon_number,
    initial_state,
    mechanical_energy,
    mirror_rhs,
    mode_rhs,
    radiation_force,
)
from .integrator import (
    EnergyLedger,
    IntegratorConfig,
    NumericalBlowupError,
    Trajectory,
    integrate,
    ledger_residual,
    rk4_step,
)
from .cycles import (
    Branch,
    BranchSet,
    CycleRun,
    LimitCycle,
    cluster_branches,
    detect_limit_cycle,
    equilibrium_shift,
    run_to_cycle,
    sawtooth_profile,
    seed_velocities,
    turning_points,
)
from .kickmap import (
    ArcEvent,
    ArcState,
    CycleCandidate,
    FixedCycle,
    Kick,
    KickmapError,
    backward_kick,
    balance_audit,
    damped_arc,
    find_fixed_cycles,
    forward_kick,
    full_cycle_map,
    half_cycle_map,
    kick_valid,
    kick_work,
    resonance_in_range,
)
from .sweep import (
    ComparisonReport,
    EnsembleSpec,
    SweepPlan,
    compare_oracles,
    continuation_sweep,
    duffing_sweep,
    power_sweep,
)

__version__ = "0.1.0"
