"""Atomic frequency comb memory simulator with spin-wave storage."""

from afcmem.spectral import (
    AbsorptionProfile,
    CombSpec,
    PeakShape,
    build_comb,
    coarse_grained_depth,
    effective_depth,
    finesse,
    multimode_capacity,
)
from afcmem.pulses import (
    Direction,
    InstantPulse,
    PulseEnvelope,
    Transition,
    gaussian_pulse,
    ideal_pulse,
    instantaneous_frequency,
    pulse_area,
    sech_pulse,
    square_pulse,
)
from afcmem.atoms import (
    AtomState,
    FrequencyClass,
    band_averaged_transfer,
    evolve,
    transfer_efficiency,
)
from afcmem.medium import (
    FieldRecord,
    Medium1D,
    afc_echo_efficiency,
    phase_match_direction,
    propagate,
    transmitted_fraction,
)
from afcmem.collective import (
    AtomSample,
    collective_intensity,
    dephasing_factor,
    echo_time,
    sample_atoms,
    spin_freeze_resume,
)
from afcmem.protocol import (
    ControlSpec,
    EfficiencyReport,
    StorageSequence,
    efficiency_model,
    run_afc_echo,
    run_multimode,
    run_spinwave_storage,
    timing_sweep,
)
from afcmem.optimize import OptimizationResult, SearchSpace, optimize_comb, optimize_control

__all__ = [
    "AbsorptionProfile",
    "AtomSample",
    "AtomState",
    "CombSpec",
    "ControlSpec",
    "Direction",
    "EfficiencyReport",
    "FieldRecord",
    "FrequencyClass",
    "InstantPulse",
    "Medium1D",
    "OptimizationResult",
    "PeakShape",
    "PulseEnvelope",
    "SearchSpace",
    "StorageSequence",
    "Transition",
    "afc_echo_efficiency",
    "band_averaged_transfer",
    "build_comb",
    "coarse_grained_depth",
    "collective_intensity",
    "dephasing_factor",
    "echo_time",
    "effective_depth",
    "efficiency_model",
    "evolve",
    "finesse",
    "gaussian_pulse",
    "ideal_pulse",
    "instantaneous_frequency",
    "multimode_capacity",
    "optimize_comb",
    "optimize_control",
    "phase_match_direction",
    "propagate",
    "pulse_area",
    "run_afc_echo",
    "run_multimode",
    "run_spinwave_storage",
    "sample_atoms",
    "sech_pulse",
    "spin_freeze_resume",
    "square_pulse",
    "timing_sweep",
    "transfer_efficiency",
    "transmitted_fraction",
]

__version__ = "0.1.0"
