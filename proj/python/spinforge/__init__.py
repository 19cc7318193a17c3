"""NV electron-nitrogen two-qubit gate simulation and characterisation."""

from ._core import (
    ConfigError,
    NumericalError,
    avg_gate_fidelity,
    default_calibration,
    default_params,
    depolarizing,
    error_generator,
    experiment_names,
    fit_params,
    gst_round_trip,
    hamiltonian,
    ideal_natives,
    level_frequencies,
    mean_native_length,
    measured_frequencies,
    occurrence_weighted_fidelity,
    process_fidelity,
    ptm_of_unitary,
    run_experiment,
    run_rb,
    simulate_gate,
    solve_tau,
    ssro_correct,
    swap_channel,
    swap_curve,
    target_gate_set,
)

__all__ = [name for name in dir() if not name.startswith("_")]
