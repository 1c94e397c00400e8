//! Simulation of an N-state Rydberg data register driven by terahertz
//! half-cycle pulses: quantum-defect radial basis, momentum-kick operator,
//! split-operator time integration, and entropy-based retrieval scoring.

pub mod analysis;
pub mod basis;
pub mod dynamics;
pub mod error;
pub mod kick;
pub mod register;
pub mod units;

pub use analysis::{
    amplification_report, carpet_scan, entropy, entropy_table, local_maxima, pulse_for_delay,
    ridge_predictions, AmplificationReport, CarpetScan, DelaySearch, EntropyReport, TableEngine,
    TableRow, TableTarget,
};
pub use basis::{
    build_basis, build_basis_with_cutoff, build_grid, energy_of, kepler_time,
    kepler_time_seconds, radial_integral, solve_radial, BasisSet, BasisState, GridRule,
    QuantumDefectTable, RadialGrid, RadialWavefunction, SolveMode,
};
pub use dynamics::{
    dipole_matrix, e_peak_for_impulse, fwhm_ratio, hcp_field, impulse_coefficient,
    peak_offset_ratio, propagate, propagate_observed, pulse_fwhm, pulse_impulse, shape_peak_ratio,
    tau_for_fwhm, DipoleMatrix, HcpPulse, Propagator, StepRecord,
};
pub use error::{Error, Result};
pub use kick::{
    angular_weight, apply_kick, kick_matrix, p_state_kick_row, spherical_bessel, KickMatrix,
    KickSpec, NOMINAL_KICK,
};
pub use register::{
    load_register, readout_binned, register_probabilities, BinRule, ReadoutBin, RegisterSpec,
    WavePacket,
};
