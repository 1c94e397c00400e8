//! Unit constants. Everything internal is Hartree atomic units; these
//! factors are applied only at I/O boundaries.

/// Seconds per atomic unit of time.
pub const AU_TIME_S: f64 = 2.418884e-17;

/// Atomic units of time per femtosecond.
pub const FS: f64 = 1e-15 / AU_TIME_S;

/// Atomic units of time per picosecond.
pub const PS: f64 = 1e3 * FS;

/// V/cm per atomic unit of field strength.
pub const FIELD_AU_V_PER_CM: f64 = 5.142207e9;

/// Wavenumbers (cm^-1) per hartree: 2 R_infinity.
pub const HARTREE_CM: f64 = 219474.6313632;

/// Convert a.u. time to femtoseconds.
pub fn au_to_fs(t: f64) -> f64 {
    t / FS
}

/// Convert a.u. time to picoseconds.
pub fn au_to_ps(t: f64) -> f64 {
    t / PS
}

/// Convert a.u. time to seconds.
pub fn au_to_seconds(t: f64) -> f64 {
    t * AU_TIME_S
}
