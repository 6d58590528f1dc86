//! Physical constants and default instrument parameters.
//!
//! Frequencies are plain Hz (not angular) unless a name says otherwise;
//! fields are Tesla, lengths are meters, times are seconds.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;

/// μ0/4π, T·m/A (exact).
pub const MU0_OVER_4PI: f64 = 1e-7;

/// NV ground-state zero-field splitting, Hz.
pub const DEFAULT_ZERO_FIELD_SPLITTING_HZ: f64 = 2.8707e9;

/// NV electron gyromagnetic ratio, Hz/T (2.8 MHz/G).
pub const DEFAULT_GAMMA_E_HZ_PER_T: f64 = 2.8e10;

/// ¹⁵N nuclear gyromagnetic ratio magnitude, Hz/T. Only the ratio γn/γe
/// enters the transport-phase model.
pub const DEFAULT_GAMMA_N_HZ_PER_T: f64 = 4.316e6;

/// Default resonator effective mass, kg. Chosen so that a 1.4 MHz mode has
/// z_p ≈ 10 fm; a derived default, not a measured value.
pub const DEFAULT_M_EFF_KG: f64 = 6.0e-14;
