//! Simulation and analysis toolkit for hybrid spin-mechanical systems.
//!
//! The crate covers the analysis chain for an NV center coupled to a
//! magnetically functionalized nanomechanical resonator:
//!
//! - [`spinmodel`] — spin-1 ground-state Hamiltonian: forward ESR
//!   frequencies, field extraction from measured pairs, map inversion and
//!   hole interpolation.
//! - [`dipole`] — point-dipole field model with analytic gradients and
//!   least-squares map fitting.
//! - [`mech`] — resonator quantities (zero-point motion, thermal
//!   occupation), thermal-state sampling, Lorentzian-PSD and ringdown fits.
//! - [`echo`] — Hahn-echo spin-mechanics signal: semiclassical phase,
//!   coherent (Bessel) and thermal closed forms, Monte Carlo cross-check,
//!   and coupling extraction from echo curves.
//! - [`register`] — electron-¹⁵N memory sequence under mechanical
//!   transport: detuning profiles, π-pulse timing, fringe and Ramsey scans.
//! - [`coop`] — cooperativity accounting and improvement projections.
//! - [`synth`] — deterministic synthetic fixtures for all of the above.
//! - [`io`] — CSV/JSON formats shared with the command-line front end.
//!
//! Everything is deterministic: randomized routines take an explicit
//! (seed, stream) pair and parallel reductions run in a fixed order, so
//! results do not depend on thread count.

// `!(x > 0.0)` rejects NaN along with the out-of-range values; `x <= 0.0`
// would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod constants;
pub mod coop;
pub mod dipole;
pub mod echo;
pub mod fit;
pub mod grid;
pub mod io;
pub mod mech;
pub mod register;
pub mod spinmodel;
pub mod synth;

pub use coop::{cooperativity, n_kappa, project_scenario, CoopInputs, Scenario};
pub use dipole::{axial_field, axial_gradient, dipole_field, fit_dipole, Dipole, NvAxis};
pub use echo::{
    accumulated_phase, coherent_contrast, coupling_from_gradient, fit_coupling, mc_contrast,
    thermal_contrast, Coupling, EchoCurve,
};
pub use grid::{FieldMap, Grid};
pub use mech::{
    fit_lorentzian, fit_ringdown, rms_from_psd, sample_thermal_state, seeded_rng,
    thermal_occupation, zero_point_motion, Resonator, TimeSeries,
};
pub use register::{
    build_movement_profile, fringe_scan, nuclear_phase, ramsey_vs_tau,
    simulate_memory_sequence, solve_pi_time, DetuningProfile, SequenceConfig,
};
pub use spinmodel::{
    esr_frequencies, interpolate_missing, invert_field, map_to_axial_field, EsrPair,
    FieldComponents, SpinParams,
};
