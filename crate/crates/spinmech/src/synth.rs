//! Deterministic synthetic-data generators: planted dipole maps, Lorentzian
//! PSDs, ringdowns, echo curves, and movement detuning profiles. Fixtures
//! are reproducible from (parameters, seed) and feed both the test suites
//! and the `synth` CLI command.

use rand::Rng;
use std::f64::consts::TAU;

use crate::dipole::{axial_field, Dipole, NvAxis, ScanGeometry};
use crate::echo::{thermal_contrast, Coupling, EchoCurve};
use crate::grid::{FieldMap, Grid};
use crate::mech::{seeded_rng, TimeSeries};
use crate::register::DetuningProfile;
use crate::spinmodel::{esr_frequencies, EsrMap, FieldComponents, SpinParams};

/// Standard normal draw (Box-Muller), deterministic for a given generator
/// state.
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Axial-field map of a planted dipole with optional i.i.d. Gaussian noise
/// (Tesla).
pub fn dipole_map(
    dipole: &Dipole,
    nv: &NvAxis,
    geometry: &ScanGeometry,
    noise_sigma_t: f64,
    seed: u64,
) -> FieldMap {
    let mut rng = seeded_rng(seed, 0);
    Grid::from_fn(geometry.nx, geometry.ny, geometry.pitch_m, |ix, iy| {
        let p = geometry.pixel_position(ix, iy);
        let b = axial_field(dipole, &p, nv).expect("scan plane off the dipole");
        if noise_sigma_t > 0.0 {
            b + noise_sigma_t * gaussian(&mut rng)
        } else {
            b
        }
    })
    .expect("valid geometry")
}

/// ESR-pair map of a planted dipole: per pixel, the full vector field is
/// resolved into (bz, bx) about the NV axis and pushed through the forward
/// spin model.
pub fn esr_map_from_dipole(
    dipole: &Dipole,
    nv: &NvAxis,
    geometry: &ScanGeometry,
    params: &SpinParams,
) -> EsrMap {
    Grid::from_fn(geometry.nx, geometry.ny, geometry.pitch_m, |ix, iy| {
        let p = geometry.pixel_position(ix, iy);
        let field = crate::dipole::dipole_field(dipole, &p).expect("scan plane off the dipole");
        let bz = field.dot(&nv.vector());
        let bx = (field - nv.vector() * bz).norm();
        esr_frequencies(params, &FieldComponents { bz_t: bz, bx_t: bx })
    })
    .expect("valid geometry")
}

/// Lorentzian PSD record over f_r ± half_span with optional multiplicative
/// Gaussian noise.
#[allow(clippy::too_many_arguments)]
pub fn lorentzian_psd(
    f_r_hz: f64,
    kappa_over_2pi_hz: f64,
    peak_area_m2: f64,
    offset_m2_per_hz: f64,
    half_span_hz: f64,
    step_hz: f64,
    noise_frac: f64,
    seed: u64,
) -> TimeSeries {
    let n = (2.0 * half_span_hz / step_hz).round() as usize + 1;
    let mut rng = seeded_rng(seed, 0);
    let h = 0.5 * kappa_over_2pi_hz;
    let t: Vec<f64> = (0..n)
        .map(|i| f_r_hz - half_span_hz + i as f64 * step_hz)
        .collect();
    let value: Vec<f64> = t
        .iter()
        .map(|&f| {
            let u = f - f_r_hz;
            let clean = offset_m2_per_hz
                + peak_area_m2 * (h / std::f64::consts::PI) / (u * u + h * h);
            if noise_frac > 0.0 {
                clean * (1.0 + noise_frac * gaussian(&mut rng))
            } else {
                clean
            }
        })
        .collect();
    TimeSeries::new(t, value).expect("monotone grid")
}

/// Exponential amplitude ringdown for a given Q, with optional additive
/// noise relative to the initial amplitude.
pub fn ringdown(
    q_factor: f64,
    f_r_hz: f64,
    amplitude0_m: f64,
    n_points: usize,
    t_max_s: f64,
    noise_frac: f64,
    seed: u64,
) -> TimeSeries {
    let tau = 2.0 * q_factor / (TAU * f_r_hz);
    let mut rng = seeded_rng(seed, 0);
    let t: Vec<f64> = (0..n_points)
        .map(|i| i as f64 * t_max_s / (n_points - 1) as f64)
        .collect();
    let value: Vec<f64> = t
        .iter()
        .map(|&t| {
            let clean = amplitude0_m * (-t / tau).exp();
            if noise_frac > 0.0 {
                clean + noise_frac * amplitude0_m * gaussian(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    TimeSeries::new(t, value).expect("monotone grid")
}

/// Baseline-normalized echo curve from the thermal closed form, n points
/// over (0, 2·(2π/ω_r)], with optional additive Gaussian noise.
pub fn echo_curve(
    c: &Coupling,
    delta_x_m: f64,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> EchoCurve {
    let t_max = 2.0 * TAU / c.omega_r_rad_s;
    let mut rng = seeded_rng(seed, 0);
    let tau: Vec<f64> = (1..=n_points)
        .map(|i| i as f64 * t_max / n_points as f64)
        .collect();
    let contrast: Vec<f64> = tau
        .iter()
        .map(|&t| {
            let clean = thermal_contrast(c, delta_x_m, t);
            if noise_sigma > 0.0 {
                (clean + noise_sigma * gaussian(&mut rng)).clamp(-1.05, 1.05)
            } else {
                clean
            }
        })
        .collect();
    EchoCurve::new(tau, contrast).expect("valid grid")
}

/// Raised-cosine movement detuning profile peaking at `peak_hz`:
/// δ_e(t) = peak·(1 − cos(2πt/T))/2.
pub fn movement_profile(
    peak_hz: f64,
    t_move_s: f64,
    n_points: usize,
    gamma_n_over_gamma_e: f64,
) -> DetuningProfile {
    let t: Vec<f64> = (0..n_points)
        .map(|i| t_move_s * i as f64 / (n_points - 1) as f64)
        .collect();
    let d: Vec<f64> = t
        .iter()
        .map(|&t| peak_hz * 0.5 * (1.0 - (TAU * t / t_move_s).cos()))
        .collect();
    DetuningProfile::new(t, d, gamma_n_over_gamma_e).expect("valid profile")
}
