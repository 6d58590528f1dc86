//! Hahn-echo spin-mechanics signal engine.
//!
//! A spin at fixed detuning gradient sees the resonator position x(t) =
//! x0·cos(ω_r t + φ0); over a π/2–τ–π–τ–π/2 sequence it accumulates the
//! phase below. Averaging cos(φ) over φ0 gives the coherent (Bessel)
//! contrast; a further Rayleigh average over thermal amplitudes gives the
//! closed-form thermal contrast, which the Monte Carlo estimator
//! cross-checks. λ is stored in angular units (rad/s); all I/O reports
//! λ/2π in Hz.
//!
//! The mechanical state is treated as frozen over one pulse sequence (no
//! intra-sequence damping), valid for Q ≫ 100·ω_rτ/2π; the published
//! working point (Q ≈ 8e5 at ω_rτ ≈ 4π) sits orders of magnitude inside
//! that bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::bessel::j0;
use crate::fit::{self, FitError, LmOptions};
use crate::mech::{sample_thermal_state, seeded_rng, PhaseSpaceSample};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Error)]
pub enum EchoError {
    #[error("coupling fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("underdetermined: {0} points, need at least 3")]
    Underdetermined(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Spin-mechanical coupling working point: single-phonon coupling λ (rad/s),
/// zero-point motion, and mechanical angular frequency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Coupling {
    pub lambda_rad_s: f64,
    pub z_p_m: f64,
    pub omega_r_rad_s: f64,
}

impl Coupling {
    pub fn new(lambda_rad_s: f64, z_p_m: f64, omega_r_rad_s: f64) -> Result<Self, EchoError> {
        for (name, v) in [
            ("lambda_rad_s", lambda_rad_s),
            ("z_p_m", z_p_m),
            ("omega_r_rad_s", omega_r_rad_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(EchoError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { lambda_rad_s, z_p_m, omega_r_rad_s })
    }

    pub fn lambda_over_2pi_hz(&self) -> f64 {
        self.lambda_rad_s / TAU
    }
}

/// λ = 2π·γe·z_p·G, rad/s.
pub fn coupling_from_gradient(gamma_e_hz_per_t: f64, z_p_m: f64, gradient_t_per_m: f64) -> f64 {
    TAU * gamma_e_hz_per_t * z_p_m * gradient_t_per_m
}

/// Normalized Hahn-echo contrast samples versus half-evolution time τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoCurve {
    pub tau_s: Vec<f64>,
    pub contrast: Vec<f64>,
}

impl EchoCurve {
    pub fn new(tau_s: Vec<f64>, contrast: Vec<f64>) -> Result<Self, EchoError> {
        if tau_s.len() != contrast.len() {
            return Err(EchoError::InvalidInput(format!(
                "length mismatch: {} taus vs {} contrasts",
                tau_s.len(),
                contrast.len()
            )));
        }
        if tau_s.first().is_none_or(|&t| !(t > 0.0)) {
            return Err(EchoError::InvalidInput("tau must be positive".into()));
        }
        if tau_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EchoError::InvalidInput("tau must be strictly increasing".into()));
        }
        if contrast.iter().any(|&c| !(-1.05..=1.05).contains(&c)) {
            return Err(EchoError::InvalidInput("contrast outside [-1.05, 1.05]".into()));
        }
        Ok(Self { tau_s, contrast })
    }

    pub fn len(&self) -> usize {
        self.tau_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_s.is_empty()
    }
}

/// Phenomenological intrinsic decoherence χ(τ) = (2τ/T2)^p, removed from
/// measured curves by baseline normalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoherenceModel {
    pub t2_s: f64,
    pub exponent: f64,
}

impl DecoherenceModel {
    pub fn new(t2_s: f64, exponent: f64) -> Result<Self, EchoError> {
        if !(t2_s > 0.0) || !(exponent > 0.0) {
            return Err(EchoError::InvalidInput(format!(
                "t2 and exponent must be positive, got ({t2_s}, {exponent})"
            )));
        }
        Ok(Self { t2_s, exponent })
    }

    pub fn chi(&self, tau_s: f64) -> f64 {
        (2.0 * tau_s / self.t2_s).powf(self.exponent)
    }
}

/// Echo phase for one phase-space point:
/// φ(τ) = (λ/(z_p·ω_r))·x0·(sin(2ω_rτ+φ0) − 2·sin(ω_rτ+φ0) + sin(φ0)).
pub fn accumulated_phase(c: &Coupling, s: &PhaseSpaceSample, tau_s: f64) -> f64 {
    let a = c.omega_r_rad_s * tau_s;
    c.lambda_rad_s / (c.z_p_m * c.omega_r_rad_s)
        * s.x0_m
        * ((2.0 * a + s.phi0_rad).sin() - 2.0 * (a + s.phi0_rad).sin() + s.phi0_rad.sin())
}

/// φ0-averaged contrast at fixed drive amplitude x0:
/// J₀((2λx0/(z_p·ω_r))·(cos(ω_rτ) − 1)).
pub fn coherent_contrast(c: &Coupling, x0_m: f64, tau_s: f64) -> f64 {
    let arg = 2.0 * c.lambda_rad_s * x0_m / (c.z_p_m * c.omega_r_rad_s)
        * ((c.omega_r_rad_s * tau_s).cos() - 1.0);
    j0(arg)
}

/// Thermal (Rayleigh-averaged) contrast:
/// exp(−8·Δx²·λ²·sin⁴(ω_rτ/2)/(ω_r²·z_p²)).
pub fn thermal_contrast(c: &Coupling, delta_x_m: f64, tau_s: f64) -> f64 {
    let s = (0.5 * c.omega_r_rad_s * tau_s).sin();
    let q = 8.0 * (delta_x_m * c.lambda_rad_s * s * s / (c.omega_r_rad_s * c.z_p_m)).powi(2);
    (-q).exp()
}

const MC_CHUNK: usize = 8192;

/// Monte Carlo echo contrast: mean of cos(φ) over thermal draws, with its
/// standard error. Chunked over fixed-size RNG streams and reduced in chunk
/// order, so the result depends only on (seed, n_samples) — not on thread
/// count.
pub fn mc_contrast(
    c: &Coupling,
    delta_x_m: f64,
    tau_s: f64,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n_samples >= 2, "need at least 2 samples");
    if delta_x_m == 0.0 {
        return (1.0, 0.0);
    }
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeded_rng(seed, chunk as u64);
            let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let s = sample_thermal_state(delta_x_m, &mut rng);
                let v = accumulated_phase(c, &s, tau_s).cos();
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Full echo signal model: α·thermal_contrast·exp(−χ(τ)).
pub fn signal_with_decoherence(
    c: &Coupling,
    delta_x_m: f64,
    tau_s: f64,
    dec: &DecoherenceModel,
    alpha: f64,
) -> f64 {
    alpha * thermal_contrast(c, delta_x_m, tau_s) * (-dec.chi(tau_s)).exp()
}

/// Coupling fit result; λ is reported as λ/2π with its 1σ uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingFit {
    pub lambda_rad_s: f64,
    pub lambda_over_2pi_hz: f64,
    pub sigma_hz: f64,
    pub alpha: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit λ (and optionally α) to a baseline-normalized echo curve with Δx and
/// ω_r fixed. The model is α·exp(−8Δx²λ²sin⁴(ω_rτ/2)/(ω_r²z_p²)); α stays
/// fixed at 1 unless `fit_alpha`.
pub fn fit_coupling(
    curve: &EchoCurve,
    delta_x_m: f64,
    omega_r_rad_s: f64,
    z_p_m: f64,
    fit_alpha: bool,
) -> Result<CouplingFit, EchoError> {
    let n = curve.len();
    if n < 3 {
        return Err(EchoError::Underdetermined(n));
    }
    // q(τ) = coef·λ²·sin⁴(ω_rτ/2)
    let coef = 8.0 * delta_x_m * delta_x_m / (omega_r_rad_s * omega_r_rad_s * z_p_m * z_p_m);
    let s4: Vec<f64> = curve
        .tau_s
        .iter()
        .map(|&t| (0.5 * omega_r_rad_s * t).sin().powi(4))
        .collect();

    // Seed λ from the decay depth at well-modulated points.
    let mut ratios: Vec<f64> = s4
        .iter()
        .zip(&curve.contrast)
        .filter(|(&s, _)| s > 0.3)
        .map(|(&s, &y)| -(y.clamp(1e-4, 1.0)).ln() / (coef * s))
        .collect();
    if ratios.is_empty() {
        ratios = s4
            .iter()
            .zip(&curve.contrast)
            .filter(|(&s, _)| s > 1e-3)
            .map(|(&s, &y)| -(y.clamp(1e-4, 1.0)).ln() / (coef * s))
            .collect();
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lambda0 = ratios
        .get(ratios.len() / 2)
        .map(|&r| r.max(0.0).sqrt())
        .unwrap_or(0.0);

    let n_params = if fit_alpha { 2 } else { 1 };
    let model = |p: &DVector<f64>, i: usize| {
        let alpha = if fit_alpha { p[1] } else { 1.0 };
        alpha * (-coef * p[0] * p[0] * s4[i]).exp()
    };
    let residuals = |p: &DVector<f64>| {
        DVector::from_iterator(n, (0..n).map(|i| model(p, i) - curve.contrast[i]))
    };
    let jacobian = |p: &DVector<f64>| {
        DMatrix::from_fn(n, n_params, |i, j| {
            let e = (-coef * p[0] * p[0] * s4[i]).exp();
            let alpha = if fit_alpha { p[1] } else { 1.0 };
            if j == 0 {
                -2.0 * coef * p[0] * s4[i] * alpha * e
            } else {
                e
            }
        })
    };

    let mut init = DVector::zeros(n_params);
    init[0] = lambda0;
    if fit_alpha {
        init[1] = 1.0;
    }
    let out = fit::levenberg_marquardt(residuals, jacobian, init, &LmOptions::default()).map_err(
        |e| match e {
            FitError::NoConvergence(n) => EchoError::NoConvergence(n),
            FitError::Degenerate(m) => EchoError::InvalidInput(m),
        },
    )?;

    let lambda = out.params[0].abs();
    let sigma_hz = fit::covariance(&out.jtj, out.cost, n)
        .map(|cov| cov[(0, 0)].max(0.0).sqrt() / TAU)
        .unwrap_or(f64::INFINITY);
    Ok(CouplingFit {
        lambda_rad_s: lambda,
        lambda_over_2pi_hz: lambda / TAU,
        sigma_hz,
        alpha: if fit_alpha { out.params[1] } else { 1.0 },
        rms_residual: (out.cost / n as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
    })
}
