//! Mechanical-mode model: zero-point motion, thermal occupation, thermal
//! phase-space sampling, and the Lorentzian-PSD / ringdown fits used to
//! characterize a resonator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::constants::{HBAR, K_B};
use crate::fit::{self, FitError, LmOptions};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Error)]
pub enum MechError {
    #[error("no dominant peak in record (max/median < 3)")]
    NoPeak,
    #[error("fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("record is not decaying")]
    NotDecaying,
    #[error("integration band contains fewer than two samples")]
    EmptyBand,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A mechanical mode: frequency, quality factor, effective mass, and bath
/// temperature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Resonator {
    pub f_r_hz: f64,
    pub q_factor: f64,
    pub m_eff_kg: f64,
    pub temperature_k: f64,
}

impl Resonator {
    pub fn new(f_r_hz: f64, q_factor: f64, m_eff_kg: f64, temperature_k: f64) -> Result<Self, MechError> {
        for (name, v) in [
            ("f_r_hz", f_r_hz),
            ("q_factor", q_factor),
            ("m_eff_kg", m_eff_kg),
            ("temperature_k", temperature_k),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MechError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { f_r_hz, q_factor, m_eff_kg, temperature_k })
    }

    pub fn omega_r(&self) -> f64 {
        TAU * self.f_r_hz
    }

    /// Mode linewidth κ/2π = f_r/Q, Hz.
    pub fn kappa_over_2pi_hz(&self) -> f64 {
        self.f_r_hz / self.q_factor
    }

    pub fn zero_point_motion_m(&self) -> f64 {
        zero_point_motion(self.m_eff_kg, self.f_r_hz)
    }

    pub fn thermal_occupation(&self) -> f64 {
        thermal_occupation(self.temperature_k, self.f_r_hz)
    }
}

/// z_p = sqrt(ħ / (2·m_eff·ω_r)), meters.
pub fn zero_point_motion(m_eff_kg: f64, f_r_hz: f64) -> f64 {
    (HBAR / (2.0 * m_eff_kg * TAU * f_r_hz)).sqrt()
}

/// Bose-Einstein occupation n_th = 1/(exp(ħω/kT) − 1); 0 at T = 0.
pub fn thermal_occupation(temperature_k: f64, f_r_hz: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    let x = HBAR * TAU * f_r_hz / (K_B * temperature_k);
    1.0 / x.exp_m1()
}

/// One thermal draw of the resonator: amplitude and phase of
/// x(t) = x0·cos(ω_r t + φ0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceSample {
    pub x0_m: f64,
    pub phi0_rad: f64,
}

/// Deterministic generator for a (seed, stream) pair. Disjoint streams give
/// independent sequences, which is how concurrent samplers stay reproducible.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw (x0, φ0) for a thermal state with RMS amplitude `delta_x_m`:
/// φ0 ~ Uniform[0, 2π), x0 ~ Rayleigh(scale = Δx) via inverse CDF.
pub fn sample_thermal_state(delta_x_m: f64, rng: &mut impl Rng) -> PhaseSpaceSample {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    PhaseSpaceSample {
        x0_m: delta_x_m * (-2.0 * (1.0 - u).ln()).sqrt(),
        phi0_rad: TAU * v,
    }
}

/// A sampled record: PSD (value = m²/Hz vs t = Hz) or ringdown
/// (value = meters vs t = seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, value: Vec<f64>) -> Result<Self, MechError> {
        if t.len() != value.len() {
            return Err(MechError::InvalidInput(format!(
                "length mismatch: {} abscissas vs {} values",
                t.len(),
                value.len()
            )));
        }
        if t.len() < 2 {
            return Err(MechError::TooFewPoints { got: t.len(), need: 2 });
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MechError::InvalidInput("abscissa must be strictly increasing".into()));
        }
        Ok(Self { t, value })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Lorentzian PSD fit result. `kappa_over_2pi_hz` is the FWHM in Hz;
/// `peak_area_m2` is the integral of the peak above the offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub f_r_hz: f64,
    pub kappa_over_2pi_hz: f64,
    pub peak_area_m2: f64,
    pub offset_m2_per_hz: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// Offset + area-normalized Lorentzian: L(f) = c + A·(h/π)/((f−f0)² + h²)
// with h = FWHM/2, so that the peak term integrates to exactly A.
fn lorentzian(f: f64, f0: f64, fwhm: f64, area: f64, offset: f64) -> f64 {
    let h = 0.5 * fwhm;
    let u = f - f0;
    offset + area * (h / PI) / (u * u + h * h)
}

/// Fit a single Lorentzian peak to a PSD record. Seeded from the argmax and
/// a half-maximum width estimate.
pub fn fit_lorentzian(psd: &TimeSeries) -> Result<LorentzianFit, MechError> {
    if psd.len() < 8 {
        return Err(MechError::TooFewPoints { got: psd.len(), need: 8 });
    }
    let max = psd.value.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let med = median(&psd.value);
    if !(max / med >= 3.0) {
        return Err(MechError::NoPeak);
    }

    let i_pk = psd
        .value
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let offset0 = med;
    let f0 = psd.t[i_pk];
    let half = offset0 + 0.5 * (max - offset0);
    let step = (psd.t[psd.len() - 1] - psd.t[0]) / (psd.len() - 1) as f64;

    let crossing = |dir: i64| -> f64 {
        let mut i = i_pk as i64;
        loop {
            let j = i + dir;
            if j < 0 || j as usize >= psd.len() {
                return psd.t[i as usize] + dir as f64 * 0.5 * step;
            }
            if psd.value[j as usize] < half {
                // Linear interpolation between samples i and j.
                let (ti, tj) = (psd.t[i as usize], psd.t[j as usize]);
                let (vi, vj) = (psd.value[i as usize], psd.value[j as usize]);
                return ti + (half - vi) / (vj - vi) * (tj - ti);
            }
            i = j;
        }
    };
    let fwhm0 = (crossing(1) - crossing(-1)).abs().max(step);
    let area0 = (max - offset0) * PI * 0.5 * fwhm0;

    let residuals = |p: &DVector<f64>| {
        DVector::from_iterator(
            psd.len(),
            psd.t
                .iter()
                .zip(&psd.value)
                .map(|(&f, &y)| lorentzian(f, p[0], p[1], p[2], p[3]) - y),
        )
    };
    let jacobian = |p: &DVector<f64>| {
        let (f0, fwhm, area) = (p[0], p[1], p[2]);
        let h = 0.5 * fwhm;
        DMatrix::from_fn(psd.len(), 4, |i, j| {
            let u = psd.t[i] - f0;
            let d = u * u + h * h;
            match j {
                0 => area * (h / PI) * 2.0 * u / (d * d),
                1 => area * (u * u - h * h) / (2.0 * PI * d * d),
                2 => (h / PI) / d,
                _ => 1.0,
            }
        })
    };

    let init = DVector::from_vec(vec![f0, fwhm0, area0, offset0]);
    let out = fit::levenberg_marquardt(residuals, jacobian, init, &LmOptions::default())
        .map_err(|e| match e {
            FitError::NoConvergence(n) => MechError::NoConvergence(n),
            FitError::Degenerate(m) => MechError::InvalidInput(m),
        })?;

    Ok(LorentzianFit {
        f_r_hz: out.params[0],
        kappa_over_2pi_hz: out.params[1].abs(),
        peak_area_m2: out.params[2],
        offset_m2_per_hz: out.params[3],
        rms_residual: (out.cost / psd.len() as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Ringdown fit result. The amplitude time constant is τ_a = 2Q/ω_r
/// (amplitude decays at half the energy rate).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingdownFit {
    pub q_factor: f64,
    pub amplitude0_m: f64,
    pub tau_s: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit a(t) = a0·exp(−t/τ) and convert to Q = ω_r·τ/2. Seeded by log-linear
/// regression, polished by least squares on the exponential itself.
pub fn fit_ringdown(series: &TimeSeries, f_r_hz: f64) -> Result<RingdownFit, MechError> {
    if series.len() < 8 {
        return Err(MechError::TooFewPoints { got: series.len(), need: 8 });
    }
    let pts: Vec<(f64, f64)> = series
        .t
        .iter()
        .zip(&series.value)
        .filter(|(_, &a)| a > 0.0)
        .map(|(&t, &a)| (t, a.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(MechError::NotDecaying);
    }
    let n = pts.len() as f64;
    let st: f64 = pts.iter().map(|p| p.0).sum();
    let sl: f64 = pts.iter().map(|p| p.1).sum();
    let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let stl: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * stt - st * st;
    let slope = (n * stl - st * sl) / denom;
    if !(slope < 0.0) {
        return Err(MechError::NotDecaying);
    }
    let tau0 = -1.0 / slope;
    let a00 = ((sl - slope * st) / n).exp();

    let residuals = |p: &DVector<f64>| {
        DVector::from_iterator(
            series.len(),
            series
                .t
                .iter()
                .zip(&series.value)
                .map(|(&t, &a)| p[0] * (-t / p[1]).exp() - a),
        )
    };
    let jacobian = |p: &DVector<f64>| {
        DMatrix::from_fn(series.len(), 2, |i, j| {
            let t = series.t[i];
            let e = (-t / p[1]).exp();
            if j == 0 {
                e
            } else {
                p[0] * e * t / (p[1] * p[1])
            }
        })
    };
    let out = fit::levenberg_marquardt(
        residuals,
        jacobian,
        DVector::from_vec(vec![a00, tau0]),
        &LmOptions::default(),
    )
    .map_err(|e| match e {
        FitError::NoConvergence(n) => MechError::NoConvergence(n),
        FitError::Degenerate(m) => MechError::InvalidInput(m),
    })?;

    let tau = out.params[1];
    if !(tau > 0.0) {
        return Err(MechError::NotDecaying);
    }
    Ok(RingdownFit {
        q_factor: PI * f_r_hz * tau,
        amplitude0_m: out.params[0],
        tau_s: tau,
        rms_residual: (out.cost / series.len() as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Δx = sqrt(∫ PSD df) over `[f_lo, f_hi]` by the trapezoidal rule.
pub fn rms_from_psd(psd: &TimeSeries, f_lo_hz: f64, f_hi_hz: f64) -> Result<f64, MechError> {
    if !(f_hi_hz > f_lo_hz) {
        return Err(MechError::EmptyBand);
    }
    let pts: Vec<(f64, f64)> = psd
        .t
        .iter()
        .zip(&psd.value)
        .filter(|(&f, _)| f >= f_lo_hz && f <= f_hi_hz)
        .map(|(&f, &v)| (f, v))
        .collect();
    if pts.len() < 2 {
        return Err(MechError::EmptyBand);
    }
    let integral: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(integral.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_point_motion_published_scale() {
        // 1.4 MHz mode at the default effective mass sits at ~10 fm.
        let zp = zero_point_motion(6.0e-14, 1.4e6);
        assert_relative_eq!(zp, 9.99524641544e-15, max_relative = 1e-9);
        assert!(zp > 0.9e-14 && zp < 1.1e-14);
    }

    #[test]
    fn zero_point_motion_identities() {
        let zp = zero_point_motion(6.0e-14, 1.4e6);
        assert_relative_eq!(
            zp * zp * 2.0 * 6.0e-14 * TAU * 1.4e6,
            HBAR,
            max_relative = 1e-12
        );
        // Quadrupling the mass halves z_p.
        assert_relative_eq!(zero_point_motion(2.4e-13, 1.4e6), zp / 2.0, max_relative = 1e-14);
        // m_eff·ω_r = ħ/2 normalizes z_p to exactly 1 m.
        let m = HBAR / (2.0 * TAU * 1.0);
        assert_relative_eq!(zero_point_motion(m, 1.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn thermal_occupation_values() {
        assert_eq!(thermal_occupation(0.0, 1.4e6), 0.0);
        assert_relative_eq!(thermal_occupation(20.0, 1.4e6), 297665.487659, max_relative = 1e-9);
        // Equipartition limit: n·ħω/(k_B·T) → 1.
        let x = HBAR * TAU * 1.4e6 / (K_B * 300.0);
        assert!((thermal_occupation(300.0, 1.4e6) * x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn resonator_validation_and_derived() {
        assert!(Resonator::new(1.4e6, -1.0, 6e-14, 20.0).is_err());
        let r = Resonator::new(1.4e6, 8.25e5, 6e-14, 20.0).unwrap();
        assert_relative_eq!(r.kappa_over_2pi_hz(), 1.4e6 / 8.25e5, max_relative = 1e-15);
        assert_relative_eq!(r.omega_r(), TAU * 1.4e6, max_relative = 1e-15);
    }

    #[test]
    fn rayleigh_second_moment_and_phase_symmetry() {
        let dx = 1.86e-9;
        let mut rng = seeded_rng(0, 0);
        let n = 1_000_000;
        let mut sum_sq = 0.0;
        let mut sum_proj = 0.0;
        for _ in 0..n {
            let s = sample_thermal_state(dx, &mut rng);
            assert!(s.x0_m >= 0.0 && s.phi0_rad >= 0.0 && s.phi0_rad < TAU);
            sum_sq += s.x0_m * s.x0_m;
            sum_proj += s.x0_m * s.phi0_rad.cos();
        }
        let mean_sq = sum_sq / n as f64;
        assert!((mean_sq / (2.0 * dx * dx) - 1.0).abs() < 0.01);
        // E[x cos φ] = 0 with per-draw std Δx.
        let bound = 3.0 * dx / (n as f64).sqrt();
        assert!((sum_proj / n as f64).abs() < bound);
    }

    #[test]
    fn rayleigh_empirical_cdf_matches_analytic() {
        let dx = 2.0;
        let mut rng = seeded_rng(1, 0);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_thermal_state(dx, &mut rng).x0_m).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |x: f64| 1.0 - (-x * x / (2.0 * dx * dx)).exp();
        let mut sup = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            let f = cdf(x);
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            sup = sup.max((f - lo).abs()).max((f - hi).abs());
        }
        assert!(sup < 0.005, "KS distance {sup}");
    }

    #[test]
    fn sampler_is_deterministic_per_seed_and_stream() {
        let draw = |seed, stream| {
            let mut rng = seeded_rng(seed, stream);
            (0..10).map(|_| sample_thermal_state(1.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(42, 7), draw(42, 7));
        assert_ne!(draw(42, 7), draw(42, 8));
        assert_ne!(draw(42, 7), draw(43, 7));
    }

    fn synth_psd(f0: f64, fwhm: f64, area: f64, offset: f64, half_span: f64, step: f64) -> TimeSeries {
        let n = (2.0 * half_span / step).round() as usize + 1;
        let t: Vec<f64> = (0..n).map(|i| f0 - half_span + i as f64 * step).collect();
        let value: Vec<f64> = t.iter().map(|&f| lorentzian(f, f0, fwhm, area, offset)).collect();
        TimeSeries::new(t, value).unwrap()
    }

    #[test]
    fn lorentzian_fit_recovers_planted_parameters() {
        let area = (1.86e-9f64).powi(2);
        let psd = synth_psd(1.4e6, 1.5, area, 1e-24, 75.0, 0.05);
        let fit = fit_lorentzian(&psd).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.f_r_hz, 1.4e6, max_relative = 1e-6);
        assert_relative_eq!(fit.kappa_over_2pi_hz, 1.5, max_relative = 1e-6);
        assert_relative_eq!(fit.peak_area_m2, area, max_relative = 1e-6);
        assert_relative_eq!(fit.offset_m2_per_hz, 1e-24, max_relative = 1e-4);
    }

    #[test]
    fn flat_record_has_no_peak() {
        let t: Vec<f64> = (0..64).map(|i| 1.0 + i as f64).collect();
        let v = vec![2.5; 64];
        let psd = TimeSeries::new(t, v).unwrap();
        assert!(matches!(fit_lorentzian(&psd), Err(MechError::NoPeak)));
    }

    #[test]
    fn lorentzian_fit_tolerates_multiplicative_noise() {
        let area = (1.86e-9f64).powi(2);
        for seed in 0..100u64 {
            let mut psd = synth_psd(1.4e6, 1.5, area, 1e-24, 30.0, 0.1);
            let mut rng = seeded_rng(seed, 0);
            for v in psd.value.iter_mut() {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                let z = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
                *v *= 1.0 + 0.05 * z;
            }
            let fit = fit_lorentzian(&psd).unwrap();
            assert!(
                (fit.f_r_hz - 1.4e6).abs() < 0.1 * 1.5,
                "seed {seed}: f_r off by {}",
                fit.f_r_hz - 1.4e6
            );
            assert!(
                (fit.kappa_over_2pi_hz - 1.5).abs() < 0.15,
                "seed {seed}: kappa {}",
                fit.kappa_over_2pi_hz
            );
        }
    }

    #[test]
    fn lorentzian_fit_is_scale_equivariant() {
        let area = (1.86e-9f64).powi(2);
        let psd = synth_psd(1.4e6, 1.5, area, 1e-24, 50.0, 0.1);
        let scaled = TimeSeries::new(psd.t.clone(), psd.value.iter().map(|v| v * 250.0).collect())
            .unwrap();
        let a = fit_lorentzian(&psd).unwrap();
        let b = fit_lorentzian(&scaled).unwrap();
        assert_relative_eq!(a.f_r_hz, b.f_r_hz, max_relative = 1e-9);
        assert_relative_eq!(a.kappa_over_2pi_hz, b.kappa_over_2pi_hz, max_relative = 1e-9);
        assert_relative_eq!(b.peak_area_m2, 250.0 * a.peak_area_m2, max_relative = 1e-9);
    }

    fn synth_ringdown(q: f64, f_r: f64, a0: f64, n: usize, t_max: f64) -> TimeSeries {
        let tau = 2.0 * q / (TAU * f_r);
        let t: Vec<f64> = (0..n).map(|i| i as f64 * t_max / (n - 1) as f64).collect();
        let v: Vec<f64> = t.iter().map(|&t| a0 * (-t / tau).exp()).collect();
        TimeSeries::new(t, v).unwrap()
    }

    #[test]
    fn ringdown_fit_recovers_planted_q() {
        let series = synth_ringdown(8.25e5, 1.4e6, 2e-9, 200, 0.6);
        let fit = fit_ringdown(&series, 1.4e6).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.q_factor, 8.25e5, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude0_m, 2e-9, max_relative = 1e-6);
    }

    #[test]
    fn constant_amplitude_is_not_decaying() {
        let t: Vec<f64> = (0..32).map(|i| i as f64 * 0.01).collect();
        let series = TimeSeries::new(t, vec![1e-9; 32]).unwrap();
        assert!(matches!(fit_ringdown(&series, 1.4e6), Err(MechError::NotDecaying)));
    }

    #[test]
    fn planted_ringdown_is_linear_in_log() {
        let series = synth_ringdown(8.25e5, 1.4e6, 2e-9, 64, 0.4);
        let logs: Vec<f64> = series.value.iter().map(|a| a.ln()).collect();
        let n = series.len() as f64;
        let st: f64 = series.t.iter().sum();
        let sl: f64 = logs.iter().sum();
        let stt: f64 = series.t.iter().map(|t| t * t).sum();
        let stl: f64 = series.t.iter().zip(&logs).map(|(t, l)| t * l).sum();
        let slope = (n * stl - st * sl) / (n * stt - st * st);
        let intercept = (sl - slope * st) / n;
        for (t, l) in series.t.iter().zip(&logs) {
            assert!((l - (intercept + slope * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn rms_from_psd_recovers_planted_amplitude() {
        let dx = 1.86e-9;
        let psd = synth_psd(1.4e6, 1.5, dx * dx, 0.0, 150.0, 0.02);
        let got = rms_from_psd(&psd, 1.4e6 - 150.0, 1.4e6 + 150.0).unwrap();
        assert!(
            (got - dx).abs() / dx < 0.005,
            "recovered {got} vs planted {dx}"
        );
    }

    #[test]
    fn rms_from_psd_edge_cases() {
        let t: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let zero = TimeSeries::new(t.clone(), vec![0.0; 16]).unwrap();
        assert_eq!(rms_from_psd(&zero, 0.0, 15.0).unwrap(), 0.0);

        let ones = TimeSeries::new(t.clone(), vec![1.0; 16]).unwrap();
        let base = rms_from_psd(&ones, 0.0, 15.0).unwrap();
        let twos = TimeSeries::new(t.clone(), vec![2.0; 16]).unwrap();
        assert_relative_eq!(
            rms_from_psd(&twos, 0.0, 15.0).unwrap(),
            base * 2f64.sqrt(),
            max_relative = 1e-12
        );

        assert!(matches!(rms_from_psd(&ones, 100.0, 200.0), Err(MechError::EmptyBand)));
        assert!(matches!(rms_from_psd(&ones, 5.0, 5.0), Err(MechError::EmptyBand)));
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new(vec![0.0, 0.0, 1.0], vec![1.0; 3]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0; 3]).is_err());
        let short = TimeSeries::new(vec![0.0, 1.0], vec![1.0; 2]).unwrap();
        assert!(matches!(
            fit_ringdown(&short, 1.4e6),
            Err(MechError::TooFewPoints { .. })
        ));
    }
}
