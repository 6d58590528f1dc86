//! NV-center ground-state spin-1 Hamiltonian: forward ESR frequencies and
//! inverse extraction of magnetic field components from measured frequency
//! pairs, plus per-pixel map inversion and hole interpolation.
//!
//! The model is H/h = D·Sz² + γe(Bz·Sz + Bx·Sx) on the basis
//! {|+1⟩, |0⟩, |−1⟩}; no hyperfine or strain terms. Only |Bx| is observable,
//! so inverted perpendicular fields are reported ≥ 0. Frequencies are plain
//! Hz throughout.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{DEFAULT_GAMMA_E_HZ_PER_T, DEFAULT_ZERO_FIELD_SPLITTING_HZ};
use crate::grid::{FieldMap, Grid};

#[derive(Debug, Error)]
pub enum SpinError {
    #[error("out of range: f_plus {f_plus_hz} Hz < f_minus {f_minus_hz} Hz")]
    OutOfRange { f_minus_hz: f64, f_plus_hz: f64 },
    #[error("field inversion did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("map has no valid pixels")]
    AllInvalid,
}

/// Spin Hamiltonian constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpinParams {
    /// Zero-field splitting, Hz.
    pub d_hz: f64,
    /// Electron gyromagnetic ratio, Hz/T.
    pub gamma_e_hz_per_t: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            d_hz: DEFAULT_ZERO_FIELD_SPLITTING_HZ,
            gamma_e_hz_per_t: DEFAULT_GAMMA_E_HZ_PER_T,
        }
    }
}

/// Magnetic field resolved along (bz) and perpendicular to (bx ≥ 0) the NV
/// quantization axis, Tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldComponents {
    pub bz_t: f64,
    pub bx_t: f64,
}

/// A measured ESR transition pair, Hz, sorted f_minus ≤ f_plus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsrPair {
    pub f_minus_hz: f64,
    pub f_plus_hz: f64,
}

/// Grid of per-pixel ESR pairs.
pub type EsrMap = Grid<EsrPair>;

fn hamiltonian(params: &SpinParams, field: &FieldComponents) -> Matrix3<f64> {
    let g = params.gamma_e_hz_per_t;
    let d = params.d_hz;
    let off = g * field.bx_t / std::f64::consts::SQRT_2;
    Matrix3::new(
        d + g * field.bz_t, off, 0.0,
        off, 0.0, off,
        0.0, off, d - g * field.bz_t,
    )
}

// Eigenvalues paired with the |0⟩-overlap of their eigenvectors; the state
// adiabatically connected to |m=0⟩ is the one with the largest overlap.
fn eigensystem(params: &SpinParams, field: &FieldComponents) -> (f64, f64, f64, Eigenvectors) {
    let h = hamiltonian(params, field);
    let eig = h.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvectors[(1, a)]
            .abs()
            .partial_cmp(&eig.eigenvectors[(1, b)].abs())
            .unwrap()
    });
    let zero_idx = order[2];
    let others: Vec<usize> = (0..3).filter(|&i| i != zero_idx).collect();
    let (a, b) = (eig.eigenvalues[others[0]], eig.eigenvalues[others[1]]);
    let (lo_idx, hi_idx) = if a <= b {
        (others[0], others[1])
    } else {
        (others[1], others[0])
    };
    let vecs = Eigenvectors {
        zero: eig.eigenvectors.column(zero_idx).into(),
        lower: eig.eigenvectors.column(lo_idx).into(),
        upper: eig.eigenvectors.column(hi_idx).into(),
    };
    (
        eig.eigenvalues[zero_idx],
        eig.eigenvalues[lo_idx],
        eig.eigenvalues[hi_idx],
        vecs,
    )
}

struct Eigenvectors {
    zero: Vector3<f64>,
    lower: Vector3<f64>,
    upper: Vector3<f64>,
}

/// The two transition frequencies out of the |m=0⟩-like state, sorted
/// ascending.
pub fn esr_frequencies(params: &SpinParams, field: &FieldComponents) -> EsrPair {
    let (e0, lo, hi, _) = eigensystem(params, field);
    EsrPair {
        f_minus_hz: lo - e0,
        f_plus_hz: hi - e0,
    }
}

// Transition-frequency Jacobian wrt (bz, bx) via the Hellmann-Feynman
// theorem: dE_i/dp = v_iᵀ (dH/dp) v_i.
fn frequency_jacobian(params: &SpinParams, field: &FieldComponents) -> [[f64; 2]; 2] {
    let g = params.gamma_e_hz_per_t;
    let sz = Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, -1.0)) * g;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let sx = Matrix3::new(
        0.0, inv_sqrt2, 0.0,
        inv_sqrt2, 0.0, inv_sqrt2,
        0.0, inv_sqrt2, 0.0,
    ) * g;
    let (_, _, _, vecs) = eigensystem(params, field);
    let d = |v: &Vector3<f64>, m: &Matrix3<f64>| (v.transpose() * m * v)[(0, 0)];
    let d0 = (d(&vecs.zero, &sz), d(&vecs.zero, &sx));
    let dl = (d(&vecs.lower, &sz), d(&vecs.lower, &sx));
    let du = (d(&vecs.upper, &sz), d(&vecs.upper, &sx));
    [
        [dl.0 - d0.0, dl.1 - d0.1],
        [du.0 - d0.0, du.1 - d0.1],
    ]
}

const INVERT_MAX_ITERATIONS: usize = 100;
const INVERT_RESIDUAL_TOL_HZ: f64 = 1e-3;

/// Extract (bz, bx) from a transition pair by damped 2-variable Newton
/// iteration, seeded from the axial closed form bz = (f₊ − f₋)/(2γe).
///
/// A sorted pair is invariant under bz → −bz, so the returned bz is the
/// nonnegative branch (as is bx, whose sign is never observable).
pub fn invert_field(params: &SpinParams, esr: &EsrPair) -> Result<FieldComponents, SpinError> {
    if esr.f_plus_hz < esr.f_minus_hz {
        return Err(SpinError::OutOfRange {
            f_minus_hz: esr.f_minus_hz,
            f_plus_hz: esr.f_plus_hz,
        });
    }

    let residual = |f: &FieldComponents| {
        let p = esr_frequencies(params, f);
        (
            p.f_minus_hz - esr.f_minus_hz,
            p.f_plus_hz - esr.f_plus_hz,
        )
    };
    let norm = |r: (f64, f64)| r.0.abs().max(r.1.abs());

    // Axial seed; when the pair is consistent with bx = 0 this already
    // satisfies the residual tolerance and is returned exactly.
    let mut field = FieldComponents {
        bz_t: (esr.f_plus_hz - esr.f_minus_hz) / (2.0 * params.gamma_e_hz_per_t),
        bx_t: 0.0,
    };
    let mut res = residual(&field);
    if norm(res) < INVERT_RESIDUAL_TOL_HZ {
        return Ok(field);
    }

    // The Jacobian is singular in bx at bx = 0 (the perpendicular shift is
    // quadratic), so the iteration starts from a small finite bx.
    field.bx_t = 1e-4;
    res = residual(&field);

    for _ in 0..INVERT_MAX_ITERATIONS {
        if norm(res) < INVERT_RESIDUAL_TOL_HZ {
            return Ok(field);
        }
        let j = frequency_jacobian(params, &field);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < f64::MIN_POSITIVE {
            return Err(SpinError::NoConvergence(INVERT_MAX_ITERATIONS));
        }
        let step = (
            -(j[1][1] * res.0 - j[0][1] * res.1) / det,
            -(-j[1][0] * res.0 + j[0][0] * res.1) / det,
        );

        // Step damping factor 0.5 while the residual would increase.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = FieldComponents {
                bz_t: field.bz_t + scale * step.0,
                bx_t: (field.bx_t + scale * step.1).abs().max(1e-12),
            };
            let trial_res = residual(&trial);
            if norm(trial_res) < norm(res) {
                field = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(SpinError::NoConvergence(INVERT_MAX_ITERATIONS));
        }
    }
    if norm(res) < INVERT_RESIDUAL_TOL_HZ {
        Ok(field)
    } else {
        Err(SpinError::NoConvergence(INVERT_MAX_ITERATIONS))
    }
}

/// Summary of a per-pixel map inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionReport {
    pub attempted: usize,
    pub converged: usize,
    pub failed: usize,
}

/// Invert every valid pixel of an ESR map into an axial-field map. Pixels
/// whose inversion fails are marked invalid and counted; pixels invalid on
/// input stay invalid.
pub fn map_to_axial_field(params: &SpinParams, map: &EsrMap) -> (FieldMap, InversionReport) {
    let results: Vec<(f64, bool)> = map
        .data()
        .par_iter()
        .zip(map.mask().par_iter())
        .map(|(pair, &valid)| {
            if !valid {
                return (0.0, false);
            }
            match invert_field(params, pair) {
                Ok(f) => (f.bz_t, true),
                Err(_) => (0.0, false),
            }
        })
        .collect();

    let attempted = map.valid_count();
    let converged = results
        .iter()
        .zip(map.mask())
        .filter(|((_, ok), &was_valid)| *ok && was_valid)
        .count();
    let (values, mask): (Vec<f64>, Vec<bool>) = results.into_iter().unzip();
    let out = Grid::new(map.nx(), map.ny(), map.pitch_m(), values, mask)
        .expect("geometry preserved");
    (
        out,
        InversionReport {
            attempted,
            converged,
            failed: attempted - converged,
        },
    )
}

/// Fill invalid pixels with the mean of their valid 8-neighbors, iterating
/// until none remain. Valid pixels are never altered.
pub fn interpolate_missing(map: &FieldMap) -> Result<FieldMap, SpinError> {
    if map.valid_count() == 0 {
        return Err(SpinError::AllInvalid);
    }
    let mut out = map.clone();
    loop {
        let holes: Vec<(usize, usize)> = out
            .iter()
            .filter(|&(_, _, _, valid)| !valid)
            .map(|(ix, iy, _, _)| (ix, iy))
            .collect();
        if holes.is_empty() {
            return Ok(out);
        }
        // Fill from the pass-start state so the result is order-independent.
        let snapshot = out.clone();
        let mut filled_any = false;
        for (ix, iy) in holes {
            let neighbors = snapshot.valid_neighbors(ix, iy);
            if !neighbors.is_empty() {
                let mean = neighbors.iter().sum::<f64>() / neighbors.len() as f64;
                out.set(ix, iy, mean, true);
                filled_any = true;
            }
        }
        debug_assert!(filled_any, "valid region must grow every pass");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> SpinParams {
        SpinParams::default()
    }

    // Independent eigenvalue oracle: trigonometric closed form for the roots
    // of the 3x3 characteristic polynomial. Valid identification (E0 = the
    // eigenvalue nearest zero) holds on the inversion test domain where both
    // transitions stay far above zero.
    fn cubic_oracle_frequencies(p: &SpinParams, f: &FieldComponents) -> (f64, f64) {
        let h = hamiltonian(p, f);
        let c2 = h.trace();
        let c1 = h[(0, 0)] * h[(1, 1)] + h[(0, 0)] * h[(2, 2)] + h[(1, 1)] * h[(2, 2)]
            - h[(0, 1)] * h[(0, 1)]
            - h[(0, 2)] * h[(0, 2)]
            - h[(1, 2)] * h[(1, 2)];
        let c0 = h.determinant();
        let q = (3.0 * c1 - c2 * c2) / 9.0;
        let r = (2.0 * c2.powi(3) - 9.0 * c2 * c1 + 27.0 * c0) / 54.0;
        let theta = (r / (-q).powi(3).sqrt()).clamp(-1.0, 1.0).acos();
        let mut roots: Vec<f64> = (0..3)
            .map(|k| {
                2.0 * (-q).sqrt() * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos()
                    + c2 / 3.0
            })
            .collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (roots[1] - roots[0], roots[2] - roots[0])
    }

    #[test]
    fn zero_field_degeneracy() {
        let pair = esr_frequencies(&params(), &FieldComponents { bz_t: 0.0, bx_t: 0.0 });
        assert_relative_eq!(pair.f_minus_hz, 2.8707e9, epsilon = 1e-3);
        assert_relative_eq!(pair.f_plus_hz, 2.8707e9, epsilon = 1e-3);
    }

    #[test]
    fn axial_zeeman_splitting() {
        let pair = esr_frequencies(&params(), &FieldComponents { bz_t: 0.01, bx_t: 0.0 });
        assert_relative_eq!(pair.f_minus_hz, 2.5907e9, epsilon = 1e-3);
        assert_relative_eq!(pair.f_plus_hz, 3.1507e9, epsilon = 1e-3);
    }

    #[test]
    fn transverse_case_matches_cubic_oracle() {
        let f = FieldComponents { bz_t: 0.01, bx_t: 0.002 };
        let pair = esr_frequencies(&params(), &f);
        let (lo, hi) = cubic_oracle_frequencies(&params(), &f);
        assert_relative_eq!(pair.f_minus_hz, lo, epsilon = 0.1);
        assert_relative_eq!(pair.f_plus_hz, hi, epsilon = 0.1);
        // The transverse field must actually shift the lines.
        assert!((pair.f_minus_hz - 2.5907e9).abs() > 1e3);
    }

    #[test]
    fn eigenvalue_trace_is_2d() {
        let p = params();
        for (bz, bx) in [(0.0, 0.0), (0.02, 0.001), (-0.03, 0.004), (0.05, 0.005)] {
            let h = hamiltonian(&p, &FieldComponents { bz_t: bz, bx_t: bx });
            let sum: f64 = h.symmetric_eigen().eigenvalues.iter().sum();
            assert!((sum - 2.0 * p.d_hz).abs() < 1e-6 * 2.0 * p.d_hz / 1e9 + 1e-6 * 6.0);
            assert!((sum - 2.0 * p.d_hz).abs() < 1e-4);
        }
    }

    #[test]
    fn axial_splitting_identity_and_monotonicity() {
        let p = params();
        let mut prev = esr_frequencies(&p, &FieldComponents { bz_t: 0.0, bx_t: 0.0 });
        for i in 1..=20 {
            let bz = i as f64 * 0.0025;
            let pair = esr_frequencies(&p, &FieldComponents { bz_t: bz, bx_t: 0.0 });
            assert_relative_eq!(
                pair.f_plus_hz - pair.f_minus_hz,
                2.0 * p.gamma_e_hz_per_t * bz,
                epsilon = 1e-4
            );
            assert!(pair.f_plus_hz > prev.f_plus_hz);
            assert!(pair.f_minus_hz < prev.f_minus_hz);
            prev = pair;
        }
    }

    #[test]
    fn invert_degenerate_pair_is_exactly_zero() {
        let p = params();
        let f = invert_field(
            &p,
            &EsrPair { f_minus_hz: p.d_hz, f_plus_hz: p.d_hz },
        )
        .unwrap();
        assert_eq!(f.bz_t, 0.0);
        assert_eq!(f.bx_t, 0.0);
    }

    #[test]
    fn invert_axial_pair() {
        let f = invert_field(
            &params(),
            &EsrPair { f_minus_hz: 2.5907e9, f_plus_hz: 3.1507e9 },
        )
        .unwrap();
        assert_relative_eq!(f.bz_t, 0.01, epsilon = 1e-9);
        assert!(f.bx_t.abs() < 1e-7);
    }

    #[test]
    fn invert_rejects_misordered_pair() {
        let err = invert_field(
            &params(),
            &EsrPair { f_minus_hz: 3.0e9, f_plus_hz: 2.9e9 },
        )
        .unwrap_err();
        assert!(matches!(err, SpinError::OutOfRange { .. }));
    }

    #[test]
    fn roundtrip_over_1000_random_fields() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let truth = FieldComponents {
                bz_t: rng.random::<f64>() * 0.05,
                bx_t: rng.random::<f64>() * 0.005,
            };
            let pair = esr_frequencies(&p, &truth);
            let back = invert_field(&p, &pair).unwrap();
            assert!(
                (back.bz_t - truth.bz_t).abs() < 1e-7,
                "bz {} vs {}",
                back.bz_t,
                truth.bz_t
            );
            assert!(
                (back.bx_t - truth.bx_t).abs() < 1e-7,
                "bx {} vs {}",
                back.bx_t,
                truth.bx_t
            );
        }
    }

    proptest! {
        #[test]
        fn prop_roundtrip_within_1e7_tesla(
            bz in 0.0..0.05f64,
            bx in 0.0..0.005f64,
        ) {
            let p = params();
            let pair = esr_frequencies(&p, &FieldComponents { bz_t: bz, bx_t: bx });
            let back = invert_field(&p, &pair).unwrap();
            prop_assert!((back.bz_t - bz).abs() < 1e-7);
            prop_assert!((back.bx_t - bx).abs() < 1e-7);
        }
    }

    fn uniform_esr_map(pair: EsrPair, mask: Vec<bool>) -> EsrMap {
        Grid::new(4, 3, 1e-6, vec![pair; 12], mask).unwrap()
    }

    #[test]
    fn uniform_map_inverts_uniformly() {
        let map = uniform_esr_map(
            EsrPair { f_minus_hz: 2.5907e9, f_plus_hz: 3.1507e9 },
            vec![true; 12],
        );
        let (out, report) = map_to_axial_field(&params(), &map);
        assert_eq!(report, InversionReport { attempted: 12, converged: 12, failed: 0 });
        for (_, _, bz, valid) in out.iter() {
            assert!(valid);
            assert_relative_eq!(bz, 0.01, epsilon = 1e-9);
        }
    }

    #[test]
    fn invalid_pixels_propagate() {
        let mut mask = vec![true; 12];
        mask[2] = false;
        mask[7] = false;
        let map = uniform_esr_map(
            EsrPair { f_minus_hz: 2.5907e9, f_plus_hz: 3.1507e9 },
            mask.clone(),
        );
        let (out, report) = map_to_axial_field(&params(), &map);
        assert_eq!(out.mask(), &mask[..]);
        assert_eq!(report.attempted, 10);
        assert_eq!(report.failed, 0);
    }

    #[test]
    fn interpolate_identity_on_all_valid() {
        let map = Grid::from_fn(5, 4, 1e-6, |ix, iy| (ix + 10 * iy) as f64).unwrap();
        let out = interpolate_missing(&map).unwrap();
        assert_eq!(out, map);
    }

    #[test]
    fn interpolate_fills_constant_hole() {
        let mut map = Grid::from_fn(5, 5, 1e-6, |_, _| 3.25).unwrap();
        map.set(2, 2, f64::NAN, false);
        let out = interpolate_missing(&map).unwrap();
        assert_eq!(out.value(2, 2), 3.25);
        assert_eq!(out.valid_count(), 25);
    }

    #[test]
    fn interpolate_linear_ramp_is_exact() {
        let ramp = |ix: usize, iy: usize| 2.0 * ix as f64 - 3.0 * iy as f64 + 0.5;
        let mut map = Grid::from_fn(7, 7, 1e-6, ramp).unwrap();
        map.set(3, 3, 0.0, false);
        let out = interpolate_missing(&map).unwrap();
        let expect = ramp(3, 3);
        assert!((out.value(3, 3) - expect).abs() <= 1e-12 * expect.abs());
        // Valid pixels are untouched.
        for (ix, iy, v, _) in out.iter() {
            if (ix, iy) != (3, 3) {
                assert_eq!(v, ramp(ix, iy));
            }
        }
    }

    #[test]
    fn interpolate_is_idempotent_and_iterates_over_big_holes() {
        let mut map = Grid::from_fn(9, 9, 1e-6, |ix, iy| (ix as f64) + (iy as f64)).unwrap();
        // 3x3 block of holes: the center needs a second pass.
        for iy in 3..6 {
            for ix in 3..6 {
                map.set(ix, iy, 0.0, false);
            }
        }
        let once = interpolate_missing(&map).unwrap();
        assert_eq!(once.valid_count(), 81);
        let twice = interpolate_missing(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn interpolate_all_invalid_errors() {
        let map = Grid::new(2, 2, 1e-6, vec![0.0; 4], vec![false; 4]).unwrap();
        assert!(matches!(interpolate_missing(&map), Err(SpinError::AllInvalid)));
    }
}
