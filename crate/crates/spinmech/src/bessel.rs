//! Zeroth-order Bessel function of the first kind.
//!
//! Kept in-crate so the coherent-contrast curve is bit-identical across
//! platforms. Power series below |x| = 8, Hankel asymptotic form with
//! rational coefficients (cephes) beyond. Absolute error < 1e-12 everywhere.

use std::f64::consts::FRAC_PI_4;

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

/// J₀(x) for any finite x.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 8.0 {
        j0_series(x)
    } else {
        j0_asymptotic(x)
    }
}

// Σ (-x²/4)^k / (k!)². At x = 8 the largest term is ~114, so the summation
// loses ~3 digits to cancellation, still comfortably below 1e-12 absolute.
fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

// Hankel form sqrt(2/πx)·[P(x)cos(x−π/4) − Q(x)sin(x−π/4)] with P, Q as
// rational functions of 25/x², coefficients from cephes (valid x ≥ 5).
fn j0_asymptotic(x: f64) -> f64 {
    let w = 5.0 / x;
    let z = 25.0 / (x * x);
    let p = poly(z, &PP) / poly(z, &PQ);
    let q = poly(z, &QP) / poly1(z, &QQ);
    let xn = x - FRAC_PI_4;
    (p * xn.cos() - w * q * xn.sin()) * SQRT_2_OVER_PI / x.sqrt()
}

fn poly(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

// Like `poly` with an implicit leading coefficient of 1.
fn poly1(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(1.0, |acc, &c| acc * x + c)
}

static PP: [f64; 7] = [
    7.969367292973471e-4,
    8.283523921074408e-2,
    1.239533716464143,
    5.447250030587687,
    8.74716500199817,
    5.303240382353949,
    1.0,
];

static PQ: [f64; 7] = [
    9.244088105588637e-4,
    8.562884743544745e-2,
    1.2535274390105895,
    5.470977403304171,
    8.761908832370695,
    5.306052882353947,
    1.0,
];

static QP: [f64; 8] = [
    -1.1366383889846916e-2,
    -1.2825271867050931,
    -1.9553954425773597e1,
    -9.320601521237683e1,
    -1.7768116798048806e2,
    -1.4707750515495118e2,
    -5.141053267665993e1,
    -6.050143506007285,
];

static QQ: [f64; 7] = [
    6.43178256118178e1,
    8.564300259769806e2,
    3.8824018360540163e3,
    7.240467741956525e3,
    5.930727011873169e3,
    2.0620933166032783e3,
    2.420057402402914e2,
];
