//! Point-dipole magnetic field model: field and analytic gradients, axial
//! projection onto the NV axis, and Levenberg-Marquardt fitting of a dipole
//! (3 moment + 3 position parameters) to a measured axial-field map.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::MU0_OVER_4PI;
use crate::fit::{self, FitError, LmOptions};
use crate::grid::{FieldMap, Grid};

#[derive(Debug, Error)]
pub enum DipoleError {
    #[error("field evaluated at the dipole position")]
    SingularPoint,
    #[error("dipole fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("degenerate map: {0}")]
    DegenerateMap(String),
}

/// Magnetic point dipole: moment in A·m², position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub moment_am2: Vector3<f64>,
    pub position_m: Vector3<f64>,
}

/// Unit vector along the NV quantization axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvAxis(Vector3<f64>);

impl NvAxis {
    /// Normalizes the given direction; errors on a zero vector.
    pub fn new(direction: Vector3<f64>) -> Result<Self, DipoleError> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(DipoleError::DegenerateMap("NV axis must be nonzero".into()));
        }
        Ok(Self(direction / n))
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }
}

/// Scan-plane geometry: pixel grid at a fixed height above the sample frame
/// origin. World pixel position is (ix·pitch, iy·pitch, height).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub nx: usize,
    pub ny: usize,
    pub pitch_m: f64,
    pub height_m: f64,
}

impl ScanGeometry {
    pub fn pixel_position(&self, ix: usize, iy: usize) -> Vector3<f64> {
        Vector3::new(ix as f64 * self.pitch_m, iy as f64 * self.pitch_m, self.height_m)
    }
}

/// Fit diagnostics. Residuals are Tesla; covariance is over the parameter
/// vector (mx, my, mz, px, py, pz) and absent when underdetermined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub rms_residual_t: f64,
    pub max_residual_t: f64,
    pub iterations: usize,
    pub converged: bool,
    pub covariance: Option<[[f64; 6]; 6]>,
}

/// B(r) = (μ0/4π)·[3(m·r̂)r̂ − m]/r³ at `point`, Tesla.
pub fn dipole_field(d: &Dipole, point: &Vector3<f64>) -> Result<Vector3<f64>, DipoleError> {
    let r = point - d.position_m;
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(DipoleError::SingularPoint);
    }
    Ok(raw_field(&d.moment_am2, &r))
}

fn raw_field(m: &Vector3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    let dist = r.norm();
    let u = r / dist;
    (u * (3.0 * m.dot(&u)) - m) * (MU0_OVER_4PI / dist.powi(3))
}

/// Spatial Jacobian ∂B_i/∂x_j of the dipole field at `point` (symmetric,
/// Tesla/meter).
pub fn field_jacobian(d: &Dipole, point: &Vector3<f64>) -> Result<Matrix3<f64>, DipoleError> {
    let r = point - d.position_m;
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(DipoleError::SingularPoint);
    }
    let u = r / dist;
    let m = d.moment_am2;
    let mu = m.dot(&u);
    let scale = 3.0 * MU0_OVER_4PI / dist.powi(4);
    let mut j = m * u.transpose() + u * m.transpose();
    j += Matrix3::identity() * mu;
    j -= u * u.transpose() * (5.0 * mu);
    Ok(j * scale)
}

/// Dipole field projected on the NV axis, Tesla.
pub fn axial_field(d: &Dipole, point: &Vector3<f64>, nv: &NvAxis) -> Result<f64, DipoleError> {
    Ok(dipole_field(d, point)?.dot(&nv.vector()))
}

/// Directional derivative of the axial field along `motion_axis`, T/m,
/// from the analytic field Jacobian.
pub fn axial_gradient(
    d: &Dipole,
    point: &Vector3<f64>,
    nv: &NvAxis,
    motion_axis: &Vector3<f64>,
) -> Result<f64, DipoleError> {
    let j = field_jacobian(d, point)?;
    Ok((nv.vector().transpose() * j * motion_axis)[(0, 0)])
}

// Axial-field design row wrt the moment: the model is linear in m,
// B·n = φ(p)ᵀ m with φ = k[3(n·r̂)r̂ − n]/r³.
fn moment_design_row(position: &Vector3<f64>, point: &Vector3<f64>, nv: &Vector3<f64>) -> Vector3<f64> {
    let r = point - position;
    let dist = r.norm();
    let u = r / dist;
    (u * (3.0 * nv.dot(&u)) - nv) * (MU0_OVER_4PI / dist.powi(3))
}

fn pack(d: &Dipole) -> DVector<f64> {
    DVector::from_vec(vec![
        d.moment_am2.x,
        d.moment_am2.y,
        d.moment_am2.z,
        d.position_m.x,
        d.position_m.y,
        d.position_m.z,
    ])
}

fn unpack(p: &DVector<f64>) -> Dipole {
    Dipole {
        moment_am2: Vector3::new(p[0], p[1], p[2]),
        position_m: Vector3::new(p[3], p[4], p[5]),
    }
}

/// Least-squares dipole fit to an axial-field map. Invalid pixels are
/// excluded. `init` seeds the search; when absent a coarse 3x3x3 grid search
/// over position (with the moment solved linearly per candidate) picks the
/// starting point.
pub fn fit_dipole(
    map: &FieldMap,
    nv: &NvAxis,
    init: Option<&Dipole>,
    scan_height_m: f64,
    max_iterations: usize,
) -> Result<(Dipole, FitReport), DipoleError> {
    let pixels: Vec<(Vector3<f64>, f64)> = map
        .iter()
        .filter(|&(_, _, _, valid)| valid)
        .map(|(ix, iy, value, _)| {
            let (x, y) = map.pos_m(ix, iy);
            (Vector3::new(x, y, scan_height_m), value)
        })
        .collect();

    if pixels.len() < 6 {
        return Err(DipoleError::DegenerateMap(format!(
            "{} valid pixels, need at least 6",
            pixels.len()
        )));
    }
    let vmin = pixels.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let vmax = pixels.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if vmax == vmin {
        return Err(DipoleError::DegenerateMap(
            "constant-valued map carries no field structure".into(),
        ));
    }

    let n = nv.vector();
    let start = match init {
        Some(d) => *d,
        None => grid_search_seed(&pixels, &n, map, scan_height_m)?,
    };

    let residuals = |p: &DVector<f64>| {
        let d = unpack(p);
        DVector::from_iterator(
            pixels.len(),
            pixels.iter().map(|(point, measured)| {
                let r = point - d.position_m;
                let dist = r.norm();
                if dist == 0.0 {
                    f64::INFINITY
                } else {
                    raw_field(&d.moment_am2, &r).dot(&n) - measured
                }
            }),
        )
    };
    let jacobian = |p: &DVector<f64>| {
        let d = unpack(p);
        DMatrix::from_fn(pixels.len(), 6, |i, j| {
            let point = &pixels[i].0;
            if j < 3 {
                moment_design_row(&d.position_m, point, &n)[j]
            } else {
                // r = point − position, so ∂/∂position = −∂/∂point.
                let jac = field_jacobian(&d, point).unwrap_or_else(|_| Matrix3::zeros());
                -(n.transpose() * jac)[(0, j - 3)]
            }
        })
    };

    let opts = LmOptions {
        max_iterations,
        ..LmOptions::default()
    };
    let out = fit::levenberg_marquardt(residuals, jacobian, pack(&start), &opts).map_err(
        |e| match e {
            FitError::NoConvergence(n) => DipoleError::NoConvergence(n),
            FitError::Degenerate(msg) => DipoleError::DegenerateMap(msg),
        },
    )?;

    // Scale-normalized conditioning guard: moment and position columns have
    // wildly different physical units, so the raw condition number is
    // meaningless; the correlation matrix is not.
    let diag: Vec<f64> = (0..6).map(|i| out.jtj[(i, i)]).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(DipoleError::DegenerateMap(
            "a fit parameter has no effect on the residuals".into(),
        ));
    }
    let corr = DMatrix::from_fn(6, 6, |i, j| out.jtj[(i, j)] / (diag[i] * diag[j]).sqrt());
    let eigs = corr.symmetric_eigen().eigenvalues;
    let emax = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let emin = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(emin > emax * 1e-14) {
        return Err(DipoleError::DegenerateMap(
            "residual Jacobian is rank-deficient".into(),
        ));
    }

    let fitted = unpack(&out.params);
    let final_res = residuals(&out.params);
    let rms = (final_res.norm_squared() / pixels.len() as f64).sqrt();
    let max_abs = final_res.amax();
    let covariance = fit::covariance(&out.jtj, out.cost, pixels.len()).map(|c| {
        let mut a = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                a[i][j] = c[(i, j)];
            }
        }
        a
    });
    Ok((
        fitted,
        FitReport {
            rms_residual_t: rms,
            max_residual_t: max_abs,
            iterations: out.iterations,
            converged: out.converged,
            covariance,
        },
    ))
}

fn grid_search_seed(
    pixels: &[(Vector3<f64>, f64)],
    nv: &Vector3<f64>,
    map: &FieldMap,
    scan_height_m: f64,
) -> Result<Dipole, DipoleError> {
    let extent = map.pitch_m() * map.nx().max(map.ny()) as f64;
    let cx = map.pitch_m() * (map.nx() - 1) as f64 / 2.0;
    let cy = map.pitch_m() * (map.ny() - 1) as f64 / 2.0;
    let mut best: Option<(f64, Dipole)> = None;
    for &dx in &[-0.25, 0.0, 0.25] {
        for &dy in &[-0.25, 0.0, 0.25] {
            for &dz in &[0.25, 0.5, 1.0] {
                let pos = Vector3::new(cx + dx * extent, cy + dy * extent, scan_height_m - dz * extent);
                // Linear least squares for the moment at this position.
                let phi = DMatrix::from_fn(pixels.len(), 3, |i, j| {
                    moment_design_row(&pos, &pixels[i].0, nv)[j]
                });
                let y = DVector::from_iterator(pixels.len(), pixels.iter().map(|p| p.1));
                let svd = phi.clone().svd(true, true);
                let Ok(m) = svd.solve(&y, 1e-18) else { continue };
                let ssr = (phi * &m - y).norm_squared();
                let cand = Dipole {
                    moment_am2: Vector3::new(m[0], m[1], m[2]),
                    position_m: pos,
                };
                if best.as_ref().is_none_or(|(c, _)| ssr < *c) {
                    best = Some((ssr, cand));
                }
            }
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| DipoleError::DegenerateMap("grid search found no usable seed".into()))
}

/// Axial-gradient map of a dipole over a scan grid along `motion_axis`;
/// returns the map and the grid maximum of |gradient|.
pub fn gradient_map(
    d: &Dipole,
    geometry: &ScanGeometry,
    nv: &NvAxis,
    motion_axis: &Vector3<f64>,
) -> Result<(FieldMap, f64), DipoleError> {
    let mut values = Vec::with_capacity(geometry.nx * geometry.ny);
    for iy in 0..geometry.ny {
        for ix in 0..geometry.nx {
            let point = geometry.pixel_position(ix, iy);
            values.push(axial_gradient(d, &point, nv, motion_axis)?);
        }
    }
    let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let map = Grid::new(
        geometry.nx,
        geometry.ny,
        geometry.pitch_m,
        values,
        vec![true; geometry.nx * geometry.ny],
    )
    .expect("geometry validated by construction");
    Ok((map, max_abs))
}
