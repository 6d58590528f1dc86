//! Shared Levenberg-Marquardt engine for the nonlinear least-squares fits
//! (dipole maps, Lorentzian PSDs, ringdowns, echo coupling curves).
//!
//! Damping schedule: λ starts at 1e-3, ×10 on a rejected step, ÷10 on an
//! accepted one, applied to the scaled normal equations
//! (JᵀJ + λ·diag(JᵀJ))·δ = −Jᵀr.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
}

pub struct LmOptions {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_scale: f64,
    /// Relative cost improvement below which an accepted step counts as converged.
    pub cost_tol: f64,
    /// Relative step norm below which an accepted step counts as converged.
    pub step_tol: f64,
    /// λ above which the search is considered stalled at a local optimum.
    pub lambda_max: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            lambda_init: 1e-3,
            lambda_scale: 10.0,
            cost_tol: 1e-14,
            step_tol: 1e-14,
            lambda_max: 1e15,
        }
    }
}

pub struct LmResult {
    pub params: DVector<f64>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// JᵀJ at the solution, for covariance estimates.
    pub jtj: DMatrix<f64>,
}

/// Minimize |r(p)|² with analytic Jacobian ∂r/∂p.
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    init: DVector<f64>,
    opts: &LmOptions,
) -> Result<LmResult, FitError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut params = init;
    let mut r = residuals(&params);
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda_init;

    let finish = |params: DVector<f64>, cost, iterations, converged, jtj| {
        Ok(LmResult {
            params,
            cost,
            iterations,
            converged,
            jtj,
        })
    };

    let mut jac = jacobian(&params);
    for iter in 0..opts.max_iterations {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        // Zero gradient means there is no descent direction to take.
        if jtr.amax() <= f64::MIN_POSITIVE {
            return finish(params, cost, iter, true, jtj);
        }

        // Inner loop: escalate λ until a step improves the cost.
        loop {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(f64::MIN_POSITIVE);
            }
            let step = damped.cholesky().map(|ch| ch.solve(&(-&jtr)));

            if let Some(step) = step {
                let trial = &params + &step;
                let trial_r = residuals(&trial);
                let trial_cost = trial_r.norm_squared();
                if trial_cost.is_finite() && trial_cost < cost {
                    let improvement = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                    let small_step = step.norm() <= opts.step_tol * (1.0 + params.norm());
                    params = trial;
                    r = trial_r;
                    cost = trial_cost;
                    lambda = (lambda / opts.lambda_scale).max(1e-12);
                    if improvement < opts.cost_tol || small_step || cost < 1e-300 {
                        let jac = jacobian(&params);
                        let jtj = jac.transpose() * &jac;
                        return finish(params, cost, iter + 1, true, jtj);
                    }
                    break;
                }
            }
            lambda *= opts.lambda_scale;
            if lambda > opts.lambda_max {
                // No improving step exists at any damping: local optimum.
                return finish(params, cost, iter + 1, true, jtj);
            }
        }
        jac = jacobian(&params);
    }
    Err(FitError::NoConvergence(opts.max_iterations))
}

/// Parameter covariance at the optimum: SSR/(n−k) · (JᵀJ)⁻¹.
/// None when the system is at or below the degrees-of-freedom floor or JᵀJ
/// is singular.
pub fn covariance(jtj: &DMatrix<f64>, cost: f64, n_points: usize) -> Option<DMatrix<f64>> {
    let k = jtj.nrows();
    if n_points <= k {
        return None;
    }
    let sigma2 = cost / (n_points - k) as f64;
    jtj.clone().try_inverse().map(|inv| inv * sigma2)
}
