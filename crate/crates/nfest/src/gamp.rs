//! Generalized approximate message passing for the linear Gaussian model
//! y = Phi * beta + n with independent CN(0, 1/eta_n) priors.
//!
//! Both likelihood and prior are Gaussian, so all GAMP messages are closed
//! form and the fixed point of the mean coincides with the direct posterior
//! mean; the marginal variances are the usual GAMP approximation of the
//! posterior covariance diagonal.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ComplexMatrix, ComplexVector};
use crate::error::{NfestError, Result};

/// Inner-loop controls for [`gamp_gaussian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GampConfig {
    pub max_inner_iters: usize,
    pub damping: f64,
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self { max_inner_iters: 50, damping: 0.7, tol: 1e-6, variance_floor: 1e-12 }
    }
}

impl GampConfig {
    fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0
            || !(self.damping > 0.0 && self.damping <= 1.0)
            || self.tol <= 0.0
            || self.variance_floor <= 0.0
        {
            return Err(NfestError::Config("invalid GAMP configuration".into()));
        }
        Ok(())
    }
}

/// Posterior mean and marginal variances of the coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GampResult {
    pub mean: ComplexVector,
    pub variance: DVector<f64>,
    pub iters_used: usize,
    pub converged: bool,
}

fn validate_inputs(
    phi: &ComplexMatrix,
    y: &ComplexVector,
    eta: &DVector<f64>,
    gamma: f64,
) -> Result<()> {
    if phi.nrows() != y.len() || phi.ncols() != eta.len() {
        return Err(NfestError::DimensionMismatch(format!(
            "phi is {}x{}, y has {}, eta has {}",
            phi.nrows(),
            phi.ncols(),
            y.len(),
            eta.len()
        )));
    }
    if gamma <= 0.0 {
        return Err(NfestError::Domain(format!("noise precision must be positive, got {gamma}")));
    }
    if eta.iter().any(|&e| e <= 0.0) {
        return Err(NfestError::Domain("all prior precisions must be positive".into()));
    }
    Ok(())
}

/// Sum-product GAMP for the Gaussian prior/likelihood pair.
///
/// Returns the best iterate flagged unconverged if the residual grows for
/// 10 consecutive iterations.
pub fn gamp_gaussian(
    phi: &ComplexMatrix,
    y: &ComplexVector,
    eta: &DVector<f64>,
    gamma: f64,
    cfg: &GampConfig,
) -> Result<GampResult> {
    validate_inputs(phi, y, eta, gamma)?;
    cfg.validate()?;
    let (t, n) = (phi.nrows(), phi.ncols());
    let noise_var = 1.0 / gamma;
    let damping = cfg.damping;

    let phi_sq = DMatrix::<f64>::from_fn(t, n, |i, j| phi[(i, j)].norm_sqr());
    let prior_var = DVector::<f64>::from_fn(n, |k, _| 1.0 / eta[k]);

    let mut x = ComplexVector::zeros(n);
    let mut tau_x = prior_var.clone();
    let mut s = ComplexVector::zeros(t);

    let mut best = (f64::INFINITY, x.clone(), tau_x.clone());
    let mut growth_streak = 0usize;
    let mut prev_residual = f64::INFINITY;
    let mut converged = false;
    let mut iters_used = 0usize;

    for iter in 0..cfg.max_inner_iters {
        iters_used = iter + 1;

        // Output-side linear step.
        let tau_p = &phi_sq * &tau_x;
        let z = phi * &x;
        let p = ComplexVector::from_fn(t, |i, _| z[i] - s[i] * tau_p[i]);

        // AWGN output channel.
        let s_new = ComplexVector::from_fn(t, |i, _| (y[i] - p[i]) / (tau_p[i] + noise_var));
        let tau_s = DVector::<f64>::from_fn(t, |i, _| 1.0 / (tau_p[i] + noise_var));
        s = ComplexVector::from_fn(t, |i, _| damping * s_new[i] + (1.0 - damping) * s[i]);

        // Input-side linear step.
        let denom = phi_sq.transpose() * &tau_s;
        let tau_r = DVector::<f64>::from_fn(n, |k, _| 1.0 / denom[k].max(cfg.variance_floor));
        let corr = phi.adjoint() * &s;
        let r = ComplexVector::from_fn(n, |k, _| x[k] + corr[k] * tau_r[k]);

        // Gaussian input channel: shrink towards the zero-mean prior.
        let x_new = ComplexVector::from_fn(n, |k, _| {
            let gain = prior_var[k] / (prior_var[k] + tau_r[k]);
            r[k] * gain
        });
        tau_x = DVector::<f64>::from_fn(n, |k, _| {
            let gain = prior_var[k] / (prior_var[k] + tau_r[k]);
            (gain * tau_r[k]).max(cfg.variance_floor)
        });
        let x_prev = x;
        x = ComplexVector::from_fn(n, |k, _| damping * x_new[k] + (1.0 - damping) * x_prev[k]);

        let residual = (y - phi * &x).norm();
        if residual < best.0 {
            best = (residual, x.clone(), tau_x.clone());
        }
        // Bounded oscillation near the best iterate is normal for damped
        // GAMP; only count growth that is also well above the best residual.
        if residual > prev_residual && residual > 2.0 * best.0 {
            growth_streak += 1;
            if growth_streak >= 10 {
                return Ok(GampResult {
                    mean: best.1,
                    variance: best.2,
                    iters_used,
                    converged: false,
                });
            }
        } else {
            growth_streak = 0;
        }
        prev_residual = residual;

        let change = (&x - &x_prev).norm();
        let scale = x.norm().max(1e-30);
        if change / scale < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(GampResult { mean: x, variance: tau_x, iters_used, converged })
}

/// Exact posterior via the dense normal equations; the inversion-based
/// reference that GAMP is checked against.
pub fn posterior_direct(
    phi: &ComplexMatrix,
    y: &ComplexVector,
    eta: &DVector<f64>,
    gamma: f64,
) -> Result<GampResult> {
    validate_inputs(phi, y, eta, gamma)?;
    let n = phi.ncols();
    if n > 4096 {
        return Err(NfestError::Argument(format!(
            "direct posterior guarded to N <= 4096, got {n}"
        )));
    }
    let mut a = phi.adjoint() * phi * Complex64::new(gamma, 0.0);
    for k in 0..n {
        a[(k, k)] += Complex64::new(eta[k], 0.0);
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| NfestError::Decomposition("normal equations not positive definite".into()))?;
    let psi = chol.inverse();
    let mean = &psi * (phi.adjoint() * y) * Complex64::new(gamma, 0.0);
    let variance = DVector::<f64>::from_fn(n, |k, _| psi[(k, k)].re.max(f64::MIN_POSITIVE));
    Ok(GampResult { mean, variance, iters_used: 1, converged: true })
}
