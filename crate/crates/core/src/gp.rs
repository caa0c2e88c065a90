//! Exact GP predictive equations and the marginal-likelihood objective.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{GpnnError, Result};
use crate::kernels::{corr, corr_dlog_lengthscale, cross_vector, gram, scaled_dist, KernelSpec, Theta};
use crate::linalg::{cholesky, dot, Matrix};

/// Gaussian predictive distribution of a noisy observation at a query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

static VARIANCE_CLAMPS: AtomicU64 = AtomicU64::new(0);

/// Number of predictions (process-wide) whose raw variance fell below the
/// noise floor and was clamped.
pub fn variance_clamp_count() -> u64 {
    VARIANCE_CLAMPS.load(Ordering::Relaxed)
}

/// Predictive mean `k*^T K^{-1} y` and variance
/// `signal_var - k*^T K^{-1} k* + noise_var` from the given neighbourhood.
pub fn predictive(
    theta: &Theta,
    spec: KernelSpec,
    xn: &Matrix,
    yn: &[f64],
    xstar: &[f64],
) -> Result<PredictiveDistribution> {
    if xn.rows() == 0 {
        return Err(GpnnError::Empty("neighbour set"));
    }
    if yn.len() != xn.rows() {
        return Err(GpnnError::DimensionMismatch {
            expected: xn.rows(),
            got: yn.len(),
        });
    }
    let kstar = cross_vector(theta, spec, xn, xstar)?;
    let chol = cholesky(&gram(theta, spec, xn))?;
    let v = chol.forward(&kstar)?;
    let w = chol.forward(yn)?;
    let mean = dot(&v, &w);
    let raw = theta.signal_var - dot(&v, &v) + theta.noise_var;
    let floor = theta.noise_var * (1.0 - 1e-12);
    let variance = if raw < floor {
        VARIANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
        floor
    } else {
        raw
    };
    Ok(PredictiveDistribution { mean, variance })
}

fn check_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(GpnnError::Empty("training block"));
    }
    if y.len() != x.rows() {
        return Err(GpnnError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Negative log marginal likelihood `½(yᵀK⁻¹y + log|K| + s log 2π)`.
pub fn log_marginal_nll(theta: &Theta, spec: KernelSpec, x: &Matrix, y: &[f64]) -> Result<f64> {
    check_data(x, y)?;
    let chol = cholesky(&gram(theta, spec, x))?;
    let z = chol.forward(y)?;
    Ok(0.5 * (dot(&z, &z) + chol.log_det() + y.len() as f64 * (2.0 * PI).ln()))
}

/// Gradient of [`log_marginal_nll`] with respect to
/// `(log lengthscale, log noise_var, log signal_var)`.
pub fn nll_gradient(theta: &Theta, spec: KernelSpec, x: &Matrix, y: &[f64]) -> Result<[f64; 3]> {
    nll_and_gradient(theta, spec, x, y).map(|(_, g)| g)
}

/// Loss and log-parameter gradient sharing one factorization.
pub fn nll_and_gradient(theta: &Theta, spec: KernelSpec, x: &Matrix, y: &[f64]) -> Result<(f64, [f64; 3])> {
    check_data(x, y)?;
    let s = x.rows();
    let chol = cholesky(&gram(theta, spec, x))?;
    let z = chol.forward(y)?;
    let loss = 0.5 * (dot(&z, &z) + chol.log_det() + s as f64 * (2.0 * PI).ln());
    let alpha = chol.solve(y)?;
    let kinv = chol.inverse();

    // ½ tr(W dK) with W = K⁻¹ - ααᵀ, accumulated over the symmetric pattern.
    let mut g_len = 0.0;
    let mut g_sig = 0.0;
    let mut tr_w = 0.0;
    for i in 0..s {
        let wii = kinv[(i, i)] - alpha[i] * alpha[i];
        tr_w += wii;
        g_sig += wii * theta.signal_var;
        for j in (i + 1)..s {
            let wij = kinv[(i, j)] - alpha[i] * alpha[j];
            let r = scaled_dist(theta, x.row(i), x.row(j));
            g_sig += 2.0 * wij * theta.signal_var * corr(spec, r);
            g_len += 2.0 * wij * theta.signal_var * corr_dlog_lengthscale(spec, r);
        }
    }
    let grad = [0.5 * g_len, 0.5 * theta.noise_var * tr_w, 0.5 * g_sig];
    Ok((loss, grad))
}
