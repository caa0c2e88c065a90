//! Variance recalibration.
//!
//! Scaling both variance parameters by a common factor leaves every GP
//! predictive mean unchanged and scales every predictive variance by the same
//! factor. Choosing that factor as the mean standardized squared residual on
//! a calibration set therefore makes the predictor exactly weakly calibrated
//! on that set, and it is also the NLL-optimal common scaling there.

use rayon::prelude::*;

use crate::error::{GpnnError, Result};
use crate::gp::PredictiveDistribution;
use crate::kernels::Theta;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub theta_prime: Theta,
    pub calibration_set_size: usize,
}

/// Default calibration-set size.
pub const DEFAULT_CALIBRATION_SIZE: usize = 1000;

/// Calibrates from predictions already made under `theta_hat`.
pub fn calibrate_from_predictions(
    preds: &[PredictiveDistribution],
    ys: &[f64],
    theta_hat: &Theta,
) -> Result<CalibrationResult> {
    if preds.is_empty() {
        return Err(GpnnError::Empty("calibration set"));
    }
    if preds.len() != ys.len() {
        return Err(GpnnError::DimensionMismatch {
            expected: preds.len(),
            got: ys.len(),
        });
    }
    let mut sum = 0.0;
    for (i, (p, y)) in preds.iter().zip(ys).enumerate() {
        if !(p.variance > 0.0) {
            return Err(GpnnError::InvalidArgument(format!(
                "non-positive predictive variance {} at calibration point {i}",
                p.variance
            )));
        }
        sum += (y - p.mean) * (y - p.mean) / p.variance;
    }
    let alpha = sum / preds.len() as f64;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(GpnnError::InvalidArgument(format!("degenerate calibration factor {alpha}")));
    }
    Ok(CalibrationResult {
        alpha,
        theta_prime: theta_hat.scale_variances(alpha),
        calibration_set_size: preds.len(),
    })
}

/// Runs `predict(i, x_i)` for each calibration row (in parallel) and
/// calibrates. The row index lets the predictor exclude the point itself
/// from its own neighbourhood.
pub fn calibrate<F>(predict: F, xs: &Matrix, ys: &[f64], theta_hat: &Theta) -> Result<CalibrationResult>
where
    F: Fn(usize, &[f64]) -> Result<PredictiveDistribution> + Sync,
{
    if xs.rows() != ys.len() {
        return Err(GpnnError::DimensionMismatch {
            expected: xs.rows(),
            got: ys.len(),
        });
    }
    let preds: Vec<PredictiveDistribution> = (0..xs.rows())
        .into_par_iter()
        .map(|i| predict(i, xs.row(i)))
        .collect::<Result<_>>()?;
    calibrate_from_predictions(&preds, ys, theta_hat)
}
