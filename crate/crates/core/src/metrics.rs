//! Predictive performance measures: mean squared error, Gaussian negative log
//! predictive density, and the weak-calibration statistic (mean standardized
//! squared residual, which is 1 for a calibrated predictor).

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{GpnnError, Result};
use crate::gp::PredictiveDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    pub nll: f64,
    pub cal: f64,
    pub count: usize,
}

/// A report plus Monte-Carlo standard errors (sample sd / sqrt(count)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsWithErrors {
    pub report: MetricsReport,
    pub se_mse: f64,
    pub se_nll: f64,
    pub se_cal: f64,
}

/// Per-point squared error, negative log density and standardized squared residual.
#[inline]
pub fn pointwise(pred: &PredictiveDistribution, y: f64) -> (f64, f64, f64) {
    let e = (y - pred.mean) * (y - pred.mean);
    let z = e / pred.variance;
    let l = 0.5 * (pred.variance.ln() + z + (2.0 * PI).ln());
    (e, l, z)
}

fn check(preds: &[PredictiveDistribution], y: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(GpnnError::Empty("evaluation set"));
    }
    if preds.len() != y.len() {
        return Err(GpnnError::DimensionMismatch {
            expected: preds.len(),
            got: y.len(),
        });
    }
    if let Some(i) = preds.iter().position(|p| !(p.variance > 0.0)) {
        return Err(GpnnError::InvalidArgument(format!(
            "non-positive predictive variance {} at point {i}",
            preds[i].variance
        )));
    }
    Ok(())
}

pub fn evaluate(preds: &[PredictiveDistribution], y: &[f64]) -> Result<MetricsReport> {
    evaluate_with_errors(preds, y).map(|m| m.report)
}

/// Sums are accumulated in input order, so results are deterministic.
pub fn evaluate_with_errors(preds: &[PredictiveDistribution], y: &[f64]) -> Result<MetricsWithErrors> {
    check(preds, y)?;
    let mut acc = Accumulator::default();
    for (p, &t) in preds.iter().zip(y) {
        acc.push(pointwise(p, t));
    }
    Ok(acc.finish())
}

/// Running sums of the three per-point measures and their squares.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    n: usize,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Accumulator {
    pub fn push(&mut self, (e, l, z): (f64, f64, f64)) {
        self.n += 1;
        for (k, v) in [e, l, z].into_iter().enumerate() {
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn finish(&self) -> MetricsWithErrors {
        let n = self.n as f64;
        let mean = |k: usize| self.sum[k] / n;
        let se = |k: usize| {
            if self.n < 2 {
                return f64::NAN;
            }
            let m = mean(k);
            let var = ((self.sum_sq[k] - n * m * m) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        };
        let mse = mean(0);
        MetricsWithErrors {
            report: MetricsReport {
                mse,
                rmse: mse.sqrt(),
                nll: mean(1),
                cal: mean(2),
                count: self.n,
            },
            se_mse: se(0),
            se_nll: se(1),
            se_cal: se(2),
        }
    }
}

/// Large-`n` limits of (MSE, CAL, NLL) for a nearest-neighbour GP predictor
/// with `m` neighbours, true noise variance `sigma_xi2` and assumed noise
/// variance `sigma_xi2_hat`. Terms of order `1/m^2` are dropped.
pub fn asymptotic_limits(sigma_xi2: f64, sigma_xi2_hat: f64, m: usize) -> (f64, f64, f64) {
    let inflate = 1.0 + 1.0 / m as f64;
    let mse = sigma_xi2 * inflate;
    let cal = sigma_xi2 / sigma_xi2_hat;
    let nll = 0.5 * ((sigma_xi2_hat * inflate).ln() + cal + (2.0 * PI).ln());
    (mse, cal, nll)
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "count,mse,rmse,nll,cal";

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count = {}", self.count);
        let _ = writeln!(s, "mse = {}", self.mse);
        let _ = writeln!(s, "rmse = {}", self.rmse);
        let _ = writeln!(s, "nll = {}", self.nll);
        let _ = writeln!(s, "cal = {}", self.cal);
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.count, self.mse, self.rmse, self.nll, self.cal)
    }
}
