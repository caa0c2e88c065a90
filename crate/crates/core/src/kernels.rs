//! Stationary isotropic covariance functions.
//!
//! Every family is expressed through a normalised correlation `c(r)` of the
//! scaled distance `r = |x - x'| / l`, with `c(0) = 1` and `c` strictly
//! decreasing in `r`. The latter means that nearest neighbours under the
//! kernel-induced distance are the Euclidean nearest neighbours.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GpnnError, Result};
use crate::linalg::Matrix;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Kernel hyperparameters: isotropic lengthscale, additive noise variance and
/// signal variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub lengthscale: f64,
    pub noise_var: f64,
    pub signal_var: f64,
}

impl Theta {
    pub fn new(lengthscale: f64, noise_var: f64, signal_var: f64) -> Result<Self> {
        let theta = Theta {
            lengthscale,
            noise_var,
            signal_var,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.lengthscale) && ok(self.noise_var) && ok(self.signal_var) {
            Ok(())
        } else {
            Err(GpnnError::InvalidArgument(format!(
                "hyperparameters must be finite and strictly positive, got {self:?}"
            )))
        }
    }

    /// Optimizer coordinates `(log l, log noise_var, log signal_var)`.
    pub fn to_log(&self) -> [f64; 3] {
        [
            self.lengthscale.ln(),
            self.noise_var.ln(),
            self.signal_var.ln(),
        ]
    }

    pub fn from_log(log: [f64; 3]) -> Self {
        Theta {
            lengthscale: log[0].exp(),
            noise_var: log[1].exp(),
            signal_var: log[2].exp(),
        }
    }

    /// Multiplies both variance parameters by `factor`, keeping the lengthscale.
    pub fn scale_variances(&self, factor: f64) -> Self {
        Theta {
            lengthscale: self.lengthscale,
            noise_var: factor * self.noise_var,
            signal_var: factor * self.signal_var,
        }
    }
}

impl Default for Theta {
    /// Neutral starting point for unit-scale (whitened) data.
    fn default() -> Self {
        Theta {
            lengthscale: 1.0,
            noise_var: 0.1,
            signal_var: 0.9,
        }
    }
}

/// Covariance function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    /// Squared exponential, `exp(-r^2 / 2)`.
    Rbf,
    /// Matérn 1/2, `exp(-r)`.
    Exponential,
    /// Matérn 3/2, `(1 + sqrt(3) r) exp(-sqrt(3) r)`.
    Matern32,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 3] = [KernelSpec::Rbf, KernelSpec::Exponential, KernelSpec::Matern32];

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf => "rbf",
            KernelSpec::Exponential => "exponential",
            KernelSpec::Matern32 => "matern32",
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            KernelSpec::Rbf => 0,
            KernelSpec::Exponential => 1,
            KernelSpec::Matern32 => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(KernelSpec::Rbf),
            1 => Some(KernelSpec::Exponential),
            2 => Some(KernelSpec::Matern32),
            _ => None,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelSpec {
    type Err = GpnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelSpec::Rbf),
            "exponential" => Ok(KernelSpec::Exponential),
            "matern32" => Ok(KernelSpec::Matern32),
            other => Err(GpnnError::InvalidArgument(format!(
                "unknown kernel family `{other}` (expected rbf, exponential or matern32)"
            ))),
        }
    }
}

/// Normalised correlation at scaled distance `r >= 0`.
#[inline]
pub fn corr(spec: KernelSpec, r: f64) -> f64 {
    match spec {
        KernelSpec::Rbf => (-0.5 * r * r).exp(),
        KernelSpec::Exponential => (-r).exp(),
        KernelSpec::Matern32 => {
            let s = SQRT3 * r;
            (1.0 + s) * (-s).exp()
        }
    }
}

/// `d c(|x - x'| / l) / d log l`, i.e. `-r c'(r)`.
#[inline]
pub(crate) fn corr_dlog_lengthscale(spec: KernelSpec, r: f64) -> f64 {
    match spec {
        KernelSpec::Rbf => r * r * (-0.5 * r * r).exp(),
        KernelSpec::Exponential => r * (-r).exp(),
        KernelSpec::Matern32 => 3.0 * r * r * (-SQRT3 * r).exp(),
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(GpnnError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Scaled distance `|x - x'| / l`.
#[inline]
pub(crate) fn scaled_dist(theta: &Theta, x: &[f64], x2: &[f64]) -> f64 {
    sq_dist(x, x2).sqrt() / theta.lengthscale
}

/// Covariance between two points. `add_noise` is set only for a gram
/// diagonal entry: noise belongs to an observation, not to a location.
pub fn kernel(theta: &Theta, spec: KernelSpec, x: &[f64], x2: &[f64], add_noise: bool) -> Result<f64> {
    check_dims(x, x2)?;
    let k = theta.signal_var * corr(spec, scaled_dist(theta, x, x2));
    Ok(if add_noise { k + theta.noise_var } else { k })
}

/// Noisy gram matrix over the rows of `x`. Only the upper triangle is
/// evaluated, so the result is exactly symmetric.
pub fn gram(theta: &Theta, spec: KernelSpec, x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = theta.signal_var + theta.noise_var;
        for j in (i + 1)..n {
            let v = theta.signal_var * corr(spec, scaled_dist(theta, x.row(i), x.row(j)));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Noise-free covariances between each row of `x` and `xstar`.
pub fn cross_vector(theta: &Theta, spec: KernelSpec, x: &Matrix, xstar: &[f64]) -> Result<Vec<f64>> {
    if x.cols() != xstar.len() {
        return Err(GpnnError::DimensionMismatch {
            expected: x.cols(),
            got: xstar.len(),
        });
    }
    Ok((0..x.rows())
        .map(|i| theta.signal_var * corr(spec, scaled_dist(theta, x.row(i), xstar)))
        .collect())
}

/// Kernel-induced distance `sigma_f * sqrt(1 - c(x/l, x'/l))`.
pub fn kernel_distance(theta: &Theta, spec: KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dims(x, x2)?;
    let c = corr(spec, scaled_dist(theta, x, x2));
    Ok((theta.signal_var * (1.0 - c).max(0.0)).sqrt())
}
