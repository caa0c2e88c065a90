//! Cheap hyperparameter estimation.
//!
//! A random subset of `e` training points is split into `w = e / s` blocks of
//! size `s`. The gram matrix of the subset is approximated as block diagonal,
//! so the marginal-likelihood loss is a sum of per-block losses. That sum is
//! minimized over log-parameters with Adam using full-batch gradients. The
//! cost depends on `e` and `s` only, not on the training set size.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GpnnError, Result};
use crate::gp::nll_and_gradient;
use crate::kernels::{KernelSpec, Theta};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub subset_size: usize,
    pub block_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub init_theta: Theta,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            subset_size: 3000,
            block_size: 300,
            learning_rate: 0.1,
            iterations: 100,
            seed: 0,
            init_theta: Theta::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.subset_size == 0 {
            return Err(GpnnError::InvalidArgument("subset and block sizes must be >= 1".into()));
        }
        if self.subset_size % self.block_size != 0 {
            return Err(GpnnError::InvalidArgument(format!(
                "block size {} must divide subset size {}",
                self.block_size, self.subset_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GpnnError::InvalidArgument("learning rate must be positive".into()));
        }
        self.init_theta.validate()
    }

    /// Effective `(e, s)` for a training set of `n` points: both are clamped
    /// to `n`, and `e` is rounded down to a whole number of blocks.
    pub fn effective_sizes(&self, n: usize) -> (usize, usize) {
        let e = self.subset_size.min(n);
        let s = self.block_size.min(e).max(1);
        (e / s * s, s)
    }
}

/// Adam moments for the three log-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: [f64; 3],
    pub second: [f64; 3],
    pub step: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(learning_rate: f64) -> Self {
        OptimizerState {
            first: [0.0; 3],
            second: [0.0; 3],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Advances the moments with `gradient` and returns the parameter delta.
    pub fn step(&mut self, gradient: [f64; 3]) -> Result<[f64; 3]> {
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(GpnnError::NonFiniteGradient {
                step: self.step,
                gradient,
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut delta = [0.0; 3];
        for k in 0..3 {
            self.first[k] = self.beta1 * self.first[k] + (1.0 - self.beta1) * gradient[k];
            self.second[k] = self.beta2 * self.second[k] + (1.0 - self.beta2) * gradient[k] * gradient[k];
            let m_hat = self.first[k] / c1;
            let v_hat = self.second[k] / c2;
            delta[k] = -self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(delta)
    }
}

/// Outcome of [`estimate_theta_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub theta: Theta,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_iteration: usize,
    pub subset_size: usize,
    pub block_size: usize,
}

struct Blocks {
    x: Vec<Matrix>,
    y: Vec<Vec<f64>>,
}

impl Blocks {
    fn draw(data: &Dataset, e: usize, s: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = index::sample(&mut rng, data.len(), e).into_vec();
        let (x, y) = chosen
            .chunks(s)
            .map(|idx| (data.x.select_rows(idx), idx.iter().map(|&i| data.y[i]).collect()))
            .unzip();
        Blocks { x, y }
    }

    /// Summed loss and gradient; block results are reduced in block order.
    fn loss_and_gradient(&self, theta: &Theta, spec: KernelSpec) -> Result<(f64, [f64; 3])> {
        let per_block: Vec<Result<(f64, [f64; 3])>> = (0..self.x.len())
            .into_par_iter()
            .map(|b| {
                nll_and_gradient(theta, spec, &self.x[b], &self.y[b]).map_err(|e| GpnnError::TrainingFailed {
                    block: b,
                    source: Box::new(e),
                })
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = [0.0; 3];
        for r in per_block {
            let (l, g) = r?;
            loss += l;
            for k in 0..3 {
                grad[k] += g[k];
            }
        }
        Ok((loss, grad))
    }
}

pub fn estimate_theta(data: &Dataset, spec: KernelSpec, cfg: &TrainConfig) -> Result<Theta> {
    estimate_theta_report(data, spec, cfg).map(|r| r.theta)
}

/// Minimizes the block-diagonal loss and returns the best iterate seen.
pub fn estimate_theta_report(data: &Dataset, spec: KernelSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(GpnnError::Empty("training data"));
    }
    let (e, s) = cfg.effective_sizes(data.len());
    let blocks = Blocks::draw(data, e, s, cfg.seed);

    let mut params = cfg.init_theta.to_log();
    let mut opt = OptimizerState::new(cfg.learning_rate);
    let mut best = (f64::INFINITY, cfg.init_theta, 0);
    let mut initial_loss = f64::NAN;
    for it in 0..=cfg.iterations {
        let theta = if it == 0 { cfg.init_theta } else { Theta::from_log(params) };
        let (loss, grad) = blocks.loss_and_gradient(&theta, spec)?;
        if it == 0 {
            initial_loss = loss;
        }
        if loss < best.0 {
            best = (loss, theta, it);
        }
        if it == cfg.iterations {
            break;
        }
        let delta = opt.step(grad)?;
        for k in 0..3 {
            params[k] += delta[k];
        }
    }
    Ok(TrainReport {
        theta: best.1,
        initial_loss,
        best_loss: best.0,
        best_iteration: best.2,
        subset_size: e,
        block_size: s,
    })
}
