//! Monte-Carlo evaluation of nearest-neighbour GP prediction on synthetic GP
//! data, without ever sampling a full size-`n` dataset.
//!
//! A GPnn prediction at `x*` only looks at the `m` nearest training points,
//! so it is enough to sample the `(m+1)`-dimensional marginal of the
//! generative process over those neighbours and `x*`. The fast path
//! ([`run_local`]) does exactly that for every test point. The slow path
//! ([`run_full_joint`]) samples all `n+1` values jointly per test point and
//! then predicts from the neighbour subset; the two must agree in
//! distribution, which makes the slow path a validity oracle for small `n`.
//!
//! Every test point draws from its own RNG stream derived from
//! `(seed, point index)`, so results do not depend on thread scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{GpnnError, Result};
use crate::gp::{predictive, PredictiveDistribution};
use crate::kernels::{gram, KernelSpec, Theta};
use crate::linalg::{cholesky, Matrix};
use crate::metrics::{pointwise, asymptotic_limits, Accumulator, MetricsWithErrors};
use crate::nn_index::{NeighbourIndex, DEFAULT_LEAF_SIZE};

/// Distribution of the additive observation noise (always zero mean with the
/// generative noise variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDist {
    Gaussian,
    Laplace,
}

impl std::str::FromStr for NoiseDist {
    type Err = GpnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseDist::Gaussian),
            "laplace" => Ok(NoiseDist::Laplace),
            other => Err(GpnnError::InvalidArgument(format!("unknown noise distribution `{other}`"))),
        }
    }
}

/// An assumed (possibly misspecified) model used for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumedModel {
    pub kernel: KernelSpec,
    pub theta: Theta,
}

/// Simulation settings. Inputs are drawn from `N(0, I/d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub n_star: usize,
    pub m: usize,
    pub d: usize,
    pub gen_kernel: KernelSpec,
    pub gen_theta: Theta,
    pub noise: NoiseDist,
    pub assumed: Vec<AssumedModel>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_star == 0 || self.m == 0 || self.d == 0 {
            return Err(GpnnError::InvalidArgument("simulation sizes must be positive".into()));
        }
        if self.n < self.m {
            return Err(GpnnError::InvalidArgument(format!(
                "need n >= m (n = {}, m = {})",
                self.n, self.m
            )));
        }
        if self.assumed.is_empty() {
            return Err(GpnnError::InvalidArgument("no assumed models to evaluate".into()));
        }
        self.gen_theta.validate()?;
        for a in &self.assumed {
            a.theta.validate()?;
        }
        Ok(())
    }
}

/// Metrics for one assumed model at one training size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub n: usize,
    pub assumed: AssumedModel,
    pub metrics: MetricsWithErrors,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

/// RNG stream for one purpose within a run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_TRAIN_X: u64 = 0;
const STREAM_TEST_X: u64 = 1;
const STREAM_POINTS: u64 = 1 << 32;

/// `L z` with `z` standard normal and `L` the (jittered) Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(cov: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let chol = cholesky(cov)?;
    let k = cov.rows();
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let l = &chol.lower;
    Ok((0..k).map(|i| l.row(i)[..=i].iter().zip(&z).map(|(a, b)| a * b).sum()).collect())
}

/// Zero-mean Laplace sample with the given variance (scale `sqrt(var / 2)`).
pub fn sample_laplace<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> f64 {
    if variance <= 0.0 {
        return 0.0;
    }
    let b = (variance / 2.0).sqrt();
    let exp = Exp::new(1.0).expect("unit rate");
    b * (exp.sample(rng) - exp.sample(rng))
}

/// `count` points from `N(0, I/d)`.
pub fn draw_inputs<R: Rng + ?Sized>(count: usize, d: usize, rng: &mut R) -> Matrix {
    let sd = 1.0 / (d as f64).sqrt();
    let data = (0..count * d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(count, d, data).expect("sized")
}

/// Samples observations over `points`: latent GP values plus noise.
fn sample_observations<R: Rng + ?Sized>(
    points: &Matrix,
    kernel: KernelSpec,
    theta: &Theta,
    noise: NoiseDist,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match noise {
        NoiseDist::Gaussian => sample_mvn(&gram(theta, kernel, points), rng),
        NoiseDist::Laplace => {
            let mut latent_cov = gram(theta, kernel, points);
            for i in 0..points.rows() {
                latent_cov[(i, i)] -= theta.noise_var;
            }
            let mut y = sample_mvn(&latent_cov, rng)?;
            for v in y.iter_mut() {
                *v += sample_laplace(theta.noise_var, rng);
            }
            Ok(y)
        }
    }
}

/// Stored neighbourhood sample for one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPoint {
    pub neighbours: Vec<usize>,
    pub y_neighbours: Vec<f64>,
    pub y_star: f64,
}

/// Inputs plus the sampled neighbourhood responses for every test point.
#[derive(Debug, Clone)]
pub struct SampledNeighbourhoods {
    pub train_x: Matrix,
    pub test_x: Matrix,
    pub points: Vec<SimPoint>,
}

fn neighbour_sets(cfg: &SimConfig, train_x: &Matrix, test_x: &Matrix) -> Result<Vec<Vec<usize>>> {
    let index = NeighbourIndex::build(train_x.clone(), DEFAULT_LEAF_SIZE)?;
    (0..test_x.rows())
        .into_par_iter()
        .map(|i| index.query(test_x.row(i), cfg.m).map(|nb| nb.indices))
        .collect()
}

/// Sampling phase of the fast simulator: per test point, draw the joint
/// `(y_N, y*)` over its `m` neighbours and itself.
pub fn sample_local(cfg: &SimConfig, train_x: Matrix, test_x: Matrix) -> Result<SampledNeighbourhoods> {
    let sets = neighbour_sets(cfg, &train_x, &test_x)?;
    let points = sets
        .into_par_iter()
        .enumerate()
        .map(|(i, neighbours)| {
            let mut u = train_x.select_rows(&neighbours);
            let mut rows = u.into_vec();
            rows.extend_from_slice(test_x.row(i));
            u = Matrix::from_vec(neighbours.len() + 1, cfg.d, rows)?;
            let mut rng = stream_rng(cfg.seed, STREAM_POINTS + i as u64);
            let mut y = sample_observations(&u, cfg.gen_kernel, &cfg.gen_theta, cfg.noise, &mut rng)?;
            let y_star = y.pop().expect("m + 1 values");
            Ok(SimPoint {
                neighbours,
                y_neighbours: y,
                y_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledNeighbourhoods { train_x, test_x, points })
}

/// Sampling phase of the oracle: per test point, draw all `n` training
/// responses and `y*` jointly, then keep the neighbour subset.
pub fn sample_full_joint(cfg: &SimConfig, train_x: Matrix, test_x: Matrix) -> Result<SampledNeighbourhoods> {
    let sets = neighbour_sets(cfg, &train_x, &test_x)?;
    let n = train_x.rows();
    let points = sets
        .into_par_iter()
        .enumerate()
        .map(|(i, neighbours)| {
            let mut rows = train_x.as_slice().to_vec();
            rows.extend_from_slice(test_x.row(i));
            let all = Matrix::from_vec(n + 1, cfg.d, rows)?;
            let mut rng = stream_rng(cfg.seed, STREAM_POINTS + i as u64);
            let y = sample_observations(&all, cfg.gen_kernel, &cfg.gen_theta, cfg.noise, &mut rng)?;
            Ok(SimPoint {
                y_neighbours: neighbours.iter().map(|&j| y[j]).collect(),
                neighbours,
                y_star: y[n],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledNeighbourhoods { train_x, test_x, points })
}

impl SampledNeighbourhoods {
    /// Predictive distribution at every test point under an assumed model.
    pub fn predictions(&self, assumed: &AssumedModel) -> Result<Vec<PredictiveDistribution>> {
        self.points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let xn = self.train_x.select_rows(&p.neighbours);
                predictive(&assumed.theta, assumed.kernel, &xn, &p.y_neighbours, self.test_x.row(i))
            })
            .collect()
    }

    /// Evaluation phase: metrics for one assumed model, reduced in test-point order.
    pub fn evaluate(&self, assumed: &AssumedModel) -> Result<MetricsWithErrors> {
        let preds = self.predictions(assumed)?;
        let mut acc = Accumulator::default();
        for (p, s) in preds.iter().zip(&self.points) {
            acc.push(pointwise(p, s.y_star));
        }
        Ok(acc.finish())
    }
}

fn draw_train_test(cfg: &SimConfig) -> (Matrix, Matrix) {
    let train_x = draw_inputs(cfg.n, cfg.d, &mut stream_rng(cfg.seed, STREAM_TRAIN_X));
    let test_x = draw_inputs(cfg.n_star, cfg.d, &mut stream_rng(cfg.seed, STREAM_TEST_X));
    (train_x, test_x)
}

fn evaluate_all(cfg: &SimConfig, sampled: &SampledNeighbourhoods) -> Result<SweepResult> {
    let entries = cfg
        .assumed
        .iter()
        .map(|a| {
            Ok(SweepEntry {
                n: cfg.n,
                assumed: *a,
                metrics: sampled.evaluate(a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { entries })
}

/// Fast simulator: local `(m+1)`-dimensional sampling per test point.
pub fn run_local(cfg: &SimConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let (train_x, test_x) = draw_train_test(cfg);
    let sampled = sample_local(cfg, train_x, test_x)?;
    evaluate_all(cfg, &sampled)
}

/// Largest training size accepted by [`run_full_joint`].
pub const FULL_JOINT_MAX_N: usize = 500;

/// Expensive oracle: full `(n+1)`-dimensional joint sample per test point.
pub fn run_full_joint(cfg: &SimConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.n > FULL_JOINT_MAX_N {
        return Err(GpnnError::InvalidArgument(format!(
            "full-joint oracle is limited to n <= {FULL_JOINT_MAX_N}, got {}",
            cfg.n
        )));
    }
    let (train_x, test_x) = draw_train_test(cfg);
    let sampled = sample_full_joint(cfg, train_x, test_x)?;
    evaluate_all(cfg, &sampled)
}

/// Runs [`run_local`] once per training size, same seed for every size.
pub fn run_sweep(base: &SimConfig, ns: &[usize]) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    for &n in ns {
        let cfg = SimConfig { n, ..base.clone() };
        out.entries.extend(run_local(&cfg)?.entries);
    }
    Ok(out)
}

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "n,kernel_hat,lengthscale_hat,noise_var_hat,signal_var_hat,metric,value,stderr,mse_lim,cal_lim,nll_lim";

    /// Long format: one row per (n, assumed model, metric), with the
    /// large-`n` limits for the true noise variance `true_noise_var`.
    pub fn to_long_csv(&self, true_noise_var: f64, m: usize) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            let t = &e.assumed.theta;
            let (mse_lim, cal_lim, nll_lim) = asymptotic_limits(true_noise_var, t.noise_var, m);
            let r = &e.metrics;
            for (name, value, se) in [
                ("mse", r.report.mse, r.se_mse),
                ("nll", r.report.nll, r.se_nll),
                ("cal", r.report.cal, r.se_cal),
            ] {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    e.n,
                    e.assumed.kernel,
                    t.lengthscale,
                    t.noise_var,
                    t.signal_var,
                    name,
                    value,
                    se,
                    mse_lim,
                    cal_lim,
                    nll_lim
                );
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Synthetic datasets

/// Coefficients of the 15-input Oakley–O'Hagan test function
/// `a1'x + a2'sin(x) + a3'cos(x) + x'Mx`.
#[derive(Debug, Clone, PartialEq)]
pub struct OakleyCoefficients {
    pub a1: [f64; 15],
    pub a2: [f64; 15],
    pub a3: [f64; 15],
    pub m: [[f64; 15]; 15],
}

const BUNDLED_OAKLEY: &str = include_str!("../data/oakley_ohagan_15d.txt");

impl OakleyCoefficients {
    /// The published coefficient set shipped with this crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_OAKLEY).expect("bundled coefficients are valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GpnnError::Coefficients {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        Self::parse(&text).map_err(|reason| GpnnError::Coefficients {
            path: path.to_owned(),
            reason,
        })
    }

    /// Lines `a1 ...`, `a2 ...`, `a3 ...` (15 values each) and 15 `M ...`
    /// rows; `#` starts a comment.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut a = [None, None, None];
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next().expect("non-empty");
            let vals: std::result::Result<Vec<f64>, _> = toks.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| format!("line {}: {e}", ln + 1))?;
            let arr: [f64; 15] = vals
                .try_into()
                .map_err(|v: Vec<f64>| format!("line {}: expected 15 values, got {}", ln + 1, v.len()))?;
            match key {
                "a1" => a[0] = Some(arr),
                "a2" => a[1] = Some(arr),
                "a3" => a[2] = Some(arr),
                "M" => rows.push(arr),
                other => return Err(format!("line {}: unknown key `{other}`", ln + 1)),
            }
        }
        let [a1, a2, a3] = a;
        let missing = |k: &str| format!("missing `{k}` vector");
        let m: [[f64; 15]; 15] = rows
            .try_into()
            .map_err(|r: Vec<[f64; 15]>| format!("expected 15 `M` rows, got {}", r.len()))?;
        Ok(OakleyCoefficients {
            a1: a1.ok_or_else(|| missing("a1"))?,
            a2: a2.ok_or_else(|| missing("a2"))?,
            a3: a3.ok_or_else(|| missing("a3"))?,
            m,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut y = 0.0;
        for i in 0..15 {
            y += self.a1[i] * x[i] + self.a2[i] * x[i].sin() + self.a3[i] * x[i].cos();
            let mx: f64 = self.m[i].iter().zip(x).map(|(a, b)| a * b).sum();
            y += x[i] * mx;
        }
        y
    }
}

/// `x ~ N(0, I_15)`, `y = f(x) + Laplace noise` of variance `noise_var`.
pub fn gen_oakley_ohagan<R: Rng + ?Sized>(
    n: usize,
    noise_var: f64,
    rng: &mut R,
    coeffs: &OakleyCoefficients,
) -> Dataset {
    let mut data = Vec::with_capacity(n * 15);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 15] = std::array::from_fn(|_| rng.sample(StandardNormal));
        y.push(coeffs.eval(&x) + sample_laplace(noise_var, rng));
        data.extend_from_slice(&x);
    }
    let mut ds = Dataset::new(Matrix::from_vec(n, 15, data).expect("sized"), y).expect("aligned");
    ds.provenance = format!("oakley-ohagan synthetic, n = {n}, laplace noise variance {noise_var}");
    ds
}

/// GP data in independent blocks: inputs `N(0, I/d)`, each consecutive block
/// of `block_size` points sampled jointly from the noisy gram. Points in
/// different blocks are uncorrelated.
pub fn gen_gp_dataset<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    kernel: KernelSpec,
    theta: &Theta,
    block_size: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if block_size == 0 || d == 0 {
        return Err(GpnnError::InvalidArgument("block size and dimension must be positive".into()));
    }
    let x = draw_inputs(n, d, rng);
    let mut y = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + block_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        y.extend(sample_mvn(&gram(theta, kernel, &x.select_rows(&idx)), rng)?);
        start = end;
    }
    let mut ds = Dataset::new(x, y)?;
    ds.provenance = format!("gp blocks of {block_size}, kernel {kernel}, theta {theta:?}");
    Ok(ds)
}
