//! End-to-end GPnn: whiten, estimate hyperparameters on a subset, index the
//! training inputs, recalibrate, then predict each query from its `m`
//! nearest training neighbours.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, CalibrationResult, DEFAULT_CALIBRATION_SIZE};
use crate::data::{fit_whitening, Dataset, WhiteningTransform};
use crate::error::{GpnnError, Result};
use crate::gp::{predictive, PredictiveDistribution};
use crate::kernels::{KernelSpec, Theta};
use crate::linalg::Matrix;
use crate::nn_index::{NeighbourIndex, DEFAULT_LEAF_SIZE};
use crate::train::{estimate_theta_report, TrainConfig, TrainReport};

pub const DEFAULT_NEIGHBOURS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub train: TrainConfig,
    pub kernel: KernelSpec,
    pub m: usize,
    pub calibration_size: usize,
    pub calibrate: bool,
    /// Seeds the calibration-subset draw.
    pub seed: u64,
    pub leaf_size: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            train: TrainConfig::default(),
            kernel: KernelSpec::Rbf,
            m: DEFAULT_NEIGHBOURS,
            calibration_size: DEFAULT_CALIBRATION_SIZE,
            calibrate: true,
            seed: 0,
            leaf_size: DEFAULT_LEAF_SIZE,
        }
    }
}

/// Wall-clock seconds per fit phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FitTimings {
    pub whitening: f64,
    pub estimation: f64,
    pub index_build: f64,
    pub calibration: f64,
}

impl FitTimings {
    pub fn total(&self) -> f64 {
        self.whitening + self.estimation + self.index_build + self.calibration
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub train: TrainReport,
    pub calibration: Option<CalibrationResult>,
    pub timings: FitTimings,
}

/// A fitted, immutable GPnn predictor.
#[derive(Debug, Clone)]
pub struct GpnnModel {
    theta: Theta,
    theta_hat: Theta,
    spec: KernelSpec,
    m: usize,
    whitening: WhiteningTransform,
    index: NeighbourIndex,
    train_y: Vec<f64>,
    alpha: f64,
}

/// Nearest-neighbour GP predictor in whitened coordinates, borrowing its data.
#[derive(Debug, Clone, Copy)]
pub struct NeighbourPredictor<'a> {
    pub index: &'a NeighbourIndex,
    pub y: &'a [f64],
    pub theta: Theta,
    pub spec: KernelSpec,
    pub m: usize,
}

impl NeighbourPredictor<'_> {
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution> {
        let nb = self.index.query(x, self.m)?;
        self.predict_from(&nb.indices, x)
    }

    /// Predicts training point `self_idx` without letting it enter its own
    /// neighbour set.
    pub fn predict_leave_out(&self, x: &[f64], self_idx: usize) -> Result<PredictiveDistribution> {
        let n = self.index.len();
        if n < 2 {
            return Err(GpnnError::InvalidArgument("leave-one-out needs at least two points".into()));
        }
        let want = self.m.min(n - 1);
        let mut nb = self.index.query(x, want + 1)?.indices;
        match nb.iter().position(|&i| i == self_idx) {
            Some(pos) => {
                nb.remove(pos);
            }
            None => nb.truncate(want),
        }
        self.predict_from(&nb, x)
    }

    fn predict_from(&self, idx: &[usize], x: &[f64]) -> Result<PredictiveDistribution> {
        let xn = self.index.points().select_rows(idx);
        let yn: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        predictive(&self.theta, self.spec, &xn, &yn, x)
    }
}

/// Training rows used for calibration: `min(c, n)` distinct indices drawn with `seed`.
pub fn calibration_indices(n: usize, c: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, n, c.min(n)).into_vec()
}

pub fn fit(raw: &Dataset, cfg: &FitConfig) -> Result<GpnnModel> {
    fit_with_report(raw, cfg).map(|(m, _)| m)
}

pub fn fit_with_report(raw: &Dataset, cfg: &FitConfig) -> Result<(GpnnModel, FitReport)> {
    if raw.len() < 2 {
        return Err(GpnnError::InvalidArgument(format!("need at least 2 training points, got {}", raw.len())));
    }
    if cfg.m == 0 {
        return Err(GpnnError::InvalidArgument("m must be >= 1".into()));
    }
    let mut timings = FitTimings::default();

    let t = Instant::now();
    let whitening = fit_whitening(raw)?;
    let (wx, wy) = whitening.apply(&raw.x, Some(&raw.y))?;
    let wy = wy.expect("targets supplied");
    let white = Dataset {
        x: wx,
        y: wy,
        columns: raw.columns.clone(),
        provenance: raw.provenance.clone(),
    };
    timings.whitening = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let train = estimate_theta_report(&white, cfg.kernel, &cfg.train)?;
    timings.estimation = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let Dataset { x: wx, y: wy, .. } = white;
    let index = NeighbourIndex::build(wx, cfg.leaf_size)?;
    timings.index_build = t.elapsed().as_secs_f64();

    let theta_hat = train.theta;
    let calibration = if cfg.calibrate {
        let t = Instant::now();
        let chosen = calibration_indices(index.len(), cfg.calibration_size, cfg.seed);
        let cx = index.points().select_rows(&chosen);
        let cy: Vec<f64> = chosen.iter().map(|&i| wy[i]).collect();
        let predictor = NeighbourPredictor {
            index: &index,
            y: &wy,
            theta: theta_hat,
            spec: cfg.kernel,
            m: cfg.m,
        };
        let result = calibrate(|i, x| predictor.predict_leave_out(x, chosen[i]), &cx, &cy, &theta_hat)?;
        timings.calibration = t.elapsed().as_secs_f64();
        Some(result)
    } else {
        None
    };

    let (theta, alpha) = match &calibration {
        Some(c) => (c.theta_prime, c.alpha),
        None => (theta_hat, 1.0),
    };
    let model = GpnnModel {
        theta,
        theta_hat,
        spec: cfg.kernel,
        m: cfg.m,
        whitening,
        index,
        train_y: wy,
        alpha,
    };
    Ok((
        model,
        FitReport {
            train,
            calibration,
            timings,
        },
    ))
}

impl GpnnModel {
    /// Assembles a model from already-whitened training data.
    pub fn from_parts(
        theta: Theta,
        spec: KernelSpec,
        m: usize,
        whitening: WhiteningTransform,
        train_x: Matrix,
        train_y: Vec<f64>,
        leaf_size: usize,
    ) -> Result<Self> {
        theta.validate()?;
        if m == 0 {
            return Err(GpnnError::InvalidArgument("m must be >= 1".into()));
        }
        if train_x.rows() != train_y.len() {
            return Err(GpnnError::DimensionMismatch {
                expected: train_x.rows(),
                got: train_y.len(),
            });
        }
        if train_x.cols() != whitening.d {
            return Err(GpnnError::DimensionMismatch {
                expected: whitening.d,
                got: train_x.cols(),
            });
        }
        Ok(GpnnModel {
            theta,
            theta_hat: theta,
            spec,
            m,
            whitening,
            index: NeighbourIndex::build(train_x, leaf_size)?,
            train_y,
            alpha: 1.0,
        })
    }

    /// Hyperparameters used for prediction (after calibration).
    pub fn theta(&self) -> Theta {
        self.theta
    }

    /// Hyperparameters before calibration.
    pub fn theta_hat(&self) -> Theta {
        self.theta_hat
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn whitening(&self) -> &WhiteningTransform {
        &self.whitening
    }

    pub fn dim(&self) -> usize {
        self.whitening.d
    }

    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn index(&self) -> &NeighbourIndex {
        &self.index
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    /// Copy of this model predicting with different hyperparameters.
    pub fn with_theta(&self, theta: Theta) -> Self {
        GpnnModel { theta, ..self.clone() }
    }

    pub fn predictor(&self) -> NeighbourPredictor<'_> {
        NeighbourPredictor {
            index: &self.index,
            y: &self.train_y,
            theta: self.theta,
            spec: self.spec,
            m: self.m,
        }
    }

    /// Predictive distribution in whitened/standardized units.
    pub fn predict_normalized(&self, x_raw: &[f64]) -> Result<PredictiveDistribution> {
        let w = self.whitening.transform_point(x_raw)?;
        self.predictor().predict(&w)
    }

    /// Predictive distribution in raw output units.
    pub fn predict_point(&self, x_raw: &[f64]) -> Result<PredictiveDistribution> {
        let p = self.predict_normalized(x_raw)?;
        Ok(PredictiveDistribution {
            mean: self.whitening.inverse_y(p.mean),
            variance: self.whitening.inverse_variance(p.variance),
        })
    }

    pub fn predict_batch(&self, x_raw: &Matrix) -> Result<Vec<PredictiveDistribution>> {
        if x_raw.cols() != self.dim() {
            return Err(GpnnError::DimensionMismatch {
                expected: self.dim(),
                got: x_raw.cols(),
            });
        }
        (0..x_raw.rows())
            .into_par_iter()
            .map(|i| self.predict_point(x_raw.row(i)))
            .collect()
    }

    pub fn predict_batch_normalized(&self, x_raw: &Matrix) -> Result<Vec<PredictiveDistribution>> {
        if x_raw.cols() != self.dim() {
            return Err(GpnnError::DimensionMismatch {
                expected: self.dim(),
                got: x_raw.cols(),
            });
        }
        (0..x_raw.rows())
            .into_par_iter()
            .map(|i| self.predict_normalized(x_raw.row(i)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Persistence
//
// Layout (little endian):
//   magic "GPNNMDL\0" | version u32 | kernel u8 | m u64 | leaf_size u64
//   | n u64 | d u64 | theta 3xf64 | theta_hat 3xf64 | alpha f64
//   | mu_y f64 | sigma_y f64 | mu_x d | M d*d | M_inv d*d
//   | train_x n*d | train_y n | crc32 u32 (of every preceding byte)

const MAGIC: &[u8; 8] = b"GPNNMDL\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| GpnnError::CorruptFile("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| GpnnError::CorruptFile("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            count
                .checked_mul(8)
                .ok_or_else(|| GpnnError::CorruptFile("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Path of the plain-text metadata written next to a model file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.txt");
    PathBuf::from(s)
}

impl GpnnModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.n_train();
        let d = self.dim();
        let mut buf = Vec::with_capacity(128 + 8 * (n * (d + 1) + 2 * d * d + d));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(self.spec.tag());
        for v in [self.m, self.index.leaf_size(), n, d] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for t in [self.theta, self.theta_hat] {
            put_f64s(&mut buf, &[t.lengthscale, t.noise_var, t.signal_var]);
        }
        let w = &self.whitening;
        put_f64s(&mut buf, &[self.alpha, w.mu_y, w.sigma_y]);
        put_f64s(&mut buf, &w.mu_x);
        put_f64s(&mut buf, w.m.as_slice());
        put_f64s(&mut buf, w.m_inv.as_slice());
        put_f64s(&mut buf, self.index.points().as_slice());
        put_f64s(&mut buf, &self.train_y);
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(GpnnError::CorruptFile("bad magic header".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(GpnnError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < r.pos + 4 {
            return Err(GpnnError::CorruptFile("unexpected end of file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(GpnnError::CorruptFile("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: r.pos };
        let spec = KernelSpec::from_tag(r.u8()?).ok_or_else(|| GpnnError::CorruptFile("unknown kernel tag".into()))?;
        let m = r.usize()?;
        let leaf_size = r.usize()?;
        let n = r.usize()?;
        let d = r.usize()?;
        let theta = Theta::new(r.f64()?, r.f64()?, r.f64()?)?;
        let theta_hat = Theta::new(r.f64()?, r.f64()?, r.f64()?)?;
        let alpha = r.f64()?;
        let mu_y = r.f64()?;
        let sigma_y = r.f64()?;
        let mu_x = r.f64s(d)?;
        let mm = Matrix::from_vec(d, d, r.f64s(d * d)?)?;
        let m_inv = Matrix::from_vec(d, d, r.f64s(d * d)?)?;
        let train_x = Matrix::from_vec(n, d, r.f64s(n * d)?)?;
        let train_y = r.f64s(n)?;
        if r.pos != body.len() {
            return Err(GpnnError::CorruptFile("trailing bytes".into()));
        }
        let whitening = WhiteningTransform {
            mu_y,
            sigma_y,
            mu_x,
            m: mm,
            m_inv,
            d,
        };
        let mut model = GpnnModel::from_parts(theta, spec, m, whitening, train_x, train_y, leaf_size)?;
        model.theta_hat = theta_hat;
        model.alpha = alpha;
        Ok(model)
    }

    /// Human-readable summary written alongside the binary model.
    pub fn metadata(&self) -> String {
        format!(
            "format_version = {FORMAT_VERSION}\nkernel = {}\nm = {}\nn_train = {}\nd = {}\n\
             lengthscale = {}\nnoise_var = {}\nsignal_var = {}\nalpha = {}\n\
             lengthscale_hat = {}\nnoise_var_hat = {}\nsignal_var_hat = {}\nmu_y = {}\nsigma_y = {}\n",
            self.spec,
            self.m,
            self.n_train(),
            self.dim(),
            self.theta.lengthscale,
            self.theta.noise_var,
            self.theta.signal_var,
            self.alpha,
            self.theta_hat.lengthscale,
            self.theta_hat.noise_var,
            self.theta_hat.signal_var,
            self.whitening.mu_y,
            self.whitening.sigma_y,
        )
    }

    /// Writes the binary model and its `.meta.txt` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        fs::write(sidecar_path(path), self.metadata())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        GpnnModel::from_bytes(&fs::read(path)?)
    }
}
