//! Dataset ingestion, prewhitening and seeded train/test splitting.
//!
//! Whitening maps training inputs to `(1/sqrt(d)) M^{-1} (x - mu_x)` where
//! `Sigma_x = M M^T` is the (population) sample covariance of the training
//! inputs, so whitened training inputs have covariance `I / d`. Outputs are
//! standardized with the training mean and standard deviation. All statistics
//! come from the training split only.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpnnError, Result};
use crate::linalg::{cholesky_exact, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub columns: Vec<String>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(GpnnError::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        let columns = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            x,
            y,
            columns,
            provenance: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            columns: self.columns.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// A column named in a header, or a 0-based position (negative counts from the end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(i64),
    Name(String),
}

/// Per-dataset loading rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub target: ColumnRef,
    #[serde(default)]
    pub drop: Vec<ColumnRef>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_true() -> bool {
    true
}

fn default_delimiter() -> char {
    ','
}

impl Recipe {
    /// Last column is the target, nothing dropped.
    pub fn last_column_target() -> Self {
        Recipe {
            target: ColumnRef::Index(-1),
            drop: Vec::new(),
            has_header: true,
            delimiter: ',',
        }
    }
}

/// Row accounting from [`load_csv`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub null_rows_dropped: usize,
    pub unparseable_rows_dropped: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.null_rows_dropped + self.unparseable_rows_dropped
    }
}

fn resolve(col: &ColumnRef, header: &[String], width: usize) -> Result<usize> {
    match col {
        ColumnRef::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GpnnError::MissingColumn(name.clone())),
        ColumnRef::Index(i) => {
            let idx = if *i < 0 { width as i64 + i } else { *i };
            if idx < 0 || idx as usize >= width {
                Err(GpnnError::MissingColumn(format!("#{i}")))
            } else {
                Ok(idx as usize)
            }
        }
    }
}

fn is_null(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "?")
}

/// Reads a numeric CSV. Rows with missing values or unparseable cells are
/// dropped and counted in the returned report.
pub fn load_csv(path: impl AsRef<Path>, recipe: &Recipe) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(recipe.has_header)
        .delimiter(recipe.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = if recipe.has_header {
        reader.headers()?.iter().map(str::to_owned).collect()
    } else {
        Vec::new()
    };

    let mut report = LoadReport::default();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.len();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        if width == 0 {
            width = record.len();
        }
        if record.len() != width {
            report.unparseable_rows_dropped += 1;
            continue;
        }
        if record.iter().any(is_null) {
            report.null_rows_dropped += 1;
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) => rows.push(v),
            Ok(_) => report.null_rows_dropped += 1,
            Err(_) => report.unparseable_rows_dropped += 1,
        }
    }
    if width == 0 {
        return Err(GpnnError::Empty("csv file has no columns"));
    }
    let names: Vec<String> = if header.is_empty() {
        (0..width).map(|j| format!("c{j}")).collect()
    } else {
        header
    };
    let target = resolve(&recipe.target, &names, width)?;
    let mut dropped = vec![false; width];
    dropped[target] = true;
    for c in &recipe.drop {
        dropped[resolve(c, &names, width)?] = true;
    }
    let features: Vec<usize> = (0..width).filter(|&j| !dropped[j]).collect();
    if rows.is_empty() {
        return Err(GpnnError::Empty("no usable rows in csv"));
    }
    if features.is_empty() {
        return Err(GpnnError::InvalidArgument("no feature columns remain".into()));
    }

    let mut data = Vec::with_capacity(rows.len() * features.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in &rows {
        data.extend(features.iter().map(|&j| r[j]));
        y.push(r[target]);
    }
    let x = Matrix::from_vec(rows.len(), features.len(), data)?;
    let ds = Dataset {
        x,
        y,
        columns: features.iter().map(|&j| names[j].clone()).collect(),
        provenance: format!(
            "{} (target `{}`, {} of {} rows kept)",
            path.display(),
            names[target],
            rows.len(),
            report.rows_read
        ),
    };
    Ok((ds, report))
}

/// Affine input whitening and output standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mu_y: f64,
    pub sigma_y: f64,
    pub mu_x: Vec<f64>,
    /// Lower Cholesky factor `M` of the training input covariance.
    pub m: Matrix,
    /// `M^{-1}`, lower triangular.
    pub m_inv: Matrix,
    pub d: usize,
}

impl WhiteningTransform {
    /// The identity map on both inputs and outputs.
    pub fn identity(d: usize) -> Self {
        let scale = (d as f64).sqrt();
        let mut m = Matrix::identity(d);
        let mut m_inv = Matrix::identity(d);
        for i in 0..d {
            m[(i, i)] = 1.0 / scale;
            m_inv[(i, i)] = scale;
        }
        WhiteningTransform {
            mu_y: 0.0,
            sigma_y: 1.0,
            mu_x: vec![0.0; d],
            m,
            m_inv,
            d,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d {
            return Err(GpnnError::DimensionMismatch { expected: self.d, got });
        }
        Ok(())
    }

    pub fn transform_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let scale = 1.0 / (self.d as f64).sqrt();
        let centred: Vec<f64> = x.iter().zip(&self.mu_x).map(|(a, b)| a - b).collect();
        Ok((0..self.d)
            .map(|i| scale * self.m_inv.row(i)[..=i].iter().zip(&centred).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x.cols())?;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let w = self.transform_point(x.row(i))?;
            out.row_mut(i).copy_from_slice(&w);
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mu_y) / self.sigma_y).collect()
    }

    /// Whitens inputs and, when given, standardizes outputs.
    pub fn apply(&self, x: &Matrix, y: Option<&[f64]>) -> Result<(Matrix, Option<Vec<f64>>)> {
        Ok((self.transform_x(x)?, y.map(|y| self.transform_y(y))))
    }

    pub fn inverse_point(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w.len())?;
        let scale = (self.d as f64).sqrt();
        Ok((0..self.d)
            .map(|i| self.mu_x[i] + scale * self.m.row(i)[..=i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    pub fn inverse_y(&self, y: f64) -> f64 {
        self.sigma_y * y + self.mu_y
    }

    pub fn inverse_variance(&self, v: f64) -> f64 {
        self.sigma_y * self.sigma_y * v
    }
}

/// Fits the whitening transform on training data (population moments).
///
/// A ridge of `1e-8 * trace(Sigma) / d` is added when the covariance is
/// numerically singular; if that still fails the offending input directions
/// are reported.
pub fn fit_whitening(train: &Dataset) -> Result<WhiteningTransform> {
    let n = train.len();
    let d = train.dim();
    if n < d + 1 {
        return Err(GpnnError::InvalidArgument(format!(
            "whitening needs at least d+1 = {} training rows, got {n}",
            d + 1
        )));
    }
    let nf = n as f64;
    let mu_y = train.y.iter().sum::<f64>() / nf;
    let var_y = train.y.iter().map(|v| (v - mu_y) * (v - mu_y)).sum::<f64>() / nf;
    if !(var_y > 0.0) {
        return Err(GpnnError::InvalidArgument("training targets are constant".into()));
    }

    let mut mu_x = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mu_x.iter_mut().zip(train.x.row(i)) {
            *m += v;
        }
    }
    mu_x.iter_mut().for_each(|m| *m /= nf);
    let mut cov = Matrix::zeros(d, d);
    let mut centred = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in centred.iter_mut().zip(train.x.row(i)).zip(&mu_x) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centred[a];
            for b in 0..=a {
                cov[(a, b)] += ca * centred[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / nf;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let avg_var = cov.diag_mean();
    let chol = match cholesky_exact(&cov) {
        Ok(c) if min_pivot_sq(&c.lower) > 1e-12 * avg_var => c,
        _ => {
            let mut ridged = cov.clone();
            for i in 0..d {
                ridged[(i, i)] += 1e-8 * avg_var;
            }
            cholesky_exact(&ridged).map_err(|_| GpnnError::SingularCovariance {
                directions: (0..d).filter(|&i| !(cov[(i, i)] > 1e-12 * avg_var)).collect(),
            })?
        }
    };
    let m = chol.lower.clone();
    let mut m_inv = Matrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for c in 0..d {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = chol.forward(&e)?;
        for r in 0..d {
            m_inv[(r, c)] = col[r];
        }
    }
    Ok(WhiteningTransform {
        mu_y,
        sigma_y: var_y.sqrt(),
        mu_x,
        m,
        m_inv,
        d,
    })
}

fn min_pivot_sq(l: &Matrix) -> f64 {
    (0..l.rows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min)
}

/// Seeded uniform split into `(train, test)`; the train part has
/// `round(train_fraction * n)` rows.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(ds.len(), train_fraction, seed)?;
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(GpnnError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let test = perm.split_off(n_train);
    Ok((perm, test))
}
