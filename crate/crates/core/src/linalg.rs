//! Small dense linear algebra: a row-major matrix and a jittered Cholesky
//! factorization sized for neighbourhood-scale systems (a few hundred rows).

use std::ops::{Index, IndexMut};

use crate::error::{GpnnError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GpnnError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(GpnnError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(GpnnError::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn diag_mean(&self) -> f64 {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self[(i, i)]).sum::<f64>() / n as f64
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative jitter levels tried in order, as multiples of `mean(diag(A))`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor of `A + jitter_used * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: Matrix,
    pub jitter_used: f64,
}

/// Factorizes a symmetric matrix, escalating diagonal jitter through
/// [`JITTER_LADDER`] until every pivot is positive.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    if a.rows() != a.cols() {
        return Err(GpnnError::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let scale = a.diag_mean();
    let mut last_pivot = 0;
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        match factorize(a, jitter) {
            Ok(lower) => {
                return Ok(CholeskyFactor {
                    lower,
                    jitter_used: jitter,
                })
            }
            Err(pivot) => last_pivot = pivot,
        }
    }
    Err(GpnnError::NotPositiveDefinite { pivot: last_pivot })
}

/// Factorizes without any jitter.
pub fn cholesky_exact(a: &Matrix) -> Result<CholeskyFactor> {
    if a.rows() != a.cols() {
        return Err(GpnnError::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    factorize(a, 0.0)
        .map(|lower| CholeskyFactor {
            lower,
            jitter_used: 0.0,
        })
        .map_err(|pivot| GpnnError::NotPositiveDefinite { pivot })
}

/// Row-oriented Cholesky–Crout; returns the index of the first failing pivot.
fn factorize(a: &Matrix, jitter: f64) -> std::result::Result<Matrix, usize> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / l[(j, j)];
        }
        let d = a[(i, i)] + jitter - dot(&l.row(i)[..i], &l.row(i)[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(i);
        }
        l[(i, i)] = d.sqrt();
    }
    Ok(l)
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(GpnnError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let l = &self.lower;
        let mut z = b.to_vec();
        for i in 0..z.len() {
            let s = z[i] - dot(&l.row(i)[..i], &z[..i]);
            z[i] = s / l[(i, i)];
        }
        Ok(z)
    }

    /// Solves `L^T x = z` in place, sweeping rows of `L` so access stays contiguous.
    fn backward_in_place(&self, z: &mut [f64]) {
        let l = &self.lower;
        for i in (0..z.len()).rev() {
            z[i] /= l[(i, i)];
            let xi = z[i];
            for (zk, lik) in z[..i].iter_mut().zip(&l.row(i)[..i]) {
                *zk -= lik * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.forward(b)?;
        self.backward_in_place(&mut z);
        Ok(z)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        self.check_len(b.rows())?;
        let bt = b.transpose();
        let mut out = Matrix::zeros(bt.rows(), bt.cols());
        for c in 0..bt.rows() {
            let x = self.solve(bt.row(c))?;
            out.row_mut(c).copy_from_slice(&x);
        }
        Ok(out.transpose())
    }

    /// `L^{-1}`, lower triangular.
    pub fn lower_inverse(&self) -> Matrix {
        let n = self.dim();
        let l = &self.lower;
        let mut x = Matrix::zeros(n, n);
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc[..i].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..i {
                let lik = l[(i, k)];
                if lik != 0.0 {
                    for (a, xk) in acc[..=k].iter_mut().zip(&x.row(k)[..=k]) {
                        *a -= lik * xk;
                    }
                }
            }
            let inv_d = 1.0 / l[(i, i)];
            let row = x.row_mut(i);
            for (r, a) in row[..i].iter_mut().zip(&acc[..i]) {
                *r = a * inv_d;
            }
            row[i] = inv_d;
        }
        x
    }

    /// `A^{-1} = L^{-T} L^{-1}`, exactly symmetric.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let x = self.lower_inverse();
        let mut inv = Matrix::zeros(n, n);
        for k in 0..n {
            let r = &x.row(k)[..=k];
            for i in 0..=k {
                let ri = r[i];
                for (v, rj) in inv.row_mut(i)[..=i].iter_mut().zip(&r[..=i]) {
                    *v += ri * rj;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                inv[(i, j)] = inv[(j, i)];
            }
        }
        inv
    }

    /// `log |A|` (of the jittered matrix).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// `L L^T`.
    pub fn reconstruct(&self) -> Matrix {
        self.lower
            .matmul(&self.lower.transpose())
            .expect("square factor")
    }
}
