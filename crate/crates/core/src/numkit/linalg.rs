use std::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Dense row-major real matrix.
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
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = value;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            Error::check_dim(cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        Error::check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.cols, v.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        Error::check_dim(self.rows, other.rows)?;
        Error::check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Lower-triangular Cholesky factor `L` of an SPD matrix `M = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
    log_det_half: f64,
    // Off-diagonal entries are exactly zero; solves collapse to elementwise division.
    diagonal: bool,
}

impl CholeskyFactor {
    /// Factor of `value² · I`, built without running the decomposition.
    pub fn isotropic(dim: usize, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0 && std_dev.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "isotropic scale must be positive, got {std_dev}"
            )));
        }
        Ok(CholeskyFactor {
            lower: Matrix::scaled_identity(dim, std_dev),
            log_det_half: dim as f64 * std_dev.ln(),
            diagonal: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `Σ log Lᵢᵢ`, i.e. half the log-determinant of the factored matrix.
    pub fn log_det_half(&self) -> f64 {
        self.log_det_half
    }

    pub fn reconstruct(&self) -> Matrix {
        self.lower
            .matmul(&self.lower.transpose())
            .expect("square factor")
    }

    /// `L · v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), v.len())?;
        if self.diagonal {
            return Ok(v.iter().enumerate().map(|(i, x)| self.lower[(i, i)] * x).collect());
        }
        let n = self.dim();
        Ok((0..n).map(|i| dot(&self.lower.row(i)[..=i], &v[..=i])).collect())
    }

    /// Solves `L · y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), b.len())?;
        let n = self.dim();
        let mut y = b.to_vec();
        if self.diagonal {
            for (i, v) in y.iter_mut().enumerate() {
                *v /= self.lower[(i, i)];
            }
            return Ok(y);
        }
        for i in 0..n {
            let s = dot(&self.lower.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.lower[(i, i)];
        }
        Ok(y)
    }

    /// Solves `Lᵀ · y = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), b.len())?;
        let n = self.dim();
        let mut y = b.to_vec();
        if self.diagonal {
            for (i, v) in y.iter_mut().enumerate() {
                *v /= self.lower[(i, i)];
            }
            return Ok(y);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[(k, i)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
        Ok(y)
    }

    /// Solves `L·Lᵀ · y = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_lower(b)?;
        self.solve_upper(&y)
    }
}

/// Cholesky–Banachiewicz factorization of a symmetric positive-definite matrix.
pub fn cholesky(m: &Matrix) -> Result<CholeskyFactor> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows,
            got: m.cols,
        });
    }
    let n = m.rows;
    let mut lower = Matrix::zeros(n, n);
    let mut log_det_half = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&lower.row(i)[..j], &lower.row(j)[..j]);
            if i == j {
                let pivot = m[(i, i)] - s;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
                }
                let l = pivot.sqrt();
                lower[(i, i)] = l;
                log_det_half += l.ln();
            } else {
                lower[(i, j)] = (m[(i, j)] - s) / lower[(j, j)];
            }
        }
    }
    let diagonal = (0..n).all(|i| (0..i).all(|j| lower[(i, j)] == 0.0));
    Ok(CholeskyFactor {
        lower,
        log_det_half,
        diagonal,
    })
}

/// Inverse of a lower-triangular matrix with non-zero diagonal, by forward substitution.
pub(crate) fn invert_lower_triangular(l: &Matrix) -> Matrix {
    let n = l.rows;
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Numerically stable `log Σ exp(vᵢ)`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Empty("log_sum_exp of an empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(max);
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + s.ln())
}
