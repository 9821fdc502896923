//! Small dense symmetric matrices and Cholesky factorization.
//!
//! Designed for the low-dimensional feature spaces this crate monitors
//! (soft limit d <= 16); storage is plain row-major `Vec<f64>`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense square matrix of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        SmallMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = s;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::Domain("matrix must have at least one row".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(SmallMatrix { dim, data })
    }

    /// Rebuilds a matrix from row-major storage, e.g. a snapshot field.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(SmallMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &SmallMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// `self += s * v vᵀ`
    pub fn add_outer(&mut self, v: &[f64], s: f64) {
        assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i * self.dim + j] += s * v[i] * v[j];
            }
        }
    }

    pub fn scaled(&self, s: f64) -> SmallMatrix {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (self.get(i, j) - self.get(j, i)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Cholesky factorization `A = L Lᵀ`.
    ///
    /// Fails if the matrix is asymmetric beyond 1e-12 relative or any pivot
    /// is non-positive (i.e. the matrix is not positive definite).
    pub fn cholesky(&self) -> Result<Cholesky> {
        if !self.is_symmetric(1e-12) {
            return Err(Error::NotSymmetric);
        }
        let n = self.dim;
        let mut lower = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    lower[i * n + j] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Ok(Cholesky { dim: n, lower })
    }
}

/// Lower-triangular Cholesky factor of a positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln |A|` of the factored matrix.
    pub fn log_det(&self) -> f64 {
        let n = self.dim;
        2.0 * (0..n).map(|i| self.lower[i * n + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.lower[i * n + k] * y[k];
            }
            y[i] = sum / self.lower[i * n + i];
        }
        y
    }

    /// Solves `A x = b` via forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.lower[k * n + i] * x[k];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// Quadratic form `vᵀ A⁻¹ v = ‖L⁻¹ v‖²`.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        self.solve_lower(v).iter().map(|y| y * y).sum()
    }

    /// Applies the factor: `L z` (used to color standard-normal draws).
    pub fn multiply_lower(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim);
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut sum = 0.0;
            for k in 0..=i {
                sum += self.lower[i * n + k] * z[k];
            }
            out[i] = sum;
        }
        out
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, also returning
/// `ln |A|` which falls out of the factorization for free.
pub fn cholesky_solve(a: &SmallMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    let chol = a.cholesky()?;
    let log_det = chol.log_det();
    Ok((chol.solve(b), log_det))
}
