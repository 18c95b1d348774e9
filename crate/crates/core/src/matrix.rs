//! Dense square matrices and points of the open matrix simplex.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries at or below this value after projection onto the simplex are
/// treated as numerically zero and rejected.
pub const MIN_SIMPLEX_ENTRY: f64 = 1e-300;

/// Tolerance on the unit total of a [`SimplexMatrix`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Row-major dense `n × n` matrix of reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Matrix { n, data: vec![value; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "expected {} entries for a {n}×{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("rows must form a square matrix"));
        }
        Ok(Matrix { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `out[i][j] = self[row_perm[i]][col_perm[j]]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(row_perm[i], col_perm[j])];
            }
        }
        out
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn doubly_stochastic_residual(&self) -> f64 {
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// A strictly positive `n × n` matrix whose entries sum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SimplexMatrix(Matrix);

impl SimplexMatrix {
    /// Validates that `m` already lies in the open simplex.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.n() == 0 {
            return Err(Error::invalid("matrix must be at least 1×1"));
        }
        if let Some(bad) = m.as_slice().iter().find(|v| !(**v > MIN_SIMPLEX_ENTRY) || !v.is_finite()) {
            return Err(Error::invalid(format!("simplex entries must be positive and finite, found {bad:e}")));
        }
        let total = m.total();
        if (total - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::invalid(format!("simplex entries must sum to 1, got {total:.17}")));
        }
        Ok(SimplexMatrix(m))
    }

    /// Projects an arbitrary positive matrix onto the simplex by dividing by its total.
    pub fn project(m: &Matrix) -> Result<Self> {
        if m.n() == 0 {
            return Err(Error::invalid("matrix must be at least 1×1"));
        }
        if m.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be positive and finite"));
        }
        let total = m.total();
        let p = m.scaled(1.0 / total);
        Self::new(p)
    }

    /// The centre of the simplex, all entries `1/n²`.
    pub fn uniform(n: usize) -> Self {
        SimplexMatrix(Matrix::filled(n, 1.0 / (n * n) as f64))
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl TryFrom<Matrix> for SimplexMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        SimplexMatrix::new(m)
    }
}

impl From<SimplexMatrix> for Matrix {
    fn from(s: SimplexMatrix) -> Matrix {
        s.0
    }
}

impl std::ops::Deref for SimplexMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}
