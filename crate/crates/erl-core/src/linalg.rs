//! Minimal dense matrix support for small action dimensions (d ≤ 16).

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// `c * I`, the workhorse coefficient for scalar and isotropic memory specs.
    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::Empty("matrix rows"));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    /// `self^T * v`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.get(i, j) * v[i];
            }
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    /// Rank-one update `self += s * u * v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], s: f64) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.data[i * self.cols + j] += s * u[i] * v[j];
            }
        }
    }

    /// Solve `self * x = b` for square systems via Gauss-Jordan with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.rows;
        if self.cols != n || b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut a = self.data.clone();
        let mut x: Vec<f64> = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = fp::abs(a[col * n + col]);
            for r in (col + 1)..n {
                let v = fp::abs(a[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return Err(Error::InvalidParam(alloc::format!(
                    "singular matrix in solve (pivot {col})"
                )));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
            }
            x[col] /= d;
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        Ok(x)
    }

    /// Inverse of a square matrix; errors when singular.
    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                out.set(i, j, col[i]);
            }
        }
        Ok(out)
    }

    /// Operator norm induced by the `l_p` vector norm.
    ///
    /// Exact for p ∈ {1, 2, ∞}; other p use the Riesz-Thorin interpolation
    /// bound `‖A‖_p ≤ ‖A‖_1^{1/p} ‖A‖_∞^{1−1/p}` (an upper bound, which keeps
    /// competitive-ratio bounds derived from it valid).
    pub fn induced_norm(&self, p: f64) -> f64 {
        if p == 1.0 {
            return self.max_abs_col_sum();
        }
        if p.is_infinite() {
            return self.max_abs_row_sum();
        }
        if p == 2.0 {
            return self.spectral_norm();
        }
        let n1 = self.max_abs_col_sum();
        let ninf = self.max_abs_row_sum();
        fp::powf(n1, 1.0 / p) * fp::powf(ninf, 1.0 - 1.0 / p)
    }

    fn max_abs_col_sum(&self) -> f64 {
        let mut best = 0.0;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += fp::abs(self.get(i, j));
            }
            best = fp::max(best, s);
        }
        best
    }

    fn max_abs_row_sum(&self) -> f64 {
        let mut best = 0.0;
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += fp::abs(self.get(i, j));
            }
            best = fp::max(best, s);
        }
        best
    }

    /// Largest singular value via Jacobi eigenvalues of `A^T A`.
    fn spectral_norm(&self) -> f64 {
        let n = self.cols;
        // Gram matrix A^T A (symmetric PSD).
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..self.rows {
                    s += self.get(k, i) * self.get(k, j);
                }
                g[i * n + j] = s;
            }
        }
        let lam = jacobi_max_eigenvalue(&mut g, n);
        fp::sqrt(fp::max(lam, 0.0))
    }
}

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_max_eigenvalue(a: &mut [f64], n: usize) -> f64 {
    if n == 1 {
        return a[0];
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if fp::abs(apq) < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let sgn = if theta < 0.0 { -1.0 } else { 1.0 };
                let t = sgn / (fp::abs(theta) + fp::sqrt(theta * theta + 1.0));
                let c = 1.0 / fp::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut best = a[0];
    for i in 1..n {
        best = fp::max(best, a[i * n + i]);
    }
    best
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows)
            .map(|i| m.data[i * m.cols..(i + 1) * m.cols].to_vec())
            .collect()
    }
}

// Small vector helpers used throughout the crate.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
