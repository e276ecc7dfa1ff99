//! Householder QR factorization for tall dense matrices.
//!
//! The factor is kept in compact LAPACK form: `R` on and above the diagonal,
//! the Householder vectors (with an implicit leading one) below it. This lets
//! callers apply the full `n x n` orthogonal factor without materializing it,
//! which the data generator needs to reach the null space of `A^T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct HouseholderQr {
    packed: DMatrix<f64>,
    tau: Vec<f64>,
}

impl HouseholderQr {
    /// Factorizes `a` (rows >= cols).
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows < cols {
            return Err(Error::InvalidArgument(format!(
                "QR needs rows >= cols, got {rows}x{cols}"
            )));
        }
        let mut packed = a;
        let mut tau = vec![0.0; cols];
        let data = packed.as_mut_slice();

        for j in 0..cols {
            let col_start = j * rows;
            let (head, tail) = data.split_at_mut(col_start + rows);
            let col = &mut head[col_start + j..col_start + rows];

            let alpha = col[0];
            let tail_norm2: f64 = col[1..].iter().map(|v| v * v).sum();
            if tail_norm2 == 0.0 {
                tau[j] = 0.0;
                continue;
            }
            let norm = (alpha * alpha + tail_norm2).sqrt();
            let beta = if alpha >= 0.0 { -norm } else { norm };
            tau[j] = (beta - alpha) / beta;
            let scale = 1.0 / (alpha - beta);
            col[1..].iter_mut().for_each(|v| *v *= scale);
            col[0] = beta;

            let t = tau[j];
            let v = &col[1..];
            for k in 0..cols - j - 1 {
                let other = &mut tail[k * rows + j..(k + 1) * rows];
                let mut w = other[0];
                for (o, vi) in other[1..].iter().zip(v) {
                    w += o * vi;
                }
                w *= t;
                other[0] -= w;
                for (o, vi) in other[1..].iter_mut().zip(v) {
                    *o -= w * vi;
                }
            }
        }

        Ok(Self { packed, tau })
    }

    pub fn nrows(&self) -> usize {
        self.packed.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.packed.ncols()
    }

    /// Upper-triangular factor, `ncols x ncols`.
    pub fn r(&self) -> DMatrix<f64> {
        let d = self.ncols();
        DMatrix::from_fn(d, d, |i, j| if i <= j { self.packed[(i, j)] } else { 0.0 })
    }

    fn reflect(&self, j: usize, col: &mut [f64]) {
        let t = self.tau[j];
        if t == 0.0 {
            return;
        }
        let rows = self.nrows();
        let v = &self.packed.as_slice()[j * rows + j + 1..(j + 1) * rows];
        let target = &mut col[j..];
        let mut w = target[0];
        for (c, vi) in target[1..].iter().zip(v) {
            w += c * vi;
        }
        w *= t;
        target[0] -= w;
        for (c, vi) in target[1..].iter_mut().zip(v) {
            *c -= w * vi;
        }
    }

    /// Overwrites `b` with `Q^T b`, where `Q` is the full `n x n` factor.
    pub fn apply_qt(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.nrows(), "apply_qt: row mismatch");
        for mut col in b.column_iter_mut() {
            let col = col.as_mut_slice();
            for j in 0..self.ncols() {
                self.reflect(j, col);
            }
        }
    }

    /// Overwrites `b` with `Q b`, where `Q` is the full `n x n` factor.
    pub fn apply_q(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.nrows(), "apply_q: row mismatch");
        for mut col in b.column_iter_mut() {
            let col = col.as_mut_slice();
            for j in (0..self.ncols()).rev() {
                self.reflect(j, col);
            }
        }
    }

    /// First `ncols` columns of `Q`: an orthonormal basis of range(A).
    pub fn thin_q(&self) -> DMatrix<f64> {
        let (n, d) = (self.nrows(), self.ncols());
        let mut q = DMatrix::from_fn(n, d, |i, j| if i == j { 1.0 } else { 0.0 });
        self.apply_q(&mut q);
        q
    }

    /// Singular values of `R` (equal to those of the factored matrix),
    /// sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.r().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Returns `(smallest, largest)` singular value, or an error when the
    /// ratio falls at or below `tol`.
    pub fn check_rank(&self, tol: f64) -> Result<(f64, f64)> {
        let sv = self.singular_values();
        let largest = sv.first().copied().unwrap_or(0.0);
        let smallest = sv.last().copied().unwrap_or(0.0);
        if !(smallest > tol * largest) {
            return Err(Error::RankDeficient {
                smallest,
                largest,
                tol,
            });
        }
        Ok((smallest, largest))
    }

    /// Least-squares solution of `A X = B` for every column of `B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.ncols();
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let mut x = qtb.rows(0, d).into_owned();
        for mut col in x.column_iter_mut() {
            for i in (0..d).rev() {
                let mut s = col[i];
                for k in i + 1..d {
                    s -= self.packed[(i, k)] * col[k];
                }
                col[i] = s / self.packed[(i, i)];
            }
        }
        x
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        let x = self.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        DVector::from_column_slice(x.as_slice())
    }
}

/// Squared Frobenius norm.
pub(crate) fn norm2(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub(crate) fn vnorm2(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}
