//! Least-squares problem instances, their exact solution and error metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{norm2, vnorm2, HouseholderQr};

/// Relative singular-value threshold below which `A` counts as rank deficient.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A dense regression problem `min ||A x - y||`, optionally with a matrix of
/// targets `Y` for Frobenius-norm regression.
///
/// For matrix-target instances `y` holds the scalar labels (loaded data) or
/// the first target column (synthetic data).
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    y: DVector<f64>,
    targets: Option<DMatrix<f64>>,
    qr: HouseholderQr,
    singular_range: (f64, f64),
}

impl ProblemInstance {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::build(a, y, None, DEFAULT_RANK_TOL)
    }

    pub fn with_targets(a: DMatrix<f64>, y: DVector<f64>, targets: DMatrix<f64>) -> Result<Self> {
        Self::build(a, y, Some(targets), DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(a: DMatrix<f64>, y: DVector<f64>, rank_tol: f64) -> Result<Self> {
        Self::build(a, y, None, rank_tol)
    }

    fn build(
        a: DMatrix<f64>,
        y: DVector<f64>,
        targets: Option<DMatrix<f64>>,
        rank_tol: f64,
    ) -> Result<Self> {
        let (n, d) = a.shape();
        if d == 0 || n <= d {
            return Err(Error::InvalidProblem(format!("need n > d >= 1, got n={n}, d={d}")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "target vector length",
                expected: n,
                actual: y.len(),
            });
        }
        if let Some(t) = &targets {
            if t.nrows() != n || t.ncols() == 0 {
                return Err(Error::DimensionMismatch {
                    context: "target matrix rows",
                    expected: n,
                    actual: t.nrows(),
                });
            }
        }
        let all_finite = a.iter().chain(y.iter()).all(|v| v.is_finite())
            && targets.as_ref().is_none_or(|t| t.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::InvalidProblem("non-finite entry".into()));
        }
        let qr = HouseholderQr::new(a.clone())?;
        let singular_range = qr.check_rank(rank_tol)?;
        Ok(Self {
            a,
            y,
            targets,
            qr,
            singular_range,
        })
    }

    /// Same data matrix with a new target vector. The factorization is reused.
    pub fn with_new_target(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "target vector length",
                expected: self.n(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite entry".into()));
        }
        Ok(Self {
            y,
            ..self.clone()
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn targets(&self) -> Option<&DMatrix<f64>> {
        self.targets.as_ref()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn qr(&self) -> &HouseholderQr {
        &self.qr
    }

    /// `[A | y]` or `[A | Y]`, the block a sketch is applied to in one pass.
    pub fn augmented(&self) -> DMatrix<f64> {
        let rhs = match &self.targets {
            Some(t) => t.clone(),
            None => DMatrix::from_column_slice(self.n(), 1, self.y.as_slice()),
        };
        let (n, d, k) = (self.n(), self.d(), rhs.ncols());
        let mut out = DMatrix::zeros(n, d + k);
        out.columns_mut(0, d).copy_from(&self.a);
        out.columns_mut(d, k).copy_from(&rhs);
        out
    }
}

/// Exact least-squares solution for a matrix-target problem.
#[derive(Clone, Debug)]
pub struct MatrixSolution {
    pub x_ls: DMatrix<f64>,
    pub y_perp: DMatrix<f64>,
    pub r2: f64,
    pub pred_energy: f64,
}

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub x_ls: DVector<f64>,
    pub y_perp: DVector<f64>,
    /// `||y_perp||^2`
    pub r2: f64,
    /// `||A x_ls||^2`
    pub pred_energy: f64,
    /// Extreme eigenvalues of `A^T A`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub matrix: Option<MatrixSolution>,
}

impl ExactSolution {
    /// `||A x_ls||^2 / ||y_perp||^2`.
    pub fn snr(&self) -> Result<f64> {
        if self.r2 == 0.0 {
            return Err(Error::ZeroResidual);
        }
        Ok(self.pred_energy / self.r2)
    }

    /// As [`snr`](Self::snr) but reports a zero residual as `+inf`.
    pub fn snr_or_infinite(&self) -> f64 {
        self.snr().unwrap_or(f64::INFINITY)
    }
}

pub fn solve_exact(p: &ProblemInstance) -> ExactSolution {
    let qr = p.qr();
    let x_ls = qr.solve_vector(p.y());
    let fitted = p.a() * &x_ls;
    let y_perp = p.y() - &fitted;
    let (smin, smax) = p.singular_range;

    let matrix = p.targets().map(|t| {
        let x_ls = qr.solve(t);
        let fitted = p.a() * &x_ls;
        let y_perp = t - &fitted;
        MatrixSolution {
            r2: norm2(&y_perp),
            pred_energy: norm2(&fitted),
            x_ls,
            y_perp,
        }
    });

    ExactSolution {
        r2: vnorm2(&y_perp),
        pred_energy: vnorm2(&fitted),
        x_ls,
        y_perp,
        sigma_min: smin * smin,
        sigma_max: smax * smax,
        matrix,
    }
}

/// `||A (x_hat - x_ls)||^2`
pub fn prediction_error(a: &DMatrix<f64>, x_hat: &DVector<f64>, x_ls: &DVector<f64>) -> Result<f64> {
    if x_hat.len() != a.ncols() || x_ls.len() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "prediction_error",
            expected: a.ncols(),
            actual: if x_hat.len() != a.ncols() { x_hat.len() } else { x_ls.len() },
        });
    }
    Ok(vnorm2(&(a * (x_hat - x_ls))))
}

/// `||A (X_hat - X_ls)||_F^2`
pub fn prediction_error_matrix(
    a: &DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    x_ls: &DMatrix<f64>,
) -> Result<f64> {
    if x_hat.shape() != x_ls.shape() || x_hat.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "prediction_error_matrix",
            expected: a.ncols(),
            actual: x_hat.nrows(),
        });
    }
    Ok(norm2(&(a * (x_hat - x_ls))))
}

/// `snr` as a free function over a solution.
pub fn snr(sol: &ExactSolution) -> Result<f64> {
    sol.snr()
}
