//! Synthetic regression problems with a planted solution and exact SNR.
//!
//! Rows of `A` are drawn i.i.d. from `N(1, Sigma)` with
//! `Sigma_ij = 0.5^|i-j|`. A standard normal `x_ls` is rescaled so that
//! `||A x_ls|| = 1`, and the target is `y = A x_ls + alpha V w` where the
//! columns of `V` span the null space of `A^T` (taken from the full
//! orthogonal factor of `A`), `w` is standard normal and
//! `alpha = 1 / (sqrt(rho) ||V w||)`. The residual of the exact solution is
//! then `alpha V w` and the SNR is exactly `rho`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{norm2, HouseholderQr};
use crate::problem::{solve_exact, ExactSolution, ProblemInstance};
use crate::seed;

/// Correlation between neighbouring features.
pub const AR_COEFF: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub seed: u64,
    /// Number of target columns for Frobenius regression; `None` for a
    /// single target vector.
    pub k: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, rho: f64, seed: u64) -> Self {
        Self { n, d, rho, seed, k: None }
    }

    pub fn with_targets(self, k: usize) -> Self {
        Self { k: Some(k), ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n <= self.d {
            return Err(Error::InvalidArgument(format!(
                "need n > d >= 1, got n={}, d={}",
                self.n, self.d
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {}", self.rho)));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        Ok(())
    }
}

/// `Sigma_ij = coeff^|i-j|`.
pub fn ar1_covariance(d: usize, coeff: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| coeff.powi(i.abs_diff(j) as i32))
}

/// Lower Cholesky factor of [`ar1_covariance`].
pub fn ar1_factor(d: usize, coeff: f64) -> Result<DMatrix<f64>> {
    Cholesky::new(ar1_covariance(d, coeff))
        .map(|c| c.l())
        .ok_or(Error::NotSpd)
}

fn standard_normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `Q [0; W]`: maps `(n-d) x k` coefficients into the null space of `A^T`.
fn null_space_combination<R: Rng>(qr: &HouseholderQr, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let (n, d) = (qr.nrows(), qr.ncols());
    for _ in 0..2 {
        let w = standard_normal_matrix(n - d, k, rng);
        let mut e = DMatrix::zeros(n, k);
        e.rows_mut(d, n - d).copy_from(&w);
        qr.apply_q(&mut e);
        if norm2(&e) > 0.0 {
            return Ok(e);
        }
    }
    Err(Error::DegenerateNoise)
}

pub fn gen_gaussian_data(spec: &SyntheticSpec) -> Result<(ProblemInstance, ExactSolution)> {
    spec.validate()?;
    let SyntheticSpec { n, d, rho, .. } = *spec;
    let k = spec.k.unwrap_or(1);
    let mut rng = seed::rng(spec.seed);

    let l = ar1_factor(d, AR_COEFF)?;
    let z = standard_normal_matrix(n, d, &mut rng);
    let a = (z * l.transpose()).add_scalar(1.0);

    let mut x = standard_normal_matrix(d, k, &mut rng);
    let signal = norm2(&(&a * &x)).sqrt();
    x /= signal;

    let qr = HouseholderQr::new(a.clone())?;
    let noise = null_space_combination(&qr, k, &mut rng)?;
    let alpha = 1.0 / (rho.sqrt() * norm2(&noise).sqrt());
    let targets = &a * &x + noise * alpha;

    let y = targets.column(0).into_owned();
    let problem = match spec.k {
        Some(_) => ProblemInstance::with_targets(a, y, targets)?,
        None => ProblemInstance::new(a, y)?,
    };
    let solution = solve_exact(&problem);
    Ok((problem, solution))
}

/// Adds i.i.d. `N(0, kappa * r2)` noise to `y`, where `r2` is the residual
/// energy of the unmodified problem. The noise is not confined to the null
/// space of `A^T`, so both `x_ls` and `y_perp` change. Matrix targets are
/// left untouched.
pub fn add_noise(p: &ProblemInstance, kappa: f64, seed: u64) -> Result<ProblemInstance> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(p.clone());
    }
    let r2 = solve_exact(p).r2;
    let std = (kappa * r2).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let noisy = p.y() + DVector::from_fn(p.n(), |_, _| normal.sample(&mut rng));
    p.with_new_target(noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ar1_factor_reconstructs() {
        for d in [1, 7, 64, 256] {
            let l = ar1_factor(d, AR_COEFF).unwrap();
            let back = &l * l.transpose();
            assert!((back - ar1_covariance(d, AR_COEFF)).amax() <= 1e-10);
        }
    }

    #[test]
    fn ar1_factor_matches_closed_form() {
        // AR(1): L_i0 = c^i, L_ij = c^(i-j) sqrt(1 - c^2) for 1 <= j <= i.
        let d = 12;
        let c: f64 = AR_COEFF;
        let l = ar1_factor(d, c).unwrap();
        for i in 0..d {
            for j in 0..d {
                let want = if j > i {
                    0.0
                } else if j == 0 {
                    c.powi(i as i32)
                } else {
                    c.powi((i - j) as i32) * (1.0 - c * c).sqrt()
                };
                assert!((l[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snr_is_exact_and_noise_is_orthogonal() {
        for (rho, seed) in [(0.1, 1), (1.0, 2), (10.0, 3)] {
            let (p, sol) = gen_gaussian_data(&SyntheticSpec::new(120, 10, rho, seed)).unwrap();
            assert_relative_eq!(sol.snr().unwrap(), rho, max_relative = 1e-10);
            assert_relative_eq!(sol.pred_energy, 1.0, max_relative = 1e-10);
            let grad = p.a().transpose() * (p.y() - p.a() * &sol.x_ls);
            assert!(grad.amax() <= 1e-9);
        }
    }

    #[test]
    fn recovers_planted_solution() {
        let spec = SyntheticSpec::new(80, 6, 0.5, 9);
        let (p, sol) = gen_gaussian_data(&spec).unwrap();
        // Re-derive the planted vector from the same random stream.
        let mut rng = seed::rng(spec.seed);
        let _ = standard_normal_matrix(80, 6, &mut rng);
        let x = standard_normal_matrix(6, 1, &mut rng);
        let planted = &x / (p.a() * &x).norm();
        assert!((sol.x_ls.clone() - planted.column(0)).amax() <= 1e-8);
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::new(50, 5, 1.0, 4);
        let (a, _) = gen_gaussian_data(&spec).unwrap();
        let (b, _) = gen_gaussian_data(&spec).unwrap();
        assert_eq!(a.a().as_slice(), b.a().as_slice());
        assert_eq!(a.y().as_slice(), b.y().as_slice());
    }

    #[test]
    fn matrix_targets_have_frobenius_snr() {
        let spec = SyntheticSpec::new(100, 8, 0.2, 5).with_targets(3);
        let (p, sol) = gen_gaussian_data(&spec).unwrap();
        assert_eq!(p.targets().unwrap().ncols(), 3);
        let m = sol.matrix.unwrap();
        assert_relative_eq!(m.pred_energy, 1.0, max_relative = 1e-10);
        assert_relative_eq!(m.r2, 5.0, max_relative = 1e-10);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_gaussian_data(&SyntheticSpec::new(5, 5, 1.0, 0)).is_err());
        assert!(gen_gaussian_data(&SyntheticSpec::new(10, 2, 0.0, 0)).is_err());
    }

    #[test]
    fn zero_kappa_keeps_target() {
        let (p, _) = gen_gaussian_data(&SyntheticSpec::new(40, 4, 1.0, 6)).unwrap();
        let q = add_noise(&p, 0.0, 1).unwrap();
        assert_eq!(p.y().as_slice(), q.y().as_slice());
    }

    #[test]
    fn large_kappa_lowers_snr_and_moves_solution() {
        let (p, sol) = gen_gaussian_data(&SyntheticSpec::new(200, 5, 2.0, 7)).unwrap();
        let mut lower = 0;
        for s in 0..20 {
            let q = add_noise(&p, 5.0, s).unwrap();
            let noisy = solve_exact(&q);
            if noisy.snr().unwrap() < sol.snr().unwrap() {
                lower += 1;
            }
            assert!((noisy.x_ls.clone() - &sol.x_ls).amax() > 0.0);
        }
        assert_eq!(lower, 20);
    }
}
