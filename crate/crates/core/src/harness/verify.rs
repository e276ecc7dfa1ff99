//! Monte Carlo checks of the identities the estimators rest on.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{mean, std_error};
use crate::error::{Error, Result};
use crate::estimators::{classical, estimate_residual_full, estimate_residual_sketched};
use crate::linalg::{vnorm2, HouseholderQr};
use crate::problem::{ExactSolution, ProblemInstance};
use crate::seed;
use crate::sketch::{make_operator, RowWeights, SketchFamily, SketchSpec};

/// Reps are summed in fixed-size chunks so that the floating-point sum does
/// not depend on the number of threads.
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct SteinInstance {
    pub theta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteinCheck {
    /// Mean of `(t - theta)^T Sigma^-1 (t - theta)` for the James-Stein `t`.
    pub lhs: f64,
    /// `d - (d-2)^2 * mean(1 / X^T Sigma^-1 X)`.
    pub rhs: f64,
    /// Same loss for `t = X`; its expectation is `d`.
    pub naive: f64,
}

impl SteinCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs()
    }
}

/// Symmetric positive definite `d x d` matrix with eigenvalues spread
/// geometrically over `[1, cond]` in a random orthonormal basis.
pub fn random_spd(d: usize, cond: f64, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || !(cond >= 1.0) {
        return Err(Error::InvalidArgument(format!("need d >= 1 and cond >= 1, got d={d}, cond={cond}")));
    }
    let mut rng = seed::rng(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let q = HouseholderQr::new(g)?.thin_q();
    let eig = DVector::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            cond.powf(i as f64 / (d - 1) as f64)
        }
    });
    let s = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Samples `X ~ N(theta, Sigma)` and estimates both sides of Stein's risk
/// identity for the James-Stein estimator in the `Sigma^-1` norm.
///
/// With `Sigma = L L^T`, whitening gives `L^-1 X = L^-1 theta + z` for
/// standard normal `z`, so every quadratic form is a plain squared norm.
pub fn verify_stein(inst: &SteinInstance) -> Result<SteinCheck> {
    let d = inst.theta.len();
    if d <= 2 {
        return Err(Error::InvalidArgument(format!("Stein check needs d > 2, got {d}")));
    }
    if inst.sigma.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            context: "covariance size",
            expected: d,
            actual: inst.sigma.nrows(),
        });
    }
    if inst.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let scale = inst.sigma.amax().max(f64::MIN_POSITIVE);
    if (&inst.sigma - inst.sigma.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotSpd);
    }
    let chol = Cholesky::new(inst.sigma.clone()).ok_or(Error::NotSpd)?;
    let l = chol.l();
    if l.diagonal().min() <= 1e-12 * scale.sqrt() {
        return Err(Error::NotSpd);
    }
    let v = l.solve_lower_triangular(&inst.theta).ok_or(Error::NotSpd)?;
    let shrink = (d - 2) as f64;

    let chunks: Vec<(f64, f64, f64)> = (0..inst.samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed::derive(inst.seed, &[c as u64]));
            let (mut loss, mut inv, mut naive) = (0.0, 0.0, 0.0);
            for _ in c * CHUNK..((c + 1) * CHUNK).min(inst.samples) {
                let z = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let u = &v + &z;
                let q = vnorm2(&u);
                let f = 1.0 - shrink / q;
                loss += vnorm2(&(&u * f - &v));
                inv += 1.0 / q;
                naive += vnorm2(&z);
            }
            (loss, inv, naive)
        })
        .collect();

    let total = chunks
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let s = inst.samples as f64;
    Ok(SteinCheck {
        lhs: total.0 / s,
        rhs: d as f64 - shrink * shrink * total.1 / s,
        naive: total.2 / s,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualCheck {
    pub mean_full: f64,
    pub mean_sketched: f64,
    pub se_full: f64,
    pub se_sketched: f64,
}

/// Monte Carlo means of the full-data and sketched residual estimators,
/// both evaluated at the sketch-and-solve solution. Both should match
/// `sol.r2`.
pub fn verify_residual_unbiased(
    p: &ProblemInstance,
    sol: &ExactSolution,
    family: SketchFamily,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ResidualCheck> {
    let d = p.d();
    if m <= d + 1 {
        return Err(Error::InvalidSketchSize { m, d, extra: 1 });
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one rep".into()));
    }
    if sol.x_ls.len() != d {
        return Err(Error::DimensionMismatch {
            context: "exact solution length",
            expected: d,
            actual: sol.x_ls.len(),
        });
    }
    let weights = RowWeights::for_family(family, p.a())?;
    let aug = p.augmented();
    let draws: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let spec = SketchSpec::new(family, m, seed::derive(seed, &[rep as u64]));
            let sk = make_operator(spec, p.n(), weights.as_ref())?.apply(&aug)?;
            let sa = sk.columns(0, d).into_owned();
            let sy = sk.column(d).into_owned();
            let x = classical(&sa, &sy)?.x_hat;
            Ok((
                estimate_residual_full(p.a(), p.y(), &x, m)?,
                estimate_residual_sketched(&sa, &sy, &x)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (full, sketched): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    Ok(ResidualCheck {
        mean_full: mean(&full).unwrap_or(f64::NAN),
        mean_sketched: mean(&sketched).unwrap_or(f64::NAN),
        se_full: std_error(&full).unwrap_or(f64::NAN),
        se_sketched: std_error(&sketched).unwrap_or(f64::NAN),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramCheck {
    /// `max |mean(S^T S) - I|` over all entries.
    pub max_deviation: f64,
    /// The same maximum over diagonal entries only.
    pub max_diagonal_deviation: f64,
}

/// Single-column matrix with entries `1 + 0.05 z` whose row norms (and,
/// for one column, leverage scores) are within a few percent of uniform.
fn gram_weight_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    DMatrix::from_fn(n, 1, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        1.0 + 0.05 * z
    })
}

/// Entrywise Monte Carlo mean of `S^T S` against the identity. Row-norm and
/// leverage sampling take their probabilities from a fixed near-uniform
/// auxiliary matrix.
pub fn verify_gram_identity(family: SketchFamily, n: usize, m: usize, reps: usize, seed: u64) -> Result<GramCheck> {
    if n == 0 || m == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n, m, reps >= 1, got n={n}, m={m}, reps={reps}"
        )));
    }
    let weights = if family.needs_weights() {
        let aux = gram_weight_matrix(n, seed::derive(seed, &[u64::MAX]));
        RowWeights::for_family(family, &aux)?
    } else {
        None
    };

    let partial: Vec<DMatrix<f64>> = (0..reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = DMatrix::zeros(n, n);
            for rep in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let spec = SketchSpec::new(family, m, seed::derive(seed, &[rep as u64]));
                acc += make_operator(spec, n, weights.as_ref())?.gram();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = DMatrix::zeros(n, n);
    for p in &partial {
        total += p;
    }
    let dev = total / reps as f64 - DMatrix::identity(n, n);
    Ok(GramCheck {
        max_deviation: dev.amax(),
        max_diagonal_deviation: dev.diagonal().amax(),
    })
}
