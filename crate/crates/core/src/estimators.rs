//! Sketch-and-solve and its James-Stein shrinkage variants.
//!
//! All shrinkage estimators share one form,
//!
//! ```text
//! x_out = (1 - (d - 2) * r2_est / (m * ||SA x_hat||^2)) * x_hat
//! ```
//!
//! and differ only in how the residual energy `r2_est` of the exact solution
//! is obtained: the true value (`js-oracle`), the rescaled full residual
//! `(m-d-1)/(m-1) ||A x_hat - y||^2` (`shrinkage`), or the rescaled sketched
//! residual `m/(m-d) ||SA x_hat - Sy||^2` (`shrinkage-alt`). The factor is
//! never clamped except by `positive-part`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{norm2, vnorm2, HouseholderQr};
use crate::problem::DEFAULT_RANK_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Classical,
    JsOracle,
    Shrinkage,
    ShrinkageAlt,
    PositivePart,
    ShrinkageFro,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Classical,
        EstimatorKind::JsOracle,
        EstimatorKind::Shrinkage,
        EstimatorKind::ShrinkageAlt,
        EstimatorKind::PositivePart,
        EstimatorKind::ShrinkageFro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Classical => "classical",
            EstimatorKind::JsOracle => "js-oracle",
            EstimatorKind::Shrinkage => "shrinkage",
            EstimatorKind::ShrinkageAlt => "shrinkage-alt",
            EstimatorKind::PositivePart => "positive-part",
            EstimatorKind::ShrinkageFro => "shrinkage-fro",
        }
    }

    /// Smallest sketch size, as `m > d + extra`, the estimator is defined for.
    pub fn min_extra(self) -> Option<usize> {
        match self {
            EstimatorKind::Classical | EstimatorKind::JsOracle => None,
            EstimatorKind::ShrinkageAlt => Some(0),
            EstimatorKind::Shrinkage | EstimatorKind::PositivePart | EstimatorKind::ShrinkageFro => {
                Some(1)
            }
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// Why a shrinkage estimator returned its input unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShrinkFlag {
    /// `d <= 2`: James-Stein shrinkage does not apply.
    SmallDimension,
    /// `||SA x_hat|| = 0`.
    DegenerateDirection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord<T = DVector<f64>> {
    pub x_hat: T,
    pub kind: EstimatorKind,
    pub shrink_factor: f64,
    /// Residual-energy estimate fed into the factor. `None` for classical
    /// and for the oracle, which uses the true value.
    pub r2_estimate: Option<f64>,
    pub flag: Option<ShrinkFlag>,
    /// `||SA x_hat||^2 / ||A x_hat - y||^2`, a rough SNR proxy. Diagnostic only.
    pub snr_proxy: Option<f64>,
}

fn sketch_rank_check(qr: &HouseholderQr) -> Result<()> {
    qr.check_rank(DEFAULT_RANK_TOL)
        .map(|_| ())
        .map_err(|e| match e {
            Error::RankDeficient { smallest, largest, .. } => {
                Error::RankDeficientSketch { smallest, largest }
            }
            other => other,
        })
}

fn check_size(m: usize, d: usize, extra: usize) -> Result<()> {
    if m <= d + extra {
        return Err(Error::InvalidSketchSize { m, d, extra });
    }
    Ok(())
}

fn to_column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Solves `min ||SA X - SY||_F` by orthogonal factorization of `SA`.
pub fn classical_matrix(sa: &DMatrix<f64>, sy: &DMatrix<f64>) -> Result<EstimateRecord<DMatrix<f64>>> {
    let (m, d) = sa.shape();
    if sy.nrows() != m {
        return Err(Error::DimensionMismatch {
            context: "sketched target rows",
            expected: m,
            actual: sy.nrows(),
        });
    }
    if m < d {
        return Err(Error::InvalidArgument(format!(
            "sketch-and-solve needs m >= d, got m={m}, d={d}"
        )));
    }
    let qr = HouseholderQr::new(sa.clone())?;
    sketch_rank_check(&qr)?;
    Ok(EstimateRecord {
        x_hat: qr.solve(sy),
        kind: EstimatorKind::Classical,
        shrink_factor: 1.0,
        r2_estimate: None,
        flag: None,
        snr_proxy: None,
    })
}

/// Sketch-and-solve: `argmin ||SA x - Sy||`.
pub fn classical(sa: &DMatrix<f64>, sy: &DVector<f64>) -> Result<EstimateRecord> {
    let rec = classical_matrix(sa, &to_column(sy))?;
    Ok(EstimateRecord {
        x_hat: DVector::from_column_slice(rec.x_hat.as_slice()),
        kind: rec.kind,
        shrink_factor: rec.shrink_factor,
        r2_estimate: rec.r2_estimate,
        flag: rec.flag,
        snr_proxy: rec.snr_proxy,
    })
}

/// Unbiased estimate of `||y_perp||^2` from the full data:
/// `(m-d-1)/(m-1) * ||A x_hat - y||^2`.
pub fn estimate_residual_full(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    x_hat: &DVector<f64>,
    m: usize,
) -> Result<f64> {
    let d = a.ncols();
    check_size(m, d, 1)?;
    let resid = vnorm2(&(a * x_hat - y));
    Ok(residual_full_scale(m, d) * resid)
}

fn residual_full_scale(m: usize, d: usize) -> f64 {
    (m - d - 1) as f64 / (m - 1) as f64
}

/// Unbiased estimate of `||y_perp||^2` from sketched data only:
/// `m/(m-d) * ||SA x_hat - Sy||^2`.
pub fn estimate_residual_sketched(
    sa: &DMatrix<f64>,
    sy: &DVector<f64>,
    x_hat: &DVector<f64>,
) -> Result<f64> {
    let (m, d) = sa.shape();
    check_size(m, d, 0)?;
    let resid = vnorm2(&(sa * x_hat - sy));
    Ok(m as f64 / (m - d) as f64 * resid)
}

fn factor(d: usize, m: usize, r2: f64, sa_x_norm2: f64) -> (f64, Option<ShrinkFlag>) {
    if d <= 2 {
        return (1.0, Some(ShrinkFlag::SmallDimension));
    }
    if sa_x_norm2 == 0.0 {
        return (1.0, Some(ShrinkFlag::DegenerateDirection));
    }
    (1.0 - (d - 2) as f64 * r2 / (m as f64 * sa_x_norm2), None)
}

/// Shrinks `x_hat` using a given residual-energy value. `kind` only labels
/// the record, except that [`EstimatorKind::PositivePart`] clamps the factor
/// at zero.
pub fn shrink_with_residual(
    x_hat: &DVector<f64>,
    sa: &DMatrix<f64>,
    r2: f64,
    kind: EstimatorKind,
) -> EstimateRecord {
    let (f, flag) = factor(x_hat.len(), sa.nrows(), r2, vnorm2(&(sa * x_hat)));
    let f = if kind == EstimatorKind::PositivePart { f.max(0.0) } else { f };
    EstimateRecord {
        x_hat: x_hat * f,
        kind,
        shrink_factor: f,
        r2_estimate: (kind != EstimatorKind::JsOracle).then_some(r2),
        flag,
        snr_proxy: None,
    }
}

/// Shrinkage with the true residual energy `r2_true`.
pub fn js_oracle(x_hat: &DVector<f64>, sa: &DMatrix<f64>, r2_true: f64) -> EstimateRecord {
    shrink_with_residual(x_hat, sa, r2_true, EstimatorKind::JsOracle)
}

fn full_data_shrinkage(
    x_hat: &DVector<f64>,
    sa: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: EstimatorKind,
) -> Result<EstimateRecord> {
    let (m, d) = (sa.nrows(), x_hat.len());
    check_size(m, d, 1)?;
    let resid = vnorm2(&(a * x_hat - y));
    let mut rec = shrink_with_residual(x_hat, sa, residual_full_scale(m, d) * resid, kind);
    if resid > 0.0 {
        rec.snr_proxy = Some(vnorm2(&(sa * x_hat)) / resid);
    }
    Ok(rec)
}

/// `(1 - (d-2)(m-d-1) ||A x_hat - y||^2 / (m(m-1) ||SA x_hat||^2)) x_hat`.
pub fn shrinkage(
    x_hat: &DVector<f64>,
    sa: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<EstimateRecord> {
    full_data_shrinkage(x_hat, sa, a, y, EstimatorKind::Shrinkage)
}

/// `(1 - (d-2) ||SA x_hat - Sy||^2 / ((m-d) ||SA x_hat||^2)) x_hat`, using
/// only the sketched data.
pub fn shrinkage_alt(x_hat: &DVector<f64>, sa: &DMatrix<f64>, sy: &DVector<f64>) -> Result<EstimateRecord> {
    let r2 = estimate_residual_sketched(sa, sy, x_hat)?;
    Ok(shrink_with_residual(x_hat, sa, r2, EstimatorKind::ShrinkageAlt))
}

/// [`shrinkage`] with the factor clamped at zero.
pub fn positive_part(
    x_hat: &DVector<f64>,
    sa: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<EstimateRecord> {
    full_data_shrinkage(x_hat, sa, a, y, EstimatorKind::PositivePart)
}

/// Frobenius analogue of [`shrinkage`] for `min ||A X - Y||_F`.
pub fn shrinkage_matrix(
    x_hat: &DMatrix<f64>,
    sa: &DMatrix<f64>,
    a: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> Result<EstimateRecord<DMatrix<f64>>> {
    let (m, d) = (sa.nrows(), x_hat.nrows());
    check_size(m, d, 1)?;
    let r2 = residual_full_scale(m, d) * norm2(&(a * x_hat - targets));
    Ok(shrink_matrix_with_residual(x_hat, sa, r2))
}

/// Frobenius shrinkage with a given residual-energy value.
pub fn shrink_matrix_with_residual(
    x_hat: &DMatrix<f64>,
    sa: &DMatrix<f64>,
    r2: f64,
) -> EstimateRecord<DMatrix<f64>> {
    let (f, flag) = factor(x_hat.nrows(), sa.nrows(), r2, norm2(&(sa * x_hat)));
    EstimateRecord {
        x_hat: x_hat * f,
        kind: EstimatorKind::ShrinkageFro,
        shrink_factor: f,
        r2_estimate: Some(r2),
        flag,
        snr_proxy: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn rvec(n: usize, seed: u64) -> DVector<f64> {
        DVector::from_column_slice(random(n, 1, seed).as_slice())
    }

    /// `SA` with `m` rows whose image of `x` has squared norm `target`:
    /// the first column carries all of `x`'s image.
    fn sa_with_norm(m: usize, d: usize, target: f64) -> (DMatrix<f64>, DVector<f64>) {
        let mut sa = DMatrix::zeros(m, d);
        for j in 0..d {
            sa[(j, j)] = 1.0;
        }
        let mut x = DVector::zeros(d);
        x[0] = target.sqrt();
        (sa, x)
    }

    #[test]
    fn names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
    }

    #[test]
    fn identity_sketch_recovers_exact_solution() {
        let a = random(12, 3, 1);
        let y = rvec(12, 2);
        let rec = classical(&a, &y).unwrap();
        let exact = a.clone().pseudo_inverse(1e-14).unwrap() * &y;
        assert_relative_eq!(rec.x_hat, exact, epsilon = 1e-10);
        assert_eq!(rec.shrink_factor, 1.0);
        assert_eq!(rec.kind, EstimatorKind::Classical);
    }

    #[test]
    fn rank_deficient_sketch_is_reported() {
        let mut sa = random(6, 3, 5);
        let c = sa.column(0).into_owned();
        sa.set_column(1, &c);
        assert!(matches!(
            classical(&sa, &rvec(6, 1)),
            Err(Error::RankDeficientSketch { .. })
        ));
    }

    #[test]
    fn residual_full_plugin_and_boundary() {
        let a = random(30, 4, 3);
        let y = rvec(30, 4);
        let x_ls = a.clone().pseudo_inverse(1e-14).unwrap() * &y;
        let r2 = vnorm2(&(&a * &x_ls - &y));
        let (m, d) = (20, 4);
        let est = estimate_residual_full(&a, &y, &x_ls, m).unwrap();
        assert_relative_eq!(est, (m - d - 1) as f64 / (m - 1) as f64 * r2, max_relative = 1e-12);
        assert!(matches!(
            estimate_residual_full(&a, &y, &x_ls, d + 1),
            Err(Error::InvalidSketchSize { .. })
        ));
    }

    #[test]
    fn residual_sketched_interpolating_and_boundary() {
        let sa = random(5, 3, 8);
        let x = rvec(3, 9);
        let sy = &sa * &x;
        assert!(estimate_residual_sketched(&sa, &sy, &x).unwrap() < 1e-24);
        let square = random(3, 3, 10);
        assert!(matches!(
            estimate_residual_sketched(&square, &rvec(3, 1), &x),
            Err(Error::InvalidSketchSize { .. })
        ));
    }

    #[test]
    fn js_oracle_small_dimension() {
        let (sa, x) = sa_with_norm(10, 2, 1.0);
        let rec = js_oracle(&x, &sa, 5.0);
        assert_eq!(rec.shrink_factor, 1.0);
        assert_eq!(rec.x_hat, x);
        assert_eq!(rec.flag, Some(ShrinkFlag::SmallDimension));
    }

    #[test]
    fn js_oracle_arithmetic() {
        // d = 4, m = 20, r2 = 2, ||SA x||^2 = 1 -> 1 - 2*2/(20*1)
        let (sa, x) = sa_with_norm(20, 4, 1.0);
        let rec = js_oracle(&x, &sa, 2.0);
        assert_relative_eq!(rec.shrink_factor, 0.8, epsilon = 1e-15);
        assert_relative_eq!(rec.x_hat, &x * 0.8, epsilon = 1e-15);
        assert_eq!(rec.r2_estimate, None);
    }

    #[test]
    fn degenerate_direction_is_flagged() {
        let sa = random(10, 4, 1);
        let x = DVector::zeros(4);
        let rec = js_oracle(&x, &sa, 1.0);
        assert_eq!(rec.flag, Some(ShrinkFlag::DegenerateDirection));
        assert_eq!(rec.shrink_factor, 1.0);
    }

    /// Builds `(A, y)` with `||A x - y||^2 = resid` for the given `x`.
    fn full_data_with_residual(x: &DVector<f64>, resid: f64) -> (DMatrix<f64>, DVector<f64>) {
        let d = x.len();
        let n = d + 1;
        let mut a = DMatrix::zeros(n, d);
        for j in 0..d {
            a[(j, j)] = 1.0;
        }
        let mut y = &a * x;
        y[d] = resid.sqrt();
        (a, y)
    }

    #[test]
    fn shrinkage_arithmetic() {
        // d=4, m=20, ||A x - y||^2 = 2, ||SA x||^2 = 1 -> 1 - (2*15*2)/(20*19)
        let (sa, x) = sa_with_norm(20, 4, 1.0);
        let (a, y) = full_data_with_residual(&x, 2.0);
        let rec = shrinkage(&x, &sa, &a, &y).unwrap();
        assert_relative_eq!(rec.shrink_factor, 1.0 - 60.0 / 380.0, epsilon = 1e-14);
        assert_relative_eq!(rec.shrink_factor, 0.84211, epsilon = 1e-5);
        assert_relative_eq!(rec.r2_estimate.unwrap(), 15.0 / 19.0 * 2.0, epsilon = 1e-14);

        let pp = positive_part(&x, &sa, &a, &y).unwrap();
        assert_eq!(pp.shrink_factor, rec.shrink_factor);
        assert_eq!(pp.x_hat, rec.x_hat);
    }

    #[test]
    fn shrinkage_noiseless_keeps_estimate() {
        let (sa, x) = sa_with_norm(20, 4, 1.0);
        let (a, y) = full_data_with_residual(&x, 0.0);
        let rec = shrinkage(&x, &sa, &a, &y).unwrap();
        assert_eq!(rec.shrink_factor, 1.0);
    }

    #[test]
    fn shrinkage_keeps_negative_factor_and_positive_part_clamps() {
        // factor = 1 - (2*15*r)/(380) = -0.3  ->  r = 1.3*380/30
        let (sa, x) = sa_with_norm(20, 4, 1.0);
        let (a, y) = full_data_with_residual(&x, 1.3 * 380.0 / 30.0);
        let rec = shrinkage(&x, &sa, &a, &y).unwrap();
        assert_relative_eq!(rec.shrink_factor, -0.3, epsilon = 1e-12);
        let pp = positive_part(&x, &sa, &a, &y).unwrap();
        assert_eq!(pp.shrink_factor, 0.0);
        assert!(pp.x_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shrinkage_alt_arithmetic() {
        // d=4, m=20, ||SA x - Sy||^2 = 1.6, ||SA x||^2 = 1 -> 1 - 2*1.6/16
        let (sa, x) = sa_with_norm(20, 4, 1.0);
        let mut sy = &sa * &x;
        sy[10] = 1.6f64.sqrt();
        let rec = shrinkage_alt(&x, &sa, &sy).unwrap();
        assert_relative_eq!(rec.shrink_factor, 0.8, epsilon = 1e-14);

        let exact = shrinkage_alt(&x, &sa, &(&sa * &x)).unwrap();
        assert_eq!(exact.shrink_factor, 1.0);
    }

    #[test]
    fn undersized_sketches_are_rejected() {
        let (sa, x) = sa_with_norm(5, 4, 1.0);
        let (a, y) = full_data_with_residual(&x, 1.0);
        assert!(matches!(shrinkage(&x, &sa, &a, &y), Err(Error::InvalidSketchSize { .. })));
        let (sa4, _) = sa_with_norm(4, 4, 1.0);
        assert!(matches!(shrinkage_alt(&x, &sa4, &rvec(4, 1)), Err(Error::InvalidSketchSize { .. })));
    }

    #[test]
    fn shrinkage_with_true_residual_matches_oracle() {
        let a = random(50, 6, 31);
        let y = rvec(50, 32);
        let s = random(15, 50, 33) / (15f64).sqrt();
        let sa = &s * &a;
        let sy = &s * &y;
        let x_hat = classical(&sa, &sy).unwrap().x_hat;
        let x_ls = a.clone().pseudo_inverse(1e-14).unwrap() * &y;
        let r2 = vnorm2(&(&a * &x_ls - &y));
        let oracle = js_oracle(&x_hat, &sa, r2);
        let via = shrink_with_residual(&x_hat, &sa, r2, EstimatorKind::Shrinkage);
        assert!((oracle.shrink_factor - via.shrink_factor).abs() <= 1e-12);
        assert!((oracle.x_hat - via.x_hat).amax() <= 1e-12);
    }

    #[test]
    fn matrix_variant_reduces_to_vector_for_one_column() {
        let a = random(40, 5, 41);
        let y = rvec(40, 42);
        let s = random(20, 40, 43) / (20f64).sqrt();
        let (sa, sy) = (&s * &a, &s * &y);
        let x_hat = classical(&sa, &sy).unwrap().x_hat;
        let vec_rec = shrinkage(&x_hat, &sa, &a, &y).unwrap();
        let mat_rec = shrinkage_matrix(&to_column(&x_hat), &sa, &a, &to_column(&y)).unwrap();
        assert_eq!(vec_rec.shrink_factor, mat_rec.shrink_factor);
        assert_eq!(vec_rec.x_hat.as_slice(), mat_rec.x_hat.as_slice());
    }

    #[test]
    fn matrix_variant_zero_residual() {
        let a = random(30, 4, 51);
        let x = random(4, 3, 52);
        let t = &a * &x;
        let sa = &random(12, 30, 53) * &a;
        let rec = shrinkage_matrix(&x, &sa, &a, &t).unwrap();
        assert_relative_eq!(rec.shrink_factor, 1.0, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn collinear_and_factor_at_most_one(seed in any::<u64>(), d in 1usize..8, extra in 2usize..10) {
                let m = d + extra;
                let n = m + 5;
                let a = random(n, d, seed);
                let y = rvec(n, seed ^ 7);
                let s = random(m, n, seed ^ 9);
                let (sa, sy) = (&s * &a, &s * &y);
                let x_hat = classical(&sa, &sy).unwrap().x_hat;
                let recs = [
                    shrinkage(&x_hat, &sa, &a, &y).unwrap(),
                    shrinkage_alt(&x_hat, &sa, &sy).unwrap(),
                    positive_part(&x_hat, &sa, &a, &y).unwrap(),
                    js_oracle(&x_hat, &sa, 1.0),
                ];
                for rec in recs {
                    prop_assert!(rec.shrink_factor <= 1.0);
                    prop_assert_eq!(rec.x_hat.clone(), &x_hat * rec.shrink_factor);
                    if d <= 2 {
                        prop_assert_eq!(rec.x_hat.clone(), x_hat.clone());
                        prop_assert_eq!(rec.flag, Some(ShrinkFlag::SmallDimension));
                    }
                    if rec.kind == EstimatorKind::PositivePart {
                        prop_assert!(rec.shrink_factor >= 0.0);
                    }
                }
            }
        }
    }
}
