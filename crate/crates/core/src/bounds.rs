//! Closed-form error values and bounds for sketched least squares.
//!
//! Every function returns a [`BoundValue`], which keeps "formula does not
//! apply here" distinct from a number. `d`, `m` are the problem and sketch
//! dimensions, `r2` is `||y_perp||^2` and `rho` the SNR
//! `||A x_ls||^2 / ||y_perp||^2`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Undefined {
    /// The formula needs `m > d + extra`.
    SketchTooSmall { m: usize, d: usize, extra: usize },
    /// The formula needs `d > 2`.
    DimensionTooSmall { d: usize },
    InvalidInput(&'static str),
}

impl fmt::Display for Undefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Undefined::SketchTooSmall { m, d, extra } => {
                write!(f, "needs m > d + {extra} (m = {m}, d = {d})")
            }
            Undefined::DimensionTooSmall { d } => write!(f, "needs d > 2 (d = {d})"),
            Undefined::InvalidInput(why) => f.write_str(why),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundValue {
    Value(f64),
    /// A lower bound whose formula went negative; it carries no information
    /// and reads as zero.
    Vacuous { raw: f64 },
    Undefined(Undefined),
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            BoundValue::Value(v) => Some(v),
            BoundValue::Vacuous { .. } => Some(0.0),
            BoundValue::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, BoundValue::Undefined(_))
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> BoundValue {
        match self {
            BoundValue::Value(v) => BoundValue::Value(f(v)),
            other => other,
        }
    }
}

/// `NA` for undefined values, shortest round-trip decimal otherwise.
impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("NA"),
        }
    }
}

fn need(m: usize, d: usize, extra: usize) -> Option<BoundValue> {
    (m <= d + extra).then_some(BoundValue::Undefined(Undefined::SketchTooSmall { m, d, extra }))
}

fn bad_r2(r2: f64) -> Option<BoundValue> {
    (!(r2 >= 0.0) || !r2.is_finite())
        .then_some(BoundValue::Undefined(Undefined::InvalidInput("r2 must be finite and >= 0")))
}

/// Expected prediction error of the classical Gaussian sketch,
/// `d / (m - d - 1) * r2`.
pub fn exact_classical_error(d: usize, m: usize, r2: f64) -> BoundValue {
    if let Some(u) = need(m, d, 1).or_else(|| bad_r2(r2)) {
        return u;
    }
    BoundValue::Value(d as f64 / (m - d - 1) as f64 * r2)
}

/// Lower bound over all unbiased sketch-based estimators. Numerically equal to
/// [`exact_classical_error`]: the classical sketch attains it.
pub fn unbiased_lower_bound(d: usize, m: usize, r2: f64) -> BoundValue {
    exact_classical_error(d, m, r2)
}

/// Lower bound over all estimators when the solution is known to lie in a
/// cube of half-width `b`:
/// `(d/m) r2 (1 - pi^2 r2 / (m b^2 sigma_min))`. `b = inf` gives `(d/m) r2`.
pub fn general_lower_bound(d: usize, m: usize, r2: f64, b: f64, sigma_min: f64) -> BoundValue {
    if let Some(u) = bad_r2(r2) {
        return u;
    }
    if d == 0 || m == 0 {
        return BoundValue::Undefined(Undefined::InvalidInput("d and m must be positive"));
    }
    if !(b > 0.0) {
        return BoundValue::Undefined(Undefined::InvalidInput("B must be positive"));
    }
    if !(sigma_min > 0.0) {
        return BoundValue::Undefined(Undefined::InvalidInput("sigma_min must be positive"));
    }
    let base = d as f64 / m as f64 * r2;
    if b.is_infinite() {
        return BoundValue::Value(base);
    }
    let raw = base * (1.0 - PI * PI * r2 / (m as f64 * b * b * sigma_min));
    if raw < 0.0 {
        BoundValue::Vacuous { raw }
    } else {
        BoundValue::Value(raw)
    }
}

/// Cube half-width implied by an SNR cap `rho <= eta2`:
/// `B^2 = eta2 * r2 / (d * sigma_max)`. Returns `B`.
pub fn eta_to_b(eta2: f64, r2: f64, d: usize, sigma_max: f64) -> Result<f64> {
    if !(eta2 > 0.0 && r2 > 0.0 && d > 0 && sigma_max > 0.0) {
        return Err(Error::InvalidArgument(
            "eta2, r2, d and sigma_max must all be positive".into(),
        ));
    }
    Ok((eta2 * r2 / (d as f64 * sigma_max)).sqrt())
}

/// `4(d-1)/d^2 + 2(d-2)^2 / (d (m-1) (m-d-3))`.
pub fn epsilon_prime(d: usize, m: usize) -> BoundValue {
    if d == 0 {
        return BoundValue::Undefined(Undefined::InvalidInput("d must be positive"));
    }
    if let Some(u) = need(m, d, 3) {
        return u;
    }
    let (df, mf) = (d as f64, m as f64);
    let second = 2.0 * (df - 2.0).powi(2) / (df * (mf - 1.0) * (mf - df - 3.0));
    BoundValue::Value(4.0 * (df - 1.0) / (df * df) + second)
}

/// `1 - (1 - eps') / (1 + (m/d) rho)`, shared by the upper bound and ratio.
fn shrink_bracket(d: usize, m: usize, rho: f64) -> std::result::Result<f64, BoundValue> {
    if d <= 2 {
        return Err(BoundValue::Undefined(Undefined::DimensionTooSmall { d }));
    }
    if !(rho >= 0.0) {
        return Err(BoundValue::Undefined(Undefined::InvalidInput("rho must be >= 0")));
    }
    let eps_p = match epsilon_prime(d, m) {
        BoundValue::Value(v) => v,
        other => return Err(other),
    };
    if rho.is_infinite() {
        return Ok(1.0);
    }
    Ok(1.0 - (1.0 - eps_p) / (1.0 + m as f64 / d as f64 * rho))
}

/// Upper bound on `E ||SA (x_shr - x_ls)||^2`.
pub fn upper_bound_sa(d: usize, m: usize, r2: f64, rho: f64) -> BoundValue {
    if let Some(u) = bad_r2(r2) {
        return u;
    }
    match shrink_bracket(d, m, rho) {
        Ok(bracket) => BoundValue::Value(d as f64 / m as f64 * r2 * bracket),
        Err(u) => u,
    }
}

/// Upper bound on the prediction error of the shrinkage estimator when `S`
/// is a `(1 +- eps)` subspace embedding for range(A).
pub fn upper_bound_pred(d: usize, m: usize, r2: f64, rho: f64, eps: f64) -> BoundValue {
    if !(eps >= 0.0) {
        return BoundValue::Undefined(Undefined::InvalidInput("eps must be >= 0"));
    }
    upper_bound_sa(d, m, r2, rho).map(|v| (1.0 + eps) * v)
}

/// Bound on the ratio of shrinkage to classical prediction error.
pub fn ratio_r(d: usize, m: usize, rho: f64, eps: f64) -> BoundValue {
    if !(eps >= 0.0) {
        return BoundValue::Undefined(Undefined::InvalidInput("eps must be >= 0"));
    }
    match shrink_bracket(d, m, rho) {
        Ok(bracket) => BoundValue::Value((1.0 + eps) * (m - d - 1) as f64 / m as f64 * bracket),
        Err(u) => u,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub d: usize,
    pub m: usize,
    pub r2: f64,
    /// May be `f64::INFINITY` for a zero residual.
    pub rho: f64,
    /// Extreme eigenvalues of `A^T A`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Cube half-width; `f64::INFINITY` for the unconstrained problem.
    pub b: f64,
    /// SNR cap. When set, `b` is replaced by [`eta_to_b`].
    pub eta2: Option<f64>,
    pub eps: f64,
    /// Confidence of the subspace-embedding event. Recorded, not used.
    pub delta: Option<f64>,
}

impl BoundInputs {
    pub fn new(d: usize, m: usize, r2: f64, rho: f64) -> Self {
        Self {
            d,
            m,
            r2,
            rho,
            sigma_min: 1.0,
            sigma_max: 1.0,
            b: f64::INFINITY,
            eta2: None,
            eps: 0.0,
            delta: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub exact_classical: BoundValue,
    pub unbiased_lower: BoundValue,
    pub general_lower: BoundValue,
    pub upper_sa: BoundValue,
    pub upper_pred: BoundValue,
    pub eps_prime: BoundValue,
    pub ratio_r: BoundValue,
}

impl BoundReport {
    pub fn evaluate(inputs: BoundInputs) -> Self {
        let BoundInputs { d, m, r2, rho, sigma_min, sigma_max, eps, .. } = inputs;
        let general_lower = match inputs.eta2 {
            Some(eta2) => match eta_to_b(eta2, r2, d, sigma_max) {
                Ok(b) => general_lower_bound(d, m, r2, b, sigma_min),
                Err(_) => BoundValue::Undefined(Undefined::InvalidInput(
                    "eta2, r2, d and sigma_max must all be positive",
                )),
            },
            None => general_lower_bound(d, m, r2, inputs.b, sigma_min),
        };
        Self {
            inputs,
            exact_classical: exact_classical_error(d, m, r2),
            unbiased_lower: unbiased_lower_bound(d, m, r2),
            general_lower,
            upper_sa: upper_bound_sa(d, m, r2, rho),
            upper_pred: upper_bound_pred(d, m, r2, rho, eps),
            eps_prime: epsilon_prime(d, m),
            ratio_r: ratio_r(d, m, rho, eps),
        }
    }

    /// `(name, value)` pairs in a fixed order, for printing.
    pub fn entries(&self) -> [(&'static str, BoundValue); 7] {
        [
            ("exact_classical", self.exact_classical),
            ("unbiased_lower", self.unbiased_lower),
            ("general_lower", self.general_lower),
            ("upper_sa", self.upper_sa),
            ("upper_pred", self.upper_pred),
            ("eps_prime", self.eps_prime),
            ("ratio_r", self.ratio_r),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(b: BoundValue) -> f64 {
        b.value().expect("defined")
    }

    #[test]
    fn exact_classical_values() {
        assert_relative_eq!(v(exact_classical_error(100, 300, 1.0)), 100.0 / 199.0);
        assert_relative_eq!(v(exact_classical_error(100, 300, 1.0)), 0.502513, epsilon = 1e-6);
        assert_eq!(v(exact_classical_error(5, 20, 0.0)), 0.0);
        assert!(matches!(
            exact_classical_error(10, 11, 1.0),
            BoundValue::Undefined(Undefined::SketchTooSmall { .. })
        ));
    }

    #[test]
    fn unbiased_lower_values() {
        assert_relative_eq!(v(unbiased_lower_bound(20, 60, 1.0)), 20.0 / 39.0);
        assert_relative_eq!(v(unbiased_lower_bound(20, 60, 1.0)), 0.512821, epsilon = 1e-6);
        assert_relative_eq!(v(unbiased_lower_bound(2, 10, 3.0)), 6.0 / 7.0);
    }

    #[test]
    fn general_lower_values() {
        assert_relative_eq!(v(general_lower_bound(100, 300, 1.0, f64::INFINITY, 1.0)), 1.0 / 3.0);
        // B^2 = pi^2 r2 / (m sigma_min) with r2 = m = sigma_min = 1.
        assert_eq!(general_lower_bound(7, 1, 1.0, PI, 1.0), BoundValue::Value(0.0));
        let tiny = general_lower_bound(10, 50, 1.0, 1e-3, 1.0);
        assert!(matches!(tiny, BoundValue::Vacuous { raw } if raw < 0.0));
        assert_eq!(tiny.value(), Some(0.0));
    }

    #[test]
    fn eta_substitution_reproduces_snr_form() {
        let b = eta_to_b(1.0, 1.0, 1, 1.0).unwrap();
        assert_relative_eq!(b * b, 1.0);
        let b1 = eta_to_b(2.0, 3.0, 4, 5.0).unwrap();
        let b2 = eta_to_b(2.0, 6.0, 4, 5.0).unwrap();
        assert_relative_eq!(b2 * b2, 2.0 * b1 * b1, max_relative = 1e-14);
        assert!(eta_to_b(0.0, 1.0, 1, 1.0).is_err());

        let (d, m, r2, eta2, smin, smax) = (10, 400, 2.5, 30.0, 0.8, 1.7);
        let b = eta_to_b(eta2, r2, d, smax).unwrap();
        let composed = v(general_lower_bound(d, m, r2, b, smin));
        let (df, mf) = (d as f64, m as f64);
        let direct = df / mf * r2 * (1.0 - df * PI * PI * smax / (mf * eta2 * smin));
        assert_relative_eq!(composed, direct, max_relative = 1e-12);
    }

    #[test]
    fn epsilon_prime_values() {
        for m in [6, 10, 1000] {
            assert_relative_eq!(v(epsilon_prime(2, m)), 1.0);
        }
        let e = v(epsilon_prime(100, 1000));
        assert_relative_eq!(e, 0.0396 + 2.0 * 98.0 * 98.0 / (100.0 * 999.0 * 897.0), max_relative = 1e-14);
        assert_relative_eq!(e, 0.039814, epsilon = 1e-6);
        assert!(!epsilon_prime(10, 13).is_defined());
    }

    #[test]
    fn upper_bound_limits() {
        let (d, m, r2) = (100, 400, 1.0);
        assert_relative_eq!(v(upper_bound_sa(d, m, r2, f64::INFINITY)), 0.25);
        let ep = v(epsilon_prime(d, m));
        assert_relative_eq!(v(upper_bound_sa(d, m, r2, 0.0)), 0.25 * ep, max_relative = 1e-14);
        let at = v(upper_bound_sa(d, m, r2, 0.1));
        assert_relative_eq!(at, 0.25 * (1.0 - (1.0 - ep) / 1.4), max_relative = 1e-14);
        assert!(!upper_bound_sa(2, 10, 1.0, 1.0).is_defined());
        assert!(!upper_bound_sa(10, 13, 1.0, 1.0).is_defined());
    }

    #[test]
    fn upper_pred_scales_with_eps() {
        let base = v(upper_bound_sa(50, 200, 2.0, 0.3));
        assert_eq!(v(upper_bound_pred(50, 200, 2.0, 0.3, 0.0)), base);
        assert_relative_eq!(v(upper_bound_pred(50, 200, 2.0, 0.3, 0.1)), 1.1 * base, max_relative = 1e-15);
    }

    #[test]
    fn ratio_limits() {
        let r = v(ratio_r(100, 400, 0.1, 0.0));
        let ep = v(epsilon_prime(100, 400));
        assert_relative_eq!(r, 299.0 / 400.0 * (1.0 - (1.0 - ep) / 1.4), max_relative = 1e-14);
        let far = v(ratio_r(10, 10_000_000, 0.5, 0.0));
        assert!((far - 1.0).abs() < 1e-5);
    }

    #[test]
    fn report_display_marks_undefined() {
        let rep = BoundReport::evaluate(BoundInputs::new(20, 22, 1.0, 1.0));
        assert_eq!(rep.upper_sa.to_string(), "NA");
        assert_eq!(rep.exact_classical.to_string(), "20");
        assert_eq!(rep.unbiased_lower, rep.exact_classical);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exact_classical_decreasing_in_m(d in 1usize..200, m in 2usize..2000, r2 in 0.01f64..100.0) {
                let m = m + d + 1;
                prop_assert!(v(exact_classical_error(d, m, r2)) > v(exact_classical_error(d, m + 1, r2)));
            }

            #[test]
            fn upper_sa_nondecreasing_in_rho(d in 3usize..200, extra in 4usize..500, r2 in 0.01f64..10.0,
                                             rho in 0.0f64..100.0, step in 0.0f64..10.0) {
                let m = d + extra;
                // With eps' > 1 (tiny m - d) the bracket falls with rho instead.
                prop_assume!(v(epsilon_prime(d, m)) <= 1.0);
                prop_assert!(v(upper_bound_sa(d, m, r2, rho)) <= v(upper_bound_sa(d, m, r2, rho + step)) * (1.0 + 1e-12));
            }

            #[test]
            fn general_lower_nondecreasing_in_b(d in 1usize..100, m in 1usize..1000, r2 in 0.01f64..10.0,
                                                b in 0.001f64..100.0, step in 0.0f64..100.0, smin in 0.01f64..10.0) {
                let lo = v(general_lower_bound(d, m, r2, b, smin));
                let hi = v(general_lower_bound(d, m, r2, b + step, smin));
                prop_assert!(lo <= hi);
                prop_assert!(hi <= v(general_lower_bound(d, m, r2, f64::INFINITY, smin)));
            }

            #[test]
            fn general_below_unbiased(d in 1usize..200, extra in 2usize..1000, r2 in 0.0f64..10.0) {
                let m = d + extra;
                prop_assert!(v(general_lower_bound(d, m, r2, f64::INFINITY, 1.0)) <= v(unbiased_lower_bound(d, m, r2)));
            }

            #[test]
            fn ratio_below_one_plus_eps(d in 3usize..300, extra in 4usize..3000, rho in 0.0f64..1e4, eps in 0.0f64..1.0) {
                let m = d + extra;
                prop_assert!(v(ratio_r(d, m, rho, eps)) < 1.0 + eps);
            }
        }
    }
}
