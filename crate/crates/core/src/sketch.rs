//! Seeded random sketching operators `S` (`m x n`) normalized so that
//! `E[S^T S] = I_n`.
//!
//! Every family realizes its randomness eagerly when the operator is built:
//! dense Gaussian/Rademacher blocks, SRHT sign and row tables, CountSketch
//! hash tables, or sampled row indices with their importance weights.
//! Sampling families draw rows i.i.d. with replacement.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fwht::fwht;
use crate::linalg::HouseholderQr;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SketchFamily {
    Gaussian,
    Rademacher,
    Srht,
    CountSketch,
    UniformSample,
    RowNormSample,
    LeverageSample,
}

impl SketchFamily {
    pub const ALL: [SketchFamily; 7] = [
        SketchFamily::Gaussian,
        SketchFamily::Rademacher,
        SketchFamily::Srht,
        SketchFamily::CountSketch,
        SketchFamily::UniformSample,
        SketchFamily::RowNormSample,
        SketchFamily::LeverageSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchFamily::Gaussian => "gaussian",
            SketchFamily::Rademacher => "rademacher",
            SketchFamily::Srht => "srht",
            SketchFamily::CountSketch => "countsketch",
            SketchFamily::UniformSample => "uniform",
            SketchFamily::RowNormSample => "rownorm",
            SketchFamily::LeverageSample => "leverage",
        }
    }

    /// Stable tag mixed into derived seeds.
    pub fn tag(self) -> u64 {
        match self {
            SketchFamily::Gaussian => 1,
            SketchFamily::Rademacher => 2,
            SketchFamily::Srht => 3,
            SketchFamily::CountSketch => 4,
            SketchFamily::UniformSample => 5,
            SketchFamily::RowNormSample => 6,
            SketchFamily::LeverageSample => 7,
        }
    }

    /// Whether realizing the operator needs data-dependent row weights.
    pub fn needs_weights(self) -> bool {
        matches!(self, SketchFamily::RowNormSample | SketchFamily::LeverageSample)
    }
}

impl fmt::Display for SketchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SketchFamily::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sketch family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchSpec {
    pub family: SketchFamily,
    pub m: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(family: SketchFamily, m: usize, seed: u64) -> Self {
        Self { family, m, seed }
    }
}

/// Row sampling probabilities, validated to be positive and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct RowWeights(Vec<f64>);

impl RowWeights {
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeights(format!("p[{i}] = {v} is not positive")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(p))
    }

    fn normalized(raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidWeights("all weights are zero".into()));
        }
        Self::from_probabilities(raw.into_iter().map(|v| v / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_probabilities(vec![1.0 / n as f64; n])
    }

    /// `p_i = ||a_i||^2 / ||A||_F^2`.
    pub fn row_norms(a: &DMatrix<f64>) -> Result<Self> {
        let raw = a.row_iter().map(|r| r.norm_squared()).collect();
        Self::normalized(raw)
    }

    /// `p_i = l_i / d` with exact leverage scores of `a`.
    pub fn leverage(a: &DMatrix<f64>) -> Result<Self> {
        let qr = HouseholderQr::new(a.clone())?;
        Self::normalized(leverage_scores(&qr))
    }

    pub fn for_family(family: SketchFamily, a: &DMatrix<f64>) -> Result<Option<Self>> {
        match family {
            SketchFamily::RowNormSample => Self::row_norms(a).map(Some),
            SketchFamily::LeverageSample => Self::leverage(a).map(Some),
            _ => Ok(None),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Squared row norms of the thin orthogonal factor.
pub fn leverage_scores(qr: &HouseholderQr) -> Vec<f64> {
    qr.thin_q().row_iter().map(|r| r.norm_squared()).collect()
}

#[derive(Clone, Debug)]
enum Realized {
    Dense(DMatrix<f64>),
    Srht {
        signs: Vec<f64>,
        n_pad: usize,
        /// `None` keeps every transformed row.
        rows: Option<Vec<usize>>,
    },
    CountSketch {
        bucket: Vec<usize>,
        sign: Vec<f64>,
    },
    Sampled {
        rows: Vec<usize>,
        scale: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct SketchOperator {
    spec: SketchSpec,
    n: usize,
    realized: Realized,
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Realizes a sketch for `n`-row inputs. Row-norm and leverage sampling take
/// their probabilities from `weights`; other families ignore it.
pub fn make_operator(spec: SketchSpec, n: usize, weights: Option<&RowWeights>) -> Result<SketchOperator> {
    let SketchSpec { family, m, seed } = spec;
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("sketch needs n, m >= 1, got n={n}, m={m}")));
    }
    let mut rng = seed::rng(seed);
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();

    let realized = match family {
        SketchFamily::Gaussian => Realized::Dense(DMatrix::from_fn(m, n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * inv_sqrt_m
        })),
        SketchFamily::Rademacher => {
            Realized::Dense(DMatrix::from_fn(m, n, |_, _| random_sign(&mut rng) * inv_sqrt_m))
        }
        SketchFamily::Srht => {
            let n_pad = n.next_power_of_two();
            let signs = (0..n_pad).map(|_| random_sign(&mut rng)).collect();
            let rows = (0..m).map(|_| rng.random_range(0..n_pad)).collect();
            Realized::Srht {
                signs,
                n_pad,
                rows: Some(rows),
            }
        }
        SketchFamily::CountSketch => {
            let bucket = (0..n).map(|_| rng.random_range(0..m)).collect();
            let sign = (0..n).map(|_| random_sign(&mut rng)).collect();
            Realized::CountSketch { bucket, sign }
        }
        SketchFamily::UniformSample => {
            let rows = (0..m).map(|_| rng.random_range(0..n)).collect();
            let scale = vec![(n as f64 / m as f64).sqrt(); m];
            Realized::Sampled { rows, scale }
        }
        SketchFamily::RowNormSample | SketchFamily::LeverageSample => {
            let w = weights.ok_or_else(|| {
                Error::InvalidWeights(format!("{family} sampling needs row weights"))
            })?;
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "sampling weights",
                    expected: n,
                    actual: w.len(),
                });
            }
            let p = w.as_slice();
            let index = WeightedIndex::new(p).map_err(|e| Error::InvalidWeights(e.to_string()))?;
            let rows: Vec<usize> = (0..m).map(|_| index.sample(&mut rng)).collect();
            let scale = rows.iter().map(|&i| 1.0 / (m as f64 * p[i]).sqrt()).collect();
            Realized::Sampled { rows, scale }
        }
    };

    Ok(SketchOperator { spec, n, realized })
}

impl SketchOperator {
    /// Builds the operator for data matrix `a`, computing sampling weights
    /// from it when the family needs them.
    pub fn for_matrix(spec: SketchSpec, a: &DMatrix<f64>) -> Result<Self> {
        let weights = RowWeights::for_family(spec.family, a)?;
        make_operator(spec, a.nrows(), weights.as_ref())
    }

    /// SRHT that keeps all `n_pad` transformed rows: an orthogonal map on the
    /// zero-padded input.
    pub fn srht_unsampled(n: usize, seed: u64) -> Self {
        let n_pad = n.max(1).next_power_of_two();
        let mut rng = seed::rng(seed);
        let signs = (0..n_pad).map(|_| random_sign(&mut rng)).collect();
        SketchOperator {
            spec: SketchSpec::new(SketchFamily::Srht, n_pad, seed),
            n,
            realized: Realized::Srht {
                signs,
                n_pad,
                rows: None,
            },
        }
    }

    pub fn spec(&self) -> SketchSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.spec.m
    }

    /// `S M` for an `n x c` matrix `M`.
    pub fn apply(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mat.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                context: "sketch input rows",
                expected: self.n,
                actual: mat.nrows(),
            });
        }
        let m = self.spec.m;
        let cols = mat.ncols();
        let out = match &self.realized {
            Realized::Dense(s) => s * mat,
            Realized::Srht { signs, n_pad, rows } => {
                let mut out = DMatrix::zeros(m, cols);
                let mut buf = vec![0.0; *n_pad];
                let scale = match rows {
                    Some(_) => 1.0 / (m as f64).sqrt(),
                    None => 1.0 / (*n_pad as f64).sqrt(),
                };
                for (c, col) in mat.column_iter().enumerate() {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    for ((b, x), s) in buf.iter_mut().zip(col.iter()).zip(signs) {
                        *b = x * s;
                    }
                    fwht(&mut buf);
                    match rows {
                        Some(rows) => {
                            for (k, &r) in rows.iter().enumerate() {
                                out[(k, c)] = buf[r] * scale;
                            }
                        }
                        None => {
                            for (k, v) in buf.iter().enumerate() {
                                out[(k, c)] = v * scale;
                            }
                        }
                    }
                }
                out
            }
            Realized::CountSketch { bucket, sign } => {
                let mut out = DMatrix::zeros(m, cols);
                for (c, col) in mat.column_iter().enumerate() {
                    for ((x, &b), s) in col.iter().zip(bucket).zip(sign) {
                        out[(b, c)] += s * x;
                    }
                }
                out
            }
            Realized::Sampled { rows, scale } => {
                DMatrix::from_fn(m, cols, |k, c| scale[k] * mat[(rows[k], c)])
            }
        };
        Ok(out)
    }

    pub fn apply_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.apply(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))?;
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// The explicit `m x n` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.realized {
            Realized::Dense(s) => s.clone(),
            _ => self
                .apply(&DMatrix::identity(self.n, self.n))
                .expect("identity has n rows"),
        }
    }

    /// `S^T S`, `n x n`.
    pub fn gram(&self) -> DMatrix<f64> {
        let s = self.to_dense();
        s.transpose() * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn all_operators(n: usize, m: usize, seed: u64) -> Vec<SketchOperator> {
        let a = random(n, 3, 99);
        SketchFamily::ALL
            .iter()
            .map(|&f| SketchOperator::for_matrix(SketchSpec::new(f, m, seed), &a).unwrap())
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for f in SketchFamily::ALL {
            assert_eq!(f.name().parse::<SketchFamily>().unwrap(), f);
        }
        assert!("fastjl".parse::<SketchFamily>().is_err());
    }

    #[test]
    fn zero_maps_to_zero() {
        for op in all_operators(20, 7, 1) {
            let out = op.apply(&DMatrix::zeros(20, 3)).unwrap();
            assert_eq!(out.shape(), (7, 3));
            assert!(out.iter().all(|v| *v == 0.0), "{}", op.spec().family);
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        for op in all_operators(13, 5, 2) {
            let m = random(13, 4, 3);
            let fast = op.apply(&m).unwrap();
            let slow = op.to_dense() * &m;
            assert_relative_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn countsketch_has_one_unit_entry_per_column() {
        let op = make_operator(SketchSpec::new(SketchFamily::CountSketch, 6, 4), 30, None).unwrap();
        let s = op.to_dense();
        for col in s.column_iter() {
            let nz: Vec<f64> = col.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert_eq!(nz[0].abs(), 1.0);
        }
        let g = op.gram();
        for i in 0..30 {
            assert_eq!(g[(i, i)], 1.0);
        }
    }

    #[test]
    fn unsampled_srht_is_orthogonal() {
        let op = SketchOperator::srht_unsampled(11, 5);
        assert_eq!(op.output_dim(), 16);
        let x = random(11, 1, 6);
        let sx = op.apply(&x).unwrap();
        assert_relative_eq!(sx.norm(), x.norm(), max_relative = 1e-13);
        let g = op.gram();
        assert_relative_eq!(g, DMatrix::identity(11, 11), epsilon = 1e-13);
    }

    #[test]
    fn uniform_with_distinct_full_draw_is_unit_selection() {
        // With n = m the row scale is sqrt(n/m) = 1.
        let op = make_operator(SketchSpec::new(SketchFamily::UniformSample, 8, 3), 8, None).unwrap();
        let s = op.to_dense();
        for row in s.row_iter() {
            let nz: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz, vec![1.0]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SketchSpec::new(SketchFamily::Gaussian, 4, 77);
        let a = make_operator(spec, 10, None).unwrap().apply(&DMatrix::identity(10, 10)).unwrap();
        let b = make_operator(spec, 10, None).unwrap().apply(&DMatrix::identity(10, 10)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = make_operator(SketchSpec::new(SketchFamily::Gaussian, 4, 78), 10, None).unwrap();
        assert_ne!(a.as_slice(), c.to_dense().as_slice());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(matches!(
            RowWeights::from_probabilities(vec![0.5, 0.5, 0.0]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(
            RowWeights::from_probabilities(vec![0.5, 0.4]),
            Err(Error::InvalidWeights(_))
        ));
        let mut a = random(5, 2, 1);
        a.row_mut(3).fill(0.0);
        assert!(matches!(RowWeights::row_norms(&a), Err(Error::InvalidWeights(_))));
        assert!(make_operator(SketchSpec::new(SketchFamily::LeverageSample, 3, 0), 5, None).is_err());
    }

    #[test]
    fn leverage_scores_sum_to_rank() {
        let a = random(40, 6, 12);
        let qr = HouseholderQr::new(a).unwrap();
        let total: f64 = leverage_scores(&qr).iter().sum();
        assert_relative_eq!(total, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let op = make_operator(SketchSpec::new(SketchFamily::Srht, 4, 1), 10, None).unwrap();
        assert!(matches!(
            op.apply(&DMatrix::zeros(9, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_subspace_embedding() {
        let (n, d) = (500, 20);
        let a = random(n, d, 21);
        let op = make_operator(SketchSpec::new(SketchFamily::Gaussian, 8 * d, 22), n, None).unwrap();
        let sa = op.apply(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let c = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let ax = &a * &c;
            let scale = 1.0 / ax.norm();
            let ratio = (&sa * &c * scale).norm_squared() / (ax * scale).norm_squared();
            assert!((0.5..=1.5).contains(&ratio), "ratio {ratio}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn linearity(seed in any::<u64>(), fam in 0usize..7, n in 4usize..24, m in 1usize..10) {
                let a = random(n, 2, seed ^ 1);
                let op = SketchOperator::for_matrix(SketchSpec::new(SketchFamily::ALL[fam], m, seed), &a).unwrap();
                let x = random(n, 2, seed ^ 2);
                let y = random(n, 2, seed ^ 3);
                let lhs = op.apply(&(&x + &y)).unwrap();
                let rhs = op.apply(&x).unwrap() + op.apply(&y).unwrap();
                let scale = lhs.amax().max(1.0);
                prop_assert!((lhs - rhs).amax() <= 1e-12 * scale);
            }
        }
    }
}
