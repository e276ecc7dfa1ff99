//! Seeded Monte Carlo experiments over sketch families, sketch sizes and
//! estimators.
//!
//! Every rep of every `(family, m)` pair draws one sketch from the seed
//! `derive(master, [rep, family.tag(), m])`, sketches `[A | y]` once and
//! evaluates all requested estimators on that same draw. Work units run on
//! a rayon pool; results are collected by index, so the output does not
//! depend on the number of threads.

mod config;
mod verify;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use config::{DataSource, ExperimentConfig, DEFAULT_REPS};
pub use verify::{
    random_spd, verify_gram_identity, verify_residual_unbiased, verify_stein, GramCheck, ResidualCheck,
    SteinCheck, SteinInstance,
};

use crate::bounds::{BoundInputs, BoundReport};
use crate::datagen::{add_noise, gen_gaussian_data};
use crate::dataio;
use crate::error::{Error, Result};
use crate::estimators::{classical_matrix, shrink_matrix_with_residual, shrink_with_residual, EstimatorKind};
use crate::linalg::norm2;
use crate::problem::{solve_exact, ExactSolution, ProblemInstance};
use crate::seed;
use crate::sketch::{make_operator, RowWeights, SketchFamily, SketchSpec};

/// Extra derivation word for the independent second sketch of two-sketch mode.
const SECOND_SKETCH: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Skipped(String),
    Failed(String),
}

/// Errors of one estimator on one sketch draw, both divided by `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepErrors {
    pub pred_err: f64,
    pub sa_err: f64,
    pub shrink_factor: f64,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub family: SketchFamily,
    pub m: usize,
    pub estimator: EstimatorKind,
    pub status: CellStatus,
    /// One entry per rep, in rep order. Empty unless the cell succeeded.
    pub pred_err: Vec<f64>,
    pub sa_err: Vec<f64>,
    pub shrink_factor: Vec<f64>,
    /// Sketch seed of each rep, for replay.
    pub seeds: Vec<u64>,
    /// Bounds in raw (not divided by `n`) units.
    pub bounds: BoundReport,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; `None` for fewer than two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> Option<f64> {
    sample_std(xs).map(|s| s / (xs.len() as f64).sqrt())
}

/// Mean and standard error of `a[i] - b[i]`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    if a.len() != b.len() {
        return None;
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Some((mean(&diff)?, std_error(&diff)?))
}

impl CellResult {
    pub fn reps(&self) -> usize {
        self.pred_err.len()
    }

    pub fn mean_pred_err(&self) -> Option<f64> {
        mean(&self.pred_err)
    }

    pub fn std_pred_err(&self) -> Option<f64> {
        sample_std(&self.pred_err)
    }

    pub fn mean_sa_err(&self) -> Option<f64> {
        mean(&self.sa_err)
    }

    pub fn std_sa_err(&self) -> Option<f64> {
        sample_std(&self.sa_err)
    }

    pub fn mean_shrink_factor(&self) -> Option<f64> {
        mean(&self.shrink_factor)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub n: usize,
    pub d: usize,
    /// Target columns; 1 for a vector target.
    pub k: usize,
    pub r2: f64,
    pub rho: f64,
    /// In config order: family, then `m`, then estimator.
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, family: SketchFamily, m: usize, estimator: EstimatorKind) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.m == m && c.estimator == estimator)
    }

    /// One line per skipped or failed cell.
    pub fn notes(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter_map(|c| {
                let (what, why) = match &c.status {
                    CellStatus::Ok => return None,
                    CellStatus::Skipped(r) => ("skipped", r),
                    CellStatus::Failed(r) => ("failed", r),
                };
                Some(format!("{what} {}/m={}/{}: {why}", c.family, c.m, c.estimator))
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        dataio::results_csv(self)
    }
}

/// A resolved experiment: the problem, its exact solution and the sampling
/// weights, ready to evaluate reps.
pub struct Experiment {
    cfg: ExperimentConfig,
    problem: ProblemInstance,
    augmented: DMatrix<f64>,
    /// `A x_ls` (or `A X_ls`), `n x k`.
    fitted: DMatrix<f64>,
    x_ls: DMatrix<f64>,
    r2: f64,
    rho: f64,
    sigma: (f64, f64),
    weights: Vec<(SketchFamily, Option<RowWeights>)>,
}

fn resolve_source(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let problem = match &cfg.source {
        DataSource::Synthetic(spec) => gen_gaussian_data(spec)?.0,
        DataSource::File(file) => dataio::load(file)?,
    };
    if cfg.kappa > 0.0 {
        add_noise(&problem, cfg.kappa, seed::derive(cfg.master_seed, &[config::NOISE_STREAM]))
    } else {
        Ok(problem)
    }
}

fn target_solution(sol: &ExactSolution) -> (DMatrix<f64>, f64, f64) {
    match &sol.matrix {
        Some(m) => {
            let rho = if m.r2 > 0.0 { m.pred_energy / m.r2 } else { f64::INFINITY };
            (m.x_ls.clone(), m.r2, rho)
        }
        None => (
            DMatrix::from_column_slice(sol.x_ls.len(), 1, sol.x_ls.as_slice()),
            sol.r2,
            sol.snr_or_infinite(),
        ),
    }
}

impl Experiment {
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = resolve_source(&cfg)?;
        Self::with_problem(cfg, problem)
    }

    /// Uses `problem` in place of the configured source.
    pub fn with_problem(cfg: ExperimentConfig, problem: ProblemInstance) -> Result<Self> {
        cfg.validate()?;
        let sol = solve_exact(&problem);
        let (x_ls, r2, rho) = target_solution(&sol);
        let mut weights = Vec::new();
        for &family in &cfg.families {
            if !weights.iter().any(|(f, _)| *f == family) {
                weights.push((family, RowWeights::for_family(family, problem.a())?));
            }
        }
        Ok(Self {
            augmented: problem.augmented(),
            fitted: problem.a() * &x_ls,
            x_ls,
            r2,
            rho,
            sigma: (sol.sigma_min, sol.sigma_max),
            weights,
            problem,
            cfg,
        })
    }

    pub fn problem(&self) -> &ProblemInstance {
        &self.problem
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn is_matrix(&self) -> bool {
        self.problem.targets().is_some()
    }

    fn weights(&self, family: SketchFamily) -> Option<&RowWeights> {
        self.weights.iter().find(|(f, _)| *f == family).and_then(|(_, w)| w.as_ref())
    }

    /// Why `kind` cannot run at sketch size `m`, if it cannot.
    pub fn skip_reason(&self, m: usize, kind: EstimatorKind) -> Option<String> {
        let d = self.problem.d();
        let matrix_only = kind == EstimatorKind::ShrinkageFro;
        if self.is_matrix() && kind != EstimatorKind::Classical && !matrix_only {
            return Some("vector estimator on matrix targets".into());
        }
        if kind == EstimatorKind::Classical {
            return (m < d).then(|| format!("m={m} < d={d}"));
        }
        (m <= d + 3).then(|| format!("shrinkage needs m > d+3, got m={m}, d={d}"))
    }

    pub fn rep_seed(&self, family: SketchFamily, m: usize, rep: usize) -> u64 {
        seed::derive(self.cfg.master_seed, &[rep as u64, family.tag(), m as u64])
    }

    fn sketch_blocks(&self, family: SketchFamily, m: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let op = make_operator(SketchSpec::new(family, m, seed), self.problem.n(), self.weights(family))?;
        let sk = op.apply(&self.augmented)?;
        let d = self.problem.d();
        let k = sk.ncols() - d;
        Ok((sk.columns(0, d).into_owned(), sk.columns(d, k).into_owned()))
    }

    /// Evaluates `kinds` on one sketch draw. Deterministic in its inputs, so
    /// any recorded rep can be replayed from its seed.
    pub fn run_rep(
        &self,
        family: SketchFamily,
        m: usize,
        seed: u64,
        kinds: &[EstimatorKind],
    ) -> Result<Vec<RepErrors>> {
        let (a, n) = (self.problem.a(), self.problem.n() as f64);
        let d = self.problem.d();
        let (sa, sy) = self.sketch_blocks(family, m, seed)?;
        let x_cls = classical_matrix(&sa, &sy)?.x_hat;

        let needs_residual = kinds.iter().any(|k| k.min_extra().is_some());
        let (r2_full, r2_sketched) = if !needs_residual {
            (f64::NAN, f64::NAN)
        } else if self.cfg.two_sketch_mode {
            let (sa2, sy2) = self.sketch_blocks(family, m, seed::derive(seed, &[SECOND_SKETCH]))?;
            let x1 = classical_matrix(&sa2, &sy2)?.x_hat;
            self.residual_estimates(m, &x1, &sa2, &sy2)
        } else {
            self.residual_estimates(m, &x_cls, &sa, &sy)
        };

        let a_x = a * &x_cls;
        let sa_x = &sa * &x_cls;
        let sa_xls = &sa * &self.x_ls;
        let column = |mat: &DMatrix<f64>| nalgebra::DVector::from_column_slice(&mat.as_slice()[..d]);

        kinds
            .iter()
            .map(|&kind| {
                let f = match kind {
                    EstimatorKind::Classical => 1.0,
                    EstimatorKind::JsOracle => shrink_with_residual(&column(&x_cls), &sa, self.r2, kind).shrink_factor,
                    EstimatorKind::Shrinkage | EstimatorKind::PositivePart => {
                        shrink_with_residual(&column(&x_cls), &sa, r2_full, kind).shrink_factor
                    }
                    EstimatorKind::ShrinkageAlt => {
                        shrink_with_residual(&column(&x_cls), &sa, r2_sketched, kind).shrink_factor
                    }
                    EstimatorKind::ShrinkageFro => shrink_matrix_with_residual(&x_cls, &sa, r2_full).shrink_factor,
                };
                Ok(RepErrors {
                    pred_err: norm2(&(&a_x * f - &self.fitted)) / n,
                    sa_err: norm2(&(&sa_x * f - &sa_xls)) / n,
                    shrink_factor: f,
                })
            })
            .collect()
    }

    /// `(m-d-1)/(m-1) ||A X - Y||^2` and `m/(m-d) ||SA X - SY||^2`.
    fn residual_estimates(&self, m: usize, x: &DMatrix<f64>, sa: &DMatrix<f64>, sy: &DMatrix<f64>) -> (f64, f64) {
        let d = self.problem.d();
        let targets = self.augmented.columns(d, self.augmented.ncols() - d);
        let full = norm2(&(self.problem.a() * x - targets)) * (m - d - 1) as f64 / (m - 1) as f64;
        let sketched = norm2(&(sa * x - sy)) * m as f64 / (m - d) as f64;
        (full, sketched)
    }

    fn bounds(&self, m: usize) -> BoundReport {
        let mut inputs = BoundInputs::new(self.problem.d(), m, self.r2, self.rho);
        inputs.sigma_min = self.sigma.0;
        inputs.sigma_max = self.sigma.1;
        inputs.eps = self.cfg.eps_for_bounds;
        BoundReport::evaluate(inputs)
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        let cfg = &self.cfg;
        let pairs: Vec<(SketchFamily, usize, Vec<EstimatorKind>)> = cfg
            .families
            .iter()
            .flat_map(|&f| cfg.m_values.iter().map(move |&m| (f, m)))
            .map(|(f, m)| {
                let active = cfg
                    .estimators
                    .iter()
                    .copied()
                    .filter(|&k| self.skip_reason(m, k).is_none())
                    .collect();
                (f, m, active)
            })
            .collect();
        let units: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, (_, _, active))| !active.is_empty())
            .flat_map(|(p, _)| (0..cfg.reps).map(move |r| (p, r)))
            .collect();

        let work = || -> Vec<Result<Vec<RepErrors>, String>> {
            units
                .par_iter()
                .map(|&(p, rep)| {
                    let (family, m, active) = &pairs[p];
                    self.run_rep(*family, *m, self.rep_seed(*family, *m, rep), active)
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
        let outcomes = match cfg.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        };

        let mut cells = Vec::new();
        let mut outcomes = outcomes.into_iter();
        for (family, m, active) in &pairs {
            let reps: Vec<_> = if active.is_empty() {
                Vec::new()
            } else {
                outcomes.by_ref().take(cfg.reps).collect()
            };
            let failure = reps.iter().enumerate().find_map(|(r, o)| {
                o.as_ref().err().map(|e| format!("rep {r}: {e}"))
            });
            let bounds = self.bounds(*m);
            for &kind in &cfg.estimators {
                let mut cell = CellResult {
                    family: *family,
                    m: *m,
                    estimator: kind,
                    status: CellStatus::Ok,
                    pred_err: Vec::new(),
                    sa_err: Vec::new(),
                    shrink_factor: Vec::new(),
                    seeds: Vec::new(),
                    bounds,
                };
                if let Some(reason) = self.skip_reason(*m, kind) {
                    cell.status = CellStatus::Skipped(reason);
                } else if let Some(reason) = &failure {
                    cell.status = CellStatus::Failed(reason.clone());
                } else {
                    let slot = active.iter().position(|&k| k == kind).expect("active estimator");
                    for (rep, outcome) in reps.iter().enumerate() {
                        let e = outcome.as_ref().expect("no failures")[slot];
                        cell.pred_err.push(e.pred_err);
                        cell.sa_err.push(e.sa_err);
                        cell.shrink_factor.push(e.shrink_factor);
                        cell.seeds.push(self.rep_seed(*family, *m, rep));
                    }
                }
                cells.push(cell);
            }
        }

        Ok(ExperimentResult {
            n: self.problem.n(),
            d: self.problem.d(),
            k: self.x_ls.ncols(),
            r2: self.r2,
            rho: self.rho,
            cells,
        })
    }
}

pub fn run_experiment(cfg: ExperimentConfig) -> Result<ExperimentResult> {
    Experiment::prepare(cfg)?.run()
}
