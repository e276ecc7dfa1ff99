//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # low-SNR sweep
//! synthetic.n = 1024
//! synthetic.d = 100
//! synthetic.rho = 0.1
//! sketch.families = gaussian, srht
//! sketch.m_values = 150, 200, 300
//! experiment.estimators = classical, shrinkage
//! experiment.reps = 100
//! experiment.seed = 7
//! output.path = results.csv
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::SyntheticSpec;
use crate::dataio::{DataFormat, DatasetFile, TargetMode};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::seed;
use crate::sketch::SketchFamily;

pub const DEFAULT_REPS: usize = 100;

/// Seed-derivation tags for streams that are not tied to a rep.
pub(crate) const DATA_STREAM: u64 = 0xda7a;
pub(crate) const NOISE_STREAM: u64 = 0x9015e;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File(DatasetFile),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Relative variance of extra Gaussian noise added to `y`; 0 disables it.
    pub kappa: f64,
    pub families: Vec<SketchFamily>,
    pub m_values: Vec<usize>,
    pub estimators: Vec<EstimatorKind>,
    pub reps: usize,
    pub master_seed: u64,
    pub two_sketch_mode: bool,
    pub eps_for_bounds: f64,
    /// Worker cap; `None` uses every available core.
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        source: DataSource,
        families: Vec<SketchFamily>,
        m_values: Vec<usize>,
        estimators: Vec<EstimatorKind>,
    ) -> Self {
        Self {
            source,
            kappa: 0.0,
            families,
            m_values,
            estimators,
            reps: DEFAULT_REPS,
            master_seed: 0,
            two_sketch_mode: false,
            eps_for_bounds: 0.0,
            threads: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.families.is_empty() {
            return fail("sketch.families is empty".into());
        }
        if self.m_values.is_empty() {
            return fail("sketch.m_values is empty".into());
        }
        if self.m_values.windows(2).any(|w| w[0] >= w[1]) || self.m_values[0] == 0 {
            return fail("sketch.m_values must be positive and strictly ascending".into());
        }
        if self.estimators.is_empty() {
            return fail("experiment.estimators is empty".into());
        }
        if self.reps == 0 {
            return fail("experiment.reps must be positive".into());
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return fail(format!("noise.kappa must be >= 0, got {}", self.kappa));
        }
        if !(self.eps_for_bounds >= 0.0) || !self.eps_for_bounds.is_finite() {
            return fail(format!("bounds.eps must be >= 0, got {}", self.eps_for_bounds));
        }
        if self.threads == Some(0) {
            return fail("thread count must be positive".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Parses config text. Relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
            raw.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        raw.finish(base_dir)
    }
}

#[derive(Default)]
struct RawConfig {
    n: Option<usize>,
    d: Option<usize>,
    rho: Option<f64>,
    k: Option<usize>,
    data_seed: Option<u64>,
    data_path: Option<String>,
    data_format: Option<DataFormat>,
    onehot: Option<usize>,
    kappa: Option<f64>,
    families: Option<Vec<SketchFamily>>,
    m_values: Option<Vec<usize>>,
    estimators: Option<Vec<EstimatorKind>>,
    reps: Option<usize>,
    seed: Option<u64>,
    two_sketch: Option<bool>,
    eps: Option<f64>,
    output: Option<String>,
}

fn scalar<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` for {key}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

impl RawConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "synthetic.n" => self.n = Some(scalar(key, value)?),
            "synthetic.d" => self.d = Some(scalar(key, value)?),
            "synthetic.rho" => self.rho = Some(scalar(key, value)?),
            "synthetic.k" => self.k = Some(scalar(key, value)?),
            "synthetic.seed" => self.data_seed = Some(scalar(key, value)?),
            "data.path" => self.data_path = Some(value.to_string()),
            "data.format" => self.data_format = Some(scalar(key, value)?),
            "data.onehot" => self.onehot = Some(scalar(key, value)?),
            "noise.kappa" => self.kappa = Some(scalar(key, value)?),
            "sketch.families" => self.families = Some(list(key, value)?),
            "sketch.m_values" => self.m_values = Some(list(key, value)?),
            "experiment.reps" => self.reps = Some(scalar(key, value)?),
            "experiment.seed" => self.seed = Some(scalar(key, value)?),
            "experiment.estimators" => self.estimators = Some(list(key, value)?),
            "experiment.two_sketch" => self.two_sketch = Some(scalar(key, value)?),
            "bounds.eps" => self.eps = Some(scalar(key, value)?),
            "output.path" => self.output = Some(value.to_string()),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn finish(self, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
        let resolve = |p: &str| match base_dir {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };
        let master_seed = self.seed.unwrap_or(0);
        let source = match (self.data_path, self.n, self.d, self.rho) {
            (Some(_), Some(_), _, _) | (Some(_), _, Some(_), _) => {
                return Err(Error::Config("give either synthetic.* or data.path, not both".into()))
            }
            (Some(path), None, None, _) => {
                let format = self.data_format.unwrap_or(DataFormat::DenseCsv);
                let mut file = DatasetFile::new(resolve(&path), format);
                if let Some(k) = self.onehot {
                    file.target_mode = TargetMode::OneHot(k);
                }
                DataSource::File(file)
            }
            (None, Some(n), Some(d), Some(rho)) => {
                let data_seed = self
                    .data_seed
                    .unwrap_or_else(|| seed::derive(master_seed, &[DATA_STREAM]));
                let mut spec = SyntheticSpec::new(n, d, rho, data_seed);
                spec.k = self.k;
                DataSource::Synthetic(spec)
            }
            _ => {
                return Err(Error::Config(
                    "need data.path or all of synthetic.n, synthetic.d, synthetic.rho".into(),
                ))
            }
        };
        let cfg = ExperimentConfig {
            source,
            kappa: self.kappa.unwrap_or(0.0),
            families: self.families.unwrap_or_else(|| vec![SketchFamily::Gaussian]),
            m_values: self
                .m_values
                .ok_or_else(|| Error::Config("sketch.m_values is required".into()))?,
            estimators: self
                .estimators
                .unwrap_or_else(|| vec![EstimatorKind::Classical, EstimatorKind::Shrinkage]),
            reps: self.reps.unwrap_or(DEFAULT_REPS),
            master_seed,
            two_sketch_mode: self.two_sketch.unwrap_or(false),
            eps_for_bounds: self.eps.unwrap_or(0.0),
            threads: None,
            output: self.output.as_deref().map(resolve),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
