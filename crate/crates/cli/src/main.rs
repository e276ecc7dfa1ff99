mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sketchls::dataio::DataFormat;
use sketchls::estimators::EstimatorKind;
use sketchls::sketch::SketchFamily;
use sketchls::Error;

#[derive(Parser, Debug)]
#[command(name = "sketchls", version, about = "Sketched least squares with James-Stein shrinkage")]
pub struct Cli {
    /// Print structured JSON instead of `key value` lines.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for Monte Carlo work.
    #[arg(long, global = true, env = "SKETCHLS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic problem with exact SNR and save it as dense CSV.
    Datagen(DatagenArgs),
    /// Solve a dataset exactly.
    Solve(SolveArgs),
    /// Sketch a dataset once and apply one estimator.
    SketchSolve(SketchSolveArgs),
    /// Run a Monte Carlo experiment from a config file.
    Experiment(ExperimentArgs),
    /// Evaluate the closed-form error bounds.
    Bounds(BoundsArgs),
    /// Monte Carlo checks with pass/fail exit codes.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Args, Debug)]
pub struct DatagenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `sparse` (label idx:val ...) or `csv` (target first).
    #[arg(long, default_value = "csv")]
    pub format: DataFormat,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Write x_ls here, one value per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SketchSolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub family: SketchFamily,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "classical")]
    pub estimator: EstimatorKind,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.path`. Without either, the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub r2: f64,
    /// SNR; upper bounds are NA without it.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Cube half-width for the general lower bound.
    #[arg(long = "B", conflicts_with = "eta2")]
    pub b: Option<f64>,
    /// SNR cap, converted to a cube half-width.
    #[arg(long)]
    pub eta2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Stein's risk identity for the James-Stein estimator.
    Stein {
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// Condition number of the random covariance.
        #[arg(long, default_value_t = 100.0)]
        cond: f64,
        /// Norm of theta (random direction).
        #[arg(long, default_value_t = 0.0)]
        theta_norm: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Unbiasedness of both residual-energy estimators on synthetic data.
    Residual {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value = "gaussian")]
        family: SketchFamily,
        #[arg(long, default_value_t = 60)]
        m: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Mean of S^T S against the identity.
    Gram {
        #[arg(long)]
        family: SketchFamily,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
}

/// Failure categories mapped to exit codes.
pub enum Failure {
    Usage(String),
    Library(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical() => 3,
        Error::InvalidArgument(_) | Error::InvalidSketchSize { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verification(out)) => {
            print!("{out}");
            eprintln!("verification failed");
            ExitCode::from(4)
        }
    }
}
