use std::fs;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use sketchls::bounds::{BoundInputs, BoundReport};
use sketchls::datagen::{gen_gaussian_data, SyntheticSpec};
use sketchls::dataio::{self, DatasetFile, RESULTS_HEADER};
use sketchls::estimators::{self, EstimateRecord, EstimatorKind};
use sketchls::harness::{
    random_spd, run_experiment, verify_gram_identity, verify_residual_unbiased, verify_stein, ExperimentConfig,
    SteinInstance,
};
use sketchls::problem::{prediction_error, solve_exact};
use sketchls::seed;
use sketchls::sketch::{SketchOperator, SketchSpec};
use sketchls::Error;

use crate::output::{Field, Report};
use crate::{BoundsArgs, Cli, Command, DataArgs, DatagenArgs, ExperimentArgs, Failure, SketchSolveArgs, SolveArgs, VerifyCommand};

type Outcome = Result<String, Failure>;

pub fn run(cli: &Cli) -> Outcome {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    let json = cli.json;
    match &cli.command {
        Command::Datagen(a) => datagen(a, json),
        Command::Solve(a) => solve(a, json),
        Command::SketchSolve(a) => sketch_solve(a, json),
        Command::Experiment(a) => experiment(a, cli.threads, json),
        Command::Bounds(a) => bounds(a, json),
        Command::Verify(v) => verify(v, json),
    }
}

fn datagen(a: &DatagenArgs, json: bool) -> Outcome {
    let (p, sol) = gen_gaussian_data(&SyntheticSpec::new(a.n, a.d, a.rho, a.seed))?;
    dataio::save_dense_csv(&p, &a.out)?;
    let mut r = Report::new();
    r.int("n", p.n())
        .int("d", p.d())
        .real("r2", sol.r2)
        .real("rho", sol.snr_or_infinite())
        .text("out", a.out.display().to_string());
    Ok(r.render(json))
}

fn load(data: &DataArgs) -> Result<sketchls::problem::ProblemInstance, Failure> {
    Ok(dataio::load(&DatasetFile::new(&data.data, data.format))?)
}

fn solve(a: &SolveArgs, json: bool) -> Outcome {
    let p = load(&a.data)?;
    let sol = solve_exact(&p);
    if let Some(path) = &a.out {
        let text: String = sol.x_ls.iter().map(|v| format!("{}\n", dataio::format_f64(*v))).collect();
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    let mut r = Report::new();
    r.int("n", p.n())
        .int("d", p.d())
        .real("r2", sol.r2)
        .real("rho", sol.snr_or_infinite())
        .push("x_ls", Field::Reals(sol.x_ls.iter().copied().collect()));
    Ok(r.render(json))
}

fn estimate(
    kind: EstimatorKind,
    x: &DVector<f64>,
    sa: &DMatrix<f64>,
    sy: &DVector<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    r2_true: f64,
) -> sketchls::Result<EstimateRecord> {
    match kind {
        EstimatorKind::Classical => estimators::classical(sa, sy),
        EstimatorKind::JsOracle => Ok(estimators::js_oracle(x, sa, r2_true)),
        EstimatorKind::Shrinkage => estimators::shrinkage(x, sa, a, y),
        EstimatorKind::ShrinkageAlt => estimators::shrinkage_alt(x, sa, sy),
        EstimatorKind::PositivePart => estimators::positive_part(x, sa, a, y),
        EstimatorKind::ShrinkageFro => {
            let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
            let rec = estimators::shrinkage_matrix(&col(x), sa, a, &col(y))?;
            Ok(EstimateRecord {
                x_hat: DVector::from_column_slice(rec.x_hat.as_slice()),
                kind: rec.kind,
                shrink_factor: rec.shrink_factor,
                r2_estimate: rec.r2_estimate,
                flag: rec.flag,
                snr_proxy: rec.snr_proxy,
            })
        }
    }
}

fn sketch_solve(args: &SketchSolveArgs, json: bool) -> Outcome {
    let p = load(&args.data)?;
    let sol = solve_exact(&p);
    let op = SketchOperator::for_matrix(SketchSpec::new(args.family, args.m, args.seed), p.a())?;
    let sa = op.apply(p.a())?;
    let sy = op.apply_vector(p.y())?;
    let x = estimators::classical(&sa, &sy)?.x_hat;
    let rec = estimate(args.estimator, &x, &sa, &sy, p.a(), p.y(), sol.r2)?;
    let err = prediction_error(p.a(), &rec.x_hat, &sol.x_ls)?;

    let mut r = Report::new();
    r.text("estimator", rec.kind.name())
        .text("family", args.family.name())
        .int("m", args.m)
        .push("seed", Field::Int(args.seed))
        .real("shrink_factor", rec.shrink_factor)
        .push("r2_estimate", Field::Maybe(rec.r2_estimate))
        .text("flag", rec.flag.map_or("none".to_string(), |f| format!("{f:?}")))
        .push("x_hat", Field::Reals(rec.x_hat.iter().copied().collect()))
        .real("pred_err", err)
        .real("pred_err_normalized", err / p.n() as f64);
    Ok(r.render(json))
}

fn experiment(args: &ExperimentArgs, threads: Option<usize>, json: bool) -> Outcome {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.threads = threads;
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    let output = cfg.output.clone();
    let res = run_experiment(cfg)?;
    for note in res.notes() {
        eprintln!("{note}");
    }
    let csv = res.to_csv()?;
    if let Some(path) = &output {
        dataio::write_results_csv(&res, path)?;
    }
    if json {
        let text = String::from_utf8(csv).expect("csv is utf-8");
        let rows: Vec<Value> = text
            .lines()
            .skip(1)
            .map(|line| {
                let map = RESULTS_HEADER
                    .iter()
                    .zip(line.split(','))
                    .map(|(k, v)| {
                        let value = match v.parse::<f64>() {
                            _ if v == "NA" => Value::Null,
                            Ok(x) if *k != "family" && *k != "estimator" => serde_json::json!(x),
                            _ => Value::String(v.to_string()),
                        };
                        (k.to_string(), value)
                    })
                    .collect();
                Value::Object(map)
            })
            .collect();
        return Ok(format!("{}\n", serde_json::json!({ "n": res.n, "d": res.d, "rows": rows })));
    }
    match output {
        Some(path) => Ok(format!("wrote {} rows to {}\n", res.cells.len(), path.display())),
        None => Ok(String::from_utf8(csv).expect("csv is utf-8")),
    }
}

fn bounds(a: &BoundsArgs, json: bool) -> Outcome {
    let mut inputs = BoundInputs::new(a.d, a.m, a.r2, a.rho.unwrap_or(f64::NAN));
    inputs.sigma_min = a.sigma_min;
    inputs.sigma_max = a.sigma_max;
    inputs.eps = a.eps;
    inputs.eta2 = a.eta2;
    if let Some(b) = a.b {
        inputs.b = b;
    }
    let report = BoundReport::evaluate(inputs);
    let mut r = Report::new();
    for (name, value) in report.entries() {
        r.push(name, Field::Maybe(value.value()));
    }
    Ok(r.render(json))
}

fn check(r: &mut Report, pass: bool, json: bool) -> Outcome {
    r.push("pass", Field::Flag(pass));
    let out = r.render(json);
    if pass {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}

fn verify(v: &VerifyCommand, json: bool) -> Outcome {
    let mut r = Report::new();
    match *v {
        VerifyCommand::Stein { d, cond, theta_norm, samples, seed: s, tol } => {
            let sigma = random_spd(d, cond, seed::derive(s, &[1]))?;
            let mut rng = seed::rng(seed::derive(s, &[2]));
            let dir = DVector::<f64>::from_fn(d, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
            let theta = &dir * (theta_norm / dir.norm());
            let c = verify_stein(&SteinInstance { theta, sigma, samples, seed: s })?;
            r.real("lhs", c.lhs).real("rhs", c.rhs).real("naive", c.naive).real("gap", c.relative_gap());
            check(&mut r, c.relative_gap() <= tol, json)
        }
        VerifyCommand::Residual { n, d, rho, family, m, reps, seed: s, tol } => {
            let (p, sol) = gen_gaussian_data(&SyntheticSpec::new(n, d, rho, s))?;
            let c = verify_residual_unbiased(&p, &sol, family, m, reps, seed::derive(s, &[1]))?;
            let rel_full = (c.mean_full - sol.r2).abs() / sol.r2;
            let rel_sketched = (c.mean_sketched - sol.r2).abs() / sol.r2;
            r.real("r2", sol.r2)
                .real("mean_full", c.mean_full)
                .real("mean_sketched", c.mean_sketched)
                .real("rel_full", rel_full)
                .real("rel_sketched", rel_sketched);
            check(&mut r, rel_full <= tol && rel_sketched <= tol, json)
        }
        VerifyCommand::Gram { family, n, m, reps, seed: s, tol } => {
            let g = verify_gram_identity(family, n, m, reps, s)?;
            r.real("max_deviation", g.max_deviation)
                .real("max_diagonal_deviation", g.max_diagonal_deviation);
            check(&mut r, g.max_deviation <= tol, json)
        }
    }
}
