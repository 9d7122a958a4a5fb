//! Command-line interface: `test`, `calibrate`, `power`, and `verify`.
//!
//! Exit codes: 0 success, 2 input/configuration error, 3 numeric failure.
//! For `verify`, exit 0 means every suite passed its tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cgfnt::calibration::{calibrate_null, calibrate_null_univariate, NullCalibration};
use cgfnt::distributions::parse_spec;
use cgfnt::error::Error;
use cgfnt::harness::{
    calibrate_statistics, parse_sample_csv, power_study_with, read_calibration, run_verify,
    write_calibration, PowerStudyConfig, TestKind,
};
use cgfnt::{run_test, run_test_univariate, EvalPointSet};

#[derive(Parser)]
#[command(name = "cgfnt", about = "CGF-Hessian normality tests", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CalCell {
    /// Half-width R of the coordinate range the evaluation points are drawn from.
    #[arg(long = "R", default_value_t = 3.0)]
    radius: f64,
    /// Number of evaluation points.
    #[arg(long = "N", default_value_t = 500)]
    n_points: usize,
    /// Monte Carlo null replications.
    #[arg(long = "S", default_value_t = 10_000)]
    s_reps: usize,
    /// Master seed for calibration (and the point set).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV sample for normality.
    Test {
        /// Sample CSV: one observation per row.
        #[arg(long)]
        input: PathBuf,
        /// Calibration file from `cgfnt calibrate`; omit to calibrate inline.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        cell: CalCell,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Use the univariate statistic (input must have one column).
        #[arg(long)]
        univariate: bool,
        /// Skip a single header row.
        #[arg(long)]
        header: bool,
    },
    /// Simulate a null calibration and write it to a file.
    Calibrate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[command(flatten)]
        cell: CalCell,
        #[arg(long)]
        out: PathBuf,
        /// Calibrate the univariate statistic (forces p = 1).
        #[arg(long)]
        univariate: bool,
    },
    /// Monte Carlo rejection proportions for a sampling distribution.
    Power {
        /// Distribution spec, e.g. `product:uniform(0,1):p=3` or
        /// `copula:frank(10):marginal=normal(0,1):p=3`.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Comma-separated subset of t,h,d,u,energy,mskew,mkurt.
        #[arg(long, default_value = "t")]
        tests: String,
        /// Seed for the alternative-sample replications (the calibration
        /// seed is `--seed`).
        #[arg(long = "rep-seed", default_value_t = 1)]
        rep_seed: u64,
        #[command(flatten)]
        cell: CalCell,
        /// Emit csv rows instead of a json object.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Run the numerical verification suites for the asymptotic theory.
    Verify {
        /// Smaller sample sizes and draw counts; finishes in under a minute.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::NumericLimit(_) | Error::SingularCovariance => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn init_thread_pool() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("CGFNT_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn result_json(
    res: &cgfnt::TestResult,
    n: usize,
    p: usize,
    cal: &NullCalibration,
) -> serde_json::Value {
    let components = res.components.as_ref().map(|c| {
        json!({
            "h": c.h_stat,
            "d": c.d_stat,
            "studentized": { "h": c.studentized_h, "d": c.studentized_d },
        })
    });
    json!({
        "statistic": res.statistic,
        "p_value": res.p_value,
        "reject": res.reject,
        "alpha": res.alpha,
        "n": n,
        "p": p,
        "R": cal.point_set.radius(),
        "N": cal.point_set.len(),
        "S": cal.s_reps,
        "seed": cal.seed,
        "components": components,
        "degenerate_covariance": res.degenerate_covariance,
    })
}

fn cmd_test(
    input: PathBuf,
    calibration: Option<PathBuf>,
    cell: CalCell,
    alpha: f64,
    univariate: bool,
    header: bool,
) -> cgfnt::Result<()> {
    let sample = parse_sample_csv(&input, header)?;
    let (n, p) = (sample.n(), sample.p());
    if univariate && p != 1 {
        return Err(Error::InvalidInput(format!(
            "--univariate needs a single-column sample, got p = {p}"
        )));
    }
    let cal = match calibration {
        Some(path) => read_calibration(&path)?,
        None => {
            let dim = if univariate { 1 } else { p };
            let pts = EvalPointSet::sample(dim, cell.n_points, cell.radius, cell.seed)?;
            if univariate {
                calibrate_null_univariate(n, &pts, cell.s_reps, cell.seed)?
            } else {
                calibrate_null(n, p, &pts, cell.s_reps, cell.seed)?
            }
        }
    };
    let res = if univariate {
        let col: Vec<f64> = sample.data().column(0).iter().cloned().collect();
        run_test_univariate(&col, &cal, alpha)?
    } else {
        run_test(&sample, &cal, alpha)?
    };
    println!("{}", serde_json::to_string(&result_json(&res, n, p, &cal)).expect("serializable"));
    Ok(())
}

fn cmd_calibrate(n: usize, p: usize, cell: CalCell, out: PathBuf, univariate: bool) -> cgfnt::Result<()> {
    let dim = if univariate { 1 } else { p };
    if univariate && p != 1 {
        return Err(Error::InvalidInput("--univariate calibrations have p = 1".into()));
    }
    let pts = EvalPointSet::sample(dim, cell.n_points, cell.radius, cell.seed)?;
    let cal = if univariate {
        calibrate_null_univariate(n, &pts, cell.s_reps, cell.seed)?
    } else {
        calibrate_null(n, p, &pts, cell.s_reps, cell.seed)?
    };
    write_calibration(&out, &cal)?;
    eprintln!(
        "wrote calibration n={} p={} R={} N={} S={} seed={} ({} redraws)",
        cal.n,
        cal.p,
        cal.point_set.radius(),
        cal.point_set.len(),
        cal.s_reps,
        cal.seed,
        cal.redraw_count
    );
    Ok(())
}

fn cmd_power(
    spec_text: String,
    n: usize,
    reps: usize,
    alpha: f64,
    tests_text: String,
    seed: u64,
    cell: CalCell,
    format: String,
) -> cgfnt::Result<()> {
    let spec = parse_spec(&spec_text)?;
    let tests: Vec<TestKind> = tests_text
        .split(',')
        .map(|s| TestKind::parse(s.trim()))
        .collect::<cgfnt::Result<_>>()?;
    if tests.is_empty() {
        return Err(Error::InvalidInput("no tests requested".into()));
    }
    let p = spec.dim();
    let pts = EvalPointSet::sample(p, cell.n_points, cell.radius, cell.seed)?;
    let cals = calibrate_statistics(n, p, &pts, cell.s_reps, cell.seed, &tests, alpha)?;
    let cfg = PowerStudyConfig {
        spec,
        n,
        replications: reps,
        alpha,
        tests,
        master_seed: seed,
        radius: cell.radius,
        n_points: cell.n_points,
        cal_reps: cell.s_reps,
        cal_seed: cell.seed,
    };
    let res = power_study_with(&cfg, &cals)?;
    match format.as_str() {
        "json" => {
            let rates: Vec<serde_json::Value> = res
                .rates
                .iter()
                .map(|r| json!({ "test": r.test.label(), "reject_rate": r.proportion, "se": r.se }))
                .collect();
            let obj = json!({
                "spec": spec_text,
                "n": n,
                "alpha": alpha,
                "replications": res.replications,
                "degenerate_count": res.degenerate_count,
                "R": cell.radius,
                "N": cell.n_points,
                "S": cell.s_reps,
                "cal_seed": cell.seed,
                "seed": seed,
                "wall_seconds": res.wall_seconds,
                "rates": rates,
            });
            println!("{}", serde_json::to_string(&obj).expect("serializable"));
        }
        "csv" => {
            println!("spec,n,test,reject_rate,se,replications,degenerate_count");
            for r in &res.rates {
                println!(
                    "{},{},{},{},{},{},{}",
                    spec_text,
                    n,
                    r.test.label(),
                    r.proportion,
                    r.se,
                    res.replications,
                    res.degenerate_count
                );
            }
        }
        other => return Err(Error::InvalidInput(format!("unknown format `{other}`"))),
    }
    Ok(())
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test { input, calibration, cell, alpha, univariate, header } => {
            cmd_test(input, calibration, cell, alpha, univariate, header)
        }
        Command::Calibrate { n, p, cell, out, univariate } => cmd_calibrate(n, p, cell, out, univariate),
        Command::Power { spec, n, reps, alpha, tests, rep_seed, cell, format } => {
            cmd_power(spec, n, reps, alpha, tests, rep_seed, cell, format)
        }
        Command::Verify { quick, seed } => {
            let report = run_verify(quick, seed);
            match serde_json::to_string(&report) {
                Ok(s) => println!("{s}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            return if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
