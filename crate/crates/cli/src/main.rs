//! `ivscsm` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ivscsm::estimator::{CenteringPopulation, EstimatorKind, FitOptions, DEFAULT_PINV_RTOL};
use ivscsm::inference::{infer, InferenceOptions, SeMethod};
use ivscsm::io::{load_dataset, write_results, write_simulation, write_study, Manifest};
use ivscsm::mc::{report_markdown, run_study, StudyConfig};
use ivscsm::simulation::{simulate_trial, DgmConfig, Variant};
use ivscsm::{fit, Error};

#[derive(Parser, Debug)]
#[command(
    name = "ivscsm",
    version,
    about = "Structural cumulative survival models for trials with treatment switching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trial and write events, treatment and truth files.
    Simulate(SimulateArgs),
    /// Fit an estimator to long-format trial data.
    Fit(FitArgs),
    /// Run a replicated simulation study.
    Mc(McArgs),
    /// Print the tool version.
    Version,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// Drawn from system entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "paper")]
    variant: Variant,
    /// Exponential censoring hazard; calibrated to an 18% censoring rate when omitted.
    #[arg(long)]
    censor_hazard: Option<f64>,
    /// Output prefix for `.events.csv`, `.treatment.csv` and `.truth.json`.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    treatment: PathBuf,
    /// End of study; defaults to the largest follow-up time.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "robust")]
    estimator: EstimatorKind,
    #[arg(long, default_value = "bootstrap")]
    se: SeMethod,
    #[arg(long = "boot-B", default_value_t = 500)]
    boot_b: usize,
    #[arg(long = "mult-G", default_value_t = 1000)]
    mult_g: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_PINV_RTOL)]
    pinv_rtol: f64,
    #[arg(long, default_value = "survivor-weighted")]
    centering: CenteringPopulation,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output prefix for `.curve.csv` and `.summary.json`.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct McArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value = "paper")]
    variant: Variant,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "influence")]
    se: SeMethod,
    #[arg(long = "boot-B", default_value_t = 200)]
    boot_b: usize,
    /// Also run the multiplier tests with this many draws per replicate.
    #[arg(long = "mult-G")]
    mult_g: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "robust,ytt")]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value_t = DEFAULT_PINV_RTOL)]
    pinv_rtol: f64,
    #[arg(long)]
    censor_hazard: Option<f64>,
    /// Output prefix for `.csv` and `.md`.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

fn resolve_seed(seed: &mut Option<u64>) -> u64 {
    let s = *seed.get_or_insert_with(rand::random);
    println!("seed: {s}");
    s
}

fn simulate(mut args: SimulateArgs) -> Result<(), Error> {
    let seed = resolve_seed(&mut args.seed);
    let mut cfg = DgmConfig::new(args.n, seed, args.variant);
    cfg.censor_hazard = args.censor_hazard;
    let trial = simulate_trial(&cfg)?;
    let manifest = Manifest::new("simulate", Some(seed), &args)?;
    let paths = write_simulation(&trial.dataset, &trial.truth, &args.out, &manifest)?;
    println!(
        "censoring fraction {:.4}, switching fraction {:.4}",
        trial.truth.censoring_fraction, trial.truth.switching_fraction
    );
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn fit_command(mut args: FitArgs) -> Result<(), Error> {
    let seed = resolve_seed(&mut args.seed);
    let data = load_dataset(&args.events, &args.treatment, args.tau)?;
    let opts = FitOptions {
        pinv_rtol: args.pinv_rtol,
        centering: args.centering,
    };
    let result = fit(&data, args.estimator, &opts)?;
    let inference = infer(
        &data,
        &result,
        &InferenceOptions {
            se_method: args.se,
            bootstrap_replicates: args.boot_b,
            multiplier_replicates: args.mult_g,
            level: args.level,
            seed,
        },
    )?;
    let manifest = Manifest::new("fit", Some(seed), &args)?;
    let (curve, summary) = write_results(&result, Some(&inference), &args.out, &manifest)?;
    for (c, name) in ["beta_D", "beta_Z"].iter().enumerate().take(args.estimator.dimension()) {
        println!(
            "{name} = {:.4} ({:.4}, {:.4}), se {:.4}",
            result.beta[c], inference.beta_lower[c], inference.beta_upper[c], inference.se_beta[c]
        );
    }
    println!(
        "p_null_D = {:.4}, p_null_Z = {:.4}, p_gof = {:.4}",
        inference.tests.p_null_d, inference.tests.p_null_z, inference.tests.p_gof
    );
    println!("wrote {}\nwrote {}", curve.display(), summary.display());
    Ok(())
}

fn mc(mut args: McArgs) -> Result<(), Error> {
    let seed = resolve_seed(&mut args.seed);
    let mut dgm = DgmConfig::new(args.n, seed, args.variant);
    dgm.censor_hazard = args.censor_hazard;
    let mut cfg = StudyConfig::new(dgm, args.reps, seed);
    cfg.estimators = args.estimators.clone();
    cfg.se_method = args.se;
    cfg.bootstrap_replicates = args.boot_b;
    cfg.multiplier_replicates = args.mult_g;
    cfg.fit.pinv_rtol = args.pinv_rtol;
    let report = run_study(&cfg)?;
    let manifest = Manifest::new("mc", Some(seed), &args)?;
    let paths = write_study(&report, &args.out, &manifest)?;
    print!("{}", report_markdown(&report.rows));
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericFailure { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_command(a),
        Command::Mc(a) => mc(a),
        Command::Version => {
            println!("ivscsm {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
