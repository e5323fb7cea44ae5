//! WebAssembly bindings. Each exported function returns a JSON string; errors
//! become thrown JS exceptions. The `*_json` forms are the same operations
//! callable from native Rust.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ivscsm::estimator::{EstimatorKind, FitOptions};
use ivscsm::inference::{infer, InferenceOptions, InferenceResult, SeMethod};
use ivscsm::io::read_dataset;
use ivscsm::simulation::{simulate_trial, switch_survival_curve, DgmConfig, Variant};
use ivscsm::{fit, Dataset, FitResult};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct CurvePoint {
    t: f64,
    b: [f64; 2],
    lower: [f64; 2],
    upper: [f64; 2],
}

#[derive(Serialize)]
struct FitReport {
    estimator: EstimatorKind,
    n: usize,
    tau: f64,
    beta: [f64; 2],
    se_beta: [f64; 2],
    p_null_d: f64,
    p_null_z: f64,
    p_gof: f64,
    curve: Vec<CurvePoint>,
    truth: Option<[f64; 2]>,
    censoring_fraction: Option<f64>,
    switching_fraction: Option<f64>,
    warnings: Vec<String>,
}

fn report(data: &Dataset, f: &FitResult, inf: &InferenceResult) -> FitReport {
    let curve = f
        .curve
        .jump_times()
        .iter()
        .zip(f.curve.values())
        .zip(&inf.bands)
        .map(|((&t, &b), band)| CurvePoint {
            t,
            b,
            lower: band.lower,
            upper: band.upper,
        })
        .collect();
    let mut warnings = f.diagnostics.warnings();
    warnings.extend(inf.warnings.iter().cloned());
    FitReport {
        estimator: f.kind,
        n: data.len(),
        tau: f.tau,
        beta: f.beta,
        se_beta: inf.se_beta,
        p_null_d: inf.tests.p_null_d,
        p_null_z: inf.tests.p_null_z,
        p_gof: inf.tests.p_gof,
        curve,
        truth: None,
        censoring_fraction: None,
        switching_fraction: None,
        warnings,
    }
}

fn fit_and_infer(
    data: &Dataset,
    estimator: &str,
    multiplier_replicates: usize,
    seed: u64,
) -> Result<FitReport, String> {
    let kind: EstimatorKind = estimator.parse().map_err(err)?;
    let f = fit(data, kind, &FitOptions::default()).map_err(err)?;
    let opts = InferenceOptions {
        se_method: SeMethod::Influence,
        multiplier_replicates,
        seed,
        ..InferenceOptions::default()
    };
    let inf = infer(data, &f, &opts).map_err(err)?;
    Ok(report(data, &f, &inf))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(err)
}

/// Switching survival curve `P(W > t | Z = z, U1 = u1)` on a grid, raw and repaired.
pub fn switch_survival_json(variant: &str, z: bool, u1: f64, grid_step: f64, horizon: f64) -> Result<String, String> {
    let variant: Variant = variant.parse().map_err(err)?;
    if !(grid_step > 0.0 && horizon >= 0.0 && horizon / grid_step <= 1e5) {
        return Err("grid_step must be positive and horizon / grid_step at most 1e5".into());
    }
    to_json(&switch_survival_curve(variant, z, u1, grid_step, horizon))
}

/// Simulates one trial and fits it with influence-curve standard errors.
pub fn simulate_and_fit_json(
    n: usize,
    seed: u64,
    variant: &str,
    estimator: &str,
    multiplier_replicates: usize,
) -> Result<String, String> {
    let variant: Variant = variant.parse().map_err(err)?;
    let trial = simulate_trial(&DgmConfig::new(n, seed, variant)).map_err(err)?;
    let mut out = fit_and_infer(&trial.dataset, estimator, multiplier_replicates, seed)?;
    out.truth = Some([trial.truth.slope_d, trial.truth.slope_z]);
    out.censoring_fraction = Some(trial.truth.censoring_fraction);
    out.switching_fraction = Some(trial.truth.switching_fraction);
    out.warnings.extend(trial.truth.warnings);
    to_json(&out)
}

/// Fits pasted events and treatment CSV text. A non-positive or NaN `tau`
/// means the largest follow-up time.
pub fn fit_csv_json(
    events: &str,
    treatment: &str,
    tau: f64,
    estimator: &str,
    multiplier_replicates: usize,
    seed: u64,
) -> Result<String, String> {
    let tau = (tau > 0.0).then_some(tau);
    let data = read_dataset(events.as_bytes(), treatment.as_bytes(), tau).map_err(err)?;
    to_json(&fit_and_infer(&data, estimator, multiplier_replicates, seed)?)
}

#[wasm_bindgen]
pub fn switch_survival(variant: &str, z: bool, u1: f64, grid_step: f64, horizon: f64) -> Result<String, JsError> {
    js(switch_survival_json(variant, z, u1, grid_step, horizon))
}

#[wasm_bindgen]
pub fn simulate_and_fit(
    n: usize,
    seed: u64,
    variant: &str,
    estimator: &str,
    multiplier_replicates: usize,
) -> Result<String, JsError> {
    js(simulate_and_fit_json(
        n,
        seed,
        variant,
        estimator,
        multiplier_replicates,
    ))
}

#[wasm_bindgen]
pub fn fit_csv(
    events: &str,
    treatment: &str,
    tau: f64,
    estimator: &str,
    multiplier_replicates: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(fit_csv_json(
        events,
        treatment,
        tau,
        estimator,
        multiplier_replicates,
        seed,
    ))
}
