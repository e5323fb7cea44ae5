//! Standard errors, pointwise bands and resampling tests for a fit.

mod bands;
mod bootstrap;
mod influence;
mod multiplier;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bands::{normal_critical_value, pointwise_bands, Band};
pub(crate) use bootstrap::sample_sd;
pub use bootstrap::{se_bootstrap, BootstrapSe, MIN_BOOTSTRAP_REPLICATES};
pub use influence::{influence_curves, InfluenceCurves};
pub use multiplier::{multiplier_tests, MultiplierTests, MIN_MULTIPLIER_REPLICATES};

use crate::error::{Error, Result};
use crate::estimator::{FitOptions, FitResult};
use crate::model::Dataset;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMethod {
    Bootstrap,
    Influence,
}

impl SeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SeMethod::Bootstrap => "bootstrap",
            SeMethod::Influence => "influence",
        }
    }
}

impl fmt::Display for SeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(SeMethod::Bootstrap),
            "influence" => Ok(SeMethod::Influence),
            other => Err(Error::invalid(format!("unknown standard-error method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub se_method: SeMethod,
    pub bootstrap_replicates: usize,
    pub multiplier_replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            se_method: SeMethod::Bootstrap,
            bootstrap_replicates: 500,
            multiplier_replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub method: SeMethod,
    pub level: f64,
    pub se_curve: Vec<[f64; 2]>,
    pub se_beta: [f64; 2],
    pub beta_lower: [f64; 2],
    pub beta_upper: [f64; 2],
    pub bands: Vec<Band>,
    pub tests: MultiplierTests,
    pub bootstrap_redraws: usize,
    pub bootstrap_failures: usize,
    pub warnings: Vec<String>,
}

/// Standard errors by the requested method, bands at `opts.level`, and the
/// multiplier tests. Bootstrap and multiplier draws use independent seeds
/// derived from `opts.seed`.
pub fn infer(data: &Dataset, fit: &FitResult, opts: &InferenceOptions) -> Result<InferenceResult> {
    let curves = influence_curves(data, fit)?;
    let mut warnings = Vec::new();
    let (se_curve, se_beta, redraws, failures) = match opts.se_method {
        SeMethod::Influence => (curves.se_curve(), curves.se_beta(), 0, 0),
        SeMethod::Bootstrap => {
            let fit_opts = FitOptions {
                pinv_rtol: fit.diagnostics.pinv_rtol,
                centering: fit.diagnostics.centering,
            };
            let b = se_bootstrap(
                data,
                fit.kind,
                &fit_opts,
                opts.bootstrap_replicates,
                derive_seed(opts.seed, 0),
            )?;
            warnings.extend(b.warnings.iter().cloned());
            (b.se_curve, b.se_beta, b.redraws, b.failures)
        }
    };
    let tests = multiplier_tests(&curves, fit, opts.multiplier_replicates, derive_seed(opts.seed, 1))?;
    let bands = pointwise_bands(&fit.curve, &se_curve, opts.level)?;
    let z = normal_critical_value(opts.level)?;
    Ok(InferenceResult {
        method: opts.se_method,
        level: opts.level,
        beta_lower: [0, 1].map(|c| fit.beta[c] - z * se_beta[c]),
        beta_upper: [0, 1].map(|c| fit.beta[c] + z * se_beta[c]),
        se_curve,
        se_beta,
        bands,
        tests,
        bootstrap_redraws: redraws,
        bootstrap_failures: failures,
        warnings,
    })
}
