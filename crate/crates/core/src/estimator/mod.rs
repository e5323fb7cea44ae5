//! Recursive estimation of the cumulative treatment and direct effects.
//!
//! The fit walks forward through the distinct event times. At each one it
//! solves the 2×2 jump system `M(t) ΔB(t) = E_n[v W dN(t)]` with a
//! Moore–Penrose inverse, then folds the jump into every subject's survivor
//! weight `W = exp(∫ D dB_D + Z dB_Z)` for later times.

mod constant;
mod design;
mod nuisance;
mod pinv;
pub(crate) mod recursion;

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

pub use constant::{constant_effect, ConstantEffect};
pub use design::{design_matrix, DesignMatrix};
pub use nuisance::{center_nuisances, CenteredNuisances, CenteringPopulation};
pub use pinv::{
    mat_mul, mat_vec, pinv2, pinv_scalar, rotation, svd2, transpose, Mat2, PseudoInverse, Svd2, DEFAULT_PINV_RTOL,
};

use crate::error::{Error, Result};
use crate::model::{CumulativeEffect, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Two-dimensional fit of `(B_D, B_Z)` without the exclusion restriction.
    Robust,
    /// One-dimensional fit of `B_D` assuming the exclusion restriction.
    Ytt,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Robust => "robust",
            EstimatorKind::Ytt => "ytt",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            EstimatorKind::Robust => 2,
            EstimatorKind::Ytt => 1,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(EstimatorKind::Robust),
            "ytt" => Ok(EstimatorKind::Ytt),
            other => Err(Error::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Singular values at or below `pinv_rtol * sigma_max` are treated as zero.
    pub pinv_rtol: f64,
    pub centering: CenteringPopulation,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pinv_rtol: DEFAULT_PINV_RTOL,
            centering: CenteringPopulation::SurvivorWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpDiagnostic {
    pub time: f64,
    pub rank: usize,
    pub min_singular: f64,
    pub max_singular: f64,
    /// Design matrix and event-side vector of the jump system.
    pub design: Mat2,
    pub event_vector: [f64; 2],
    /// Arm means of `D(t)` used for centering, `[arm 0, arm 1]`.
    pub d_mean: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub pinv_rtol: f64,
    pub centering: CenteringPopulation,
    pub no_events: bool,
    /// Jumps solved with a rank-deficient design matrix.
    pub rank_deficient_jumps: usize,
    pub jumps: Vec<JumpDiagnostic>,
}

impl FitDiagnostics {
    pub fn is_degenerate(&self) -> bool {
        self.rank_deficient_jumps > 0
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.no_events {
            out.push("no events in (0, tau]: the fitted curve is identically zero".to_string());
        }
        if self.rank_deficient_jumps > 0 {
            let first = self.jumps.iter().find(|j| j.rank < self.full_rank()).map(|j| j.time);
            out.push(format!(
                "design matrix rank-deficient at {} of {} jumps (first at t = {}); minimum-norm jumps used",
                self.rank_deficient_jumps,
                self.jumps.len(),
                first.unwrap_or(f64::NAN)
            ));
        }
        out
    }

    fn full_rank(&self) -> usize {
        self.jumps.iter().map(|j| j.rank).max().unwrap_or(0).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: EstimatorKind,
    pub curve: CumulativeEffect,
    /// `(beta_D, beta_Z)`; the second slot is 0 for the one-dimensional fit.
    pub beta: [f64; 2],
    pub weights: Vec<f64>,
    pub weight_normalizer: f64,
    pub diagnostics: FitDiagnostics,
    /// `exp(∫ D dB_D + Z dB_Z)` over each subject's follow-up within `(0, tau]`.
    pub survivor_weights: Vec<f64>,
    pub tau: f64,
    pub n: usize,
}

pub fn fit_scsm(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    fit(data, EstimatorKind::Robust, opts)
}

pub fn fit_ytt(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    fit(data, EstimatorKind::Ytt, opts)
}

pub fn fit(data: &Dataset, kind: EstimatorKind, opts: &FitOptions) -> Result<FitResult> {
    if !(opts.pinv_rtol > 0.0) {
        return Err(Error::invalid(format!("pinv_rtol {} must be positive", opts.pinv_rtol)));
    }
    let out = recursion::run(data, kind, opts, |_| Ok(()))?;
    let full_rank = kind.dimension();
    let jumps: Vec<JumpDiagnostic> = out
        .times
        .iter()
        .zip(&out.pinvs)
        .enumerate()
        .map(|(k, (&time, p))| JumpDiagnostic {
            time,
            rank: p.rank,
            min_singular: p.min_singular,
            max_singular: p.max_singular,
            design: out.designs[k],
            event_vector: out.event_vectors[k],
            d_mean: out.nuisances.d_mean_at(k),
        })
        .collect();
    let diagnostics = FitDiagnostics {
        pinv_rtol: opts.pinv_rtol,
        centering: opts.centering,
        no_events: out.times.is_empty(),
        rank_deficient_jumps: jumps.iter().filter(|j| j.rank < full_rank).count(),
        jumps,
    };
    for w in diagnostics.warnings() {
        warn!("{kind} fit: {w}");
    }
    let curve = CumulativeEffect::new(out.times, out.increments, kind.dimension())?;
    let constant = constant_effect(&curve, data)?;
    Ok(FitResult {
        kind,
        curve,
        beta: constant.beta,
        weights: constant.weights,
        weight_normalizer: constant.normalizer,
        diagnostics,
        survivor_weights: out.terminal_weights,
        tau: data.tau(),
        n: data.len(),
    })
}
