use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CumulativeEffect, Dataset};

/// Constant hazards-difference summary of a cumulative effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEffect {
    pub beta: [f64; 2],
    /// `w(t_k)` at each jump time.
    pub weights: Vec<f64>,
    /// `∫_0^tau E_n{Y(s)} ds`.
    pub normalizer: f64,
}

/// Weighted average of the jumps, `beta = Σ_k w(t_k) ΔB(t_k)`, with
/// `w(t) = E_n{Y(t)} / ∫_0^tau E_n{Y(s)} ds`.
pub fn constant_effect(curve: &CumulativeEffect, data: &Dataset) -> Result<ConstantEffect> {
    let tau = data.tau();
    let n = data.len() as f64;
    // E_n{Y(s)} is a left-continuous step function, so its integral over
    // [0, tau] is the mean time under observation truncated at tau.
    let normalizer = data.subjects().iter().map(|s| s.followup.min(tau)).sum::<f64>() / n;
    if !(normalizer > 0.0) || !normalizer.is_finite() {
        return Err(Error::invalid(format!(
            "weight normalizer {normalizer} is not positive"
        )));
    }
    let mut followups: Vec<f64> = data.subjects().iter().map(|s| s.followup).collect();
    followups.sort_by(f64::total_cmp);

    let weights: Vec<f64> = curve
        .jump_times()
        .iter()
        .map(|&t| {
            let at_risk = followups.len() - followups.partition_point(|&x| x < t);
            at_risk as f64 / n / normalizer
        })
        .collect();
    let mut beta = [0.0; 2];
    for (w, inc) in weights.iter().zip(curve.increments()) {
        beta[0] += w * inc[0];
        beta[1] += w * inc[1];
    }
    Ok(ConstantEffect {
        beta,
        weights,
        normalizer,
    })
}
