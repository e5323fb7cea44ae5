use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::CumulativeEffect;

/// Two-sided standard normal critical value for `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} must lie in (0, 1)")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub t: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

/// `B̂(t_k) ± z · SE(t_k)` at each jump.
pub fn pointwise_bands(curve: &CumulativeEffect, se: &[[f64; 2]], level: f64) -> Result<Vec<Band>> {
    if se.len() != curve.len() {
        return Err(Error::invalid(format!(
            "{} standard errors for {} jumps",
            se.len(),
            curve.len()
        )));
    }
    let z = normal_critical_value(level)?;
    Ok(curve
        .jump_times()
        .iter()
        .zip(curve.values())
        .zip(se)
        .map(|((&t, b), s)| Band {
            t,
            lower: [b[0] - z * s[0], b[1] - z * s[1]],
            upper: [b[0] + z * s[0], b[1] + z * s[1]],
        })
        .collect())
}
