use super::nuisance::CenteredNuisances;
use super::pinv::{pinv2, Mat2};
use super::recursion::{add_outer, instrument, regressor};
use super::EstimatorKind;
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Design matrix of the two-equation jump system at one event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignMatrix {
    /// `m[r][c] = E_n[v_r x_c Y W]` with `v = (Z^c, Z^c D^c)` and `x = (D, Z)`.
    pub m: Mat2,
    pub min_singular: f64,
    pub effective_rank: usize,
}

/// `M(t) = E_n[(Z^c, Z^c D^c(t))^T (D(t), Z) Y(t) W]` for the given survivor weights.
///
/// `t` must be one of the times the nuisances were centered at.
pub fn design_matrix(
    data: &Dataset,
    nuis: &CenteredNuisances,
    t: f64,
    survivor_weights: &[f64],
    rel_tol: f64,
) -> Result<DesignMatrix> {
    let subjects = data.subjects();
    if survivor_weights.len() != subjects.len() {
        return Err(Error::invalid(format!(
            "{} survivor weights for {} subjects",
            survivor_weights.len(),
            subjects.len()
        )));
    }
    if let Some(w) = survivor_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!(
            "survivor weight {w} must be positive and finite"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::invalid(format!("design time {t} must be positive")));
    }
    let mut m = [[0.0; 2]; 2];
    for ((s, &zc), &w) in subjects.iter().zip(&nuis.zc).zip(survivor_weights) {
        let (at_risk, _) = s.risk_event_state(t);
        if !at_risk {
            continue;
        }
        let d = if s.effective_treatment(t) { 1.0 } else { 0.0 };
        let d_mean = nuis
            .d_mean_by_arm(t, s.arm)
            .ok_or_else(|| Error::invalid(format!("nuisances were not centered at t = {t}")))?;
        let v = instrument(EstimatorKind::Robust, zc, d - d_mean);
        let x = regressor(EstimatorKind::Robust, d, s.arm_f64());
        add_outer(&mut m, v, x, w);
    }
    let n = subjects.len() as f64;
    for row in &mut m {
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    let p = pinv2(&m, rel_tol)?;
    Ok(DesignMatrix {
        m,
        min_singular: p.min_singular,
        effective_rank: p.rank,
    })
}
