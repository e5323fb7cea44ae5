//! Forward-in-time evaluation of the jump recursion shared by the fitters
//! and the influence-curve code.

use super::nuisance::{center_nuisances, CenteredNuisances, CenteringPopulation, RiskOrder};
use super::pinv::{pinv2, pinv_scalar, Mat2, PseudoInverse};
use super::{EstimatorKind, FitOptions};
use crate::error::{Error, Result};
use crate::model::{Dataset, Subject};

/// Instrument vector `(Z^c, Z^c D^c)`; the exclusion-restriction fit uses `Z^c` only.
#[inline]
pub(crate) fn instrument(kind: EstimatorKind, zc: f64, dc: f64) -> [f64; 2] {
    match kind {
        EstimatorKind::Robust => [zc, zc * dc],
        EstimatorKind::Ytt => [zc, 0.0],
    }
}

/// Regressor `(D, Z)` multiplying `(dB_D, dB_Z)`.
#[inline]
pub(crate) fn regressor(kind: EstimatorKind, d: f64, z: f64) -> [f64; 2] {
    match kind {
        EstimatorKind::Robust => [d, z],
        EstimatorKind::Ytt => [d, 0.0],
    }
}

/// Adds `w * v x^T`.
#[inline]
pub(crate) fn add_outer(m: &mut Mat2, v: [f64; 2], x: [f64; 2], w: f64) {
    m[0][0] += w * v[0] * x[0];
    m[0][1] += w * v[0] * x[1];
    m[1][0] += w * v[1] * x[0];
    m[1][1] += w * v[1] * x[1];
}

/// Arm-specific means of `D(t)` over the risk set, weighted by `W(t-)`.
pub(crate) fn weighted_arm_means(subjects: &[Subject], at_risk: &[usize], weights: &[f64], t: f64) -> [f64; 2] {
    let mut treated = [0.0f64; 2];
    let mut total = [0.0f64; 2];
    for &i in at_risk {
        let s = &subjects[i];
        total[s.arm as usize] += weights[i];
        if s.path.value_at(t) {
            treated[s.arm as usize] += weights[i];
        }
    }
    [0, 1].map(|a| if total[a] > 0.0 { treated[a] / total[a] } else { 0.0 })
}

pub(crate) fn invert(kind: EstimatorKind, m: &Mat2, scale: f64, rel_tol: f64) -> Result<PseudoInverse> {
    match kind {
        EstimatorKind::Robust => pinv2(m, rel_tol),
        EstimatorKind::Ytt => {
            let inv = pinv_scalar(m[0][0], scale);
            Ok(PseudoInverse {
                inverse: [[inv, 0.0], [0.0, 0.0]],
                rank: usize::from(inv != 0.0),
                min_singular: m[0][0].abs(),
                max_singular: m[0][0].abs(),
            })
        }
    }
}

/// State of the recursion at one event time, after the jump is computed.
pub(crate) struct JumpContext<'a> {
    pub k: usize,
    pub time: f64,
    /// `Z^c` for every subject, indexed like the dataset.
    pub zc: &'a [f64],
    /// Arm means of `D(t)` used for centering.
    pub d_mean: [f64; 2],
    /// Subject indices with follow-up `>= time`.
    pub at_risk: &'a [usize],
    /// Per at-risk subject: `D(t)`, `D^c(t)`, survivor weight `W(t-)` and event flag.
    pub treat: &'a [f64],
    pub treat_centered: &'a [f64],
    pub weight: &'a [f64],
    pub event: &'a [bool],
    pub pinv: PseudoInverse,
    pub jump: [f64; 2],
}

pub(crate) struct RecursionOutput {
    pub times: Vec<f64>,
    pub increments: Vec<[f64; 2]>,
    pub pinvs: Vec<PseudoInverse>,
    pub designs: Vec<Mat2>,
    pub event_vectors: Vec<[f64; 2]>,
    pub terminal_weights: Vec<f64>,
    pub nuisances: CenteredNuisances,
}

pub(crate) fn run<F>(data: &Dataset, kind: EstimatorKind, opts: &FitOptions, mut observe: F) -> Result<RecursionOutput>
where
    F: FnMut(&JumpContext<'_>) -> Result<()>,
{
    let subjects = data.subjects();
    let n = subjects.len() as f64;
    let times = data.event_times();
    let mut nuisances = center_nuisances(data, &times, opts.centering)?;
    let risk = RiskOrder::new(data);

    let mut weights = vec![1.0; subjects.len()];
    let mut increments = Vec::with_capacity(times.len());
    let mut pinvs = Vec::with_capacity(times.len());
    let mut designs = Vec::with_capacity(times.len());
    let mut event_vectors = Vec::with_capacity(times.len());
    let mut treat = Vec::new();
    let mut treat_centered = Vec::new();
    let mut weight = Vec::new();
    let mut event = Vec::new();

    for (k, &t) in times.iter().enumerate() {
        let at_risk = risk.at_risk(t);
        if opts.centering == CenteringPopulation::SurvivorWeighted {
            nuisances.set_d_mean(k, weighted_arm_means(subjects, at_risk, &weights, t));
        }
        let d_mean = nuisances.d_mean_at(k);
        treat.clear();
        treat_centered.clear();
        weight.clear();
        event.clear();

        let mut design = [[0.0; 2]; 2];
        let mut event_vector = [0.0; 2];
        let mut scale = 0.0;
        for &i in at_risk {
            let s = &subjects[i];
            let d = if s.path.value_at(t) { 1.0 } else { 0.0 };
            let z = s.arm_f64();
            let dc = d - d_mean[s.arm as usize];
            let w = weights[i];
            let ev = s.event && s.followup == t;
            let v = instrument(kind, nuisances.zc[i], dc);
            let x = regressor(kind, d, z);
            add_outer(&mut design, v, x, w);
            scale += (w * v[0] * x[0]).abs();
            if ev {
                event_vector[0] += w * v[0];
                event_vector[1] += w * v[1];
            }
            treat.push(d);
            treat_centered.push(dc);
            weight.push(w);
            event.push(ev);
        }
        for row in &mut design {
            for x in row.iter_mut() {
                *x /= n;
            }
        }
        event_vector[0] /= n;
        event_vector[1] /= n;

        let pinv = invert(kind, &design, scale / n, opts.pinv_rtol).map_err(|e| Error::NumericFailure {
            jump: k,
            message: e.to_string(),
        })?;
        let jump = pinv.apply(event_vector);
        if !jump.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericFailure {
                jump: k,
                message: format!("non-finite jump {jump:?} at t = {t}"),
            });
        }

        observe(&JumpContext {
            k,
            time: t,
            zc: &nuisances.zc,
            d_mean,
            at_risk,
            treat: &treat,
            treat_centered: &treat_centered,
            weight: &weight,
            event: &event,
            pinv,
            jump,
        })?;

        // exp(D dB_D + Z dB_Z) takes one of four values.
        let factor = [[1.0, jump[1].exp()], [jump[0].exp(), (jump[0] + jump[1]).exp()]];
        for (p, &i) in at_risk.iter().enumerate() {
            let f = factor[treat[p] as usize][subjects[i].arm as usize];
            weights[i] *= f;
            if !weights[i].is_finite() || weights[i] == 0.0 {
                return Err(Error::NumericFailure {
                    jump: k,
                    message: format!("survivor weight of subject {} left the finite range", subjects[i].id),
                });
            }
        }
        increments.push(jump);
        pinvs.push(pinv);
        designs.push(design);
        event_vectors.push(event_vector);
    }

    Ok(RecursionOutput {
        times,
        increments,
        pinvs,
        designs,
        event_vectors,
        terminal_weights: weights,
        nuisances,
    })
}
