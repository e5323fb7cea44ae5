use log::warn;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::influence::InfluenceCurves;
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::rng::substream;

pub const MIN_MULTIPLIER_REPLICATES: usize = 1000;
/// Replicates drawn per matrix product.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierTests {
    pub p_null_d: f64,
    pub p_null_z: f64,
    pub p_gof: f64,
    pub stat_null_d: f64,
    pub stat_null_z: f64,
    pub stat_gof: f64,
    pub replicates: usize,
}

/// Supremum tests of `B_D ≡ 0`, `B_Z ≡ 0` and `B_D(t) = β_D t` calibrated by
/// Gaussian multipliers on the influence curves.
pub fn multiplier_tests(
    curves: &InfluenceCurves,
    fit: &FitResult,
    replicates: usize,
    seed: u64,
) -> Result<MultiplierTests> {
    if replicates < MIN_MULTIPLIER_REPLICATES {
        return Err(Error::invalid(format!(
            "multiplier tests need at least {MIN_MULTIPLIER_REPLICATES} replicates, got {replicates}"
        )));
    }
    let grid = fit.curve.jump_times();
    if curves.grid() != grid {
        return Err(Error::invalid("influence curves and fit have different jump grids"));
    }
    if grid.is_empty() {
        warn!("no jumps: multiplier p-values set to 1");
        return Ok(MultiplierTests {
            p_null_d: 1.0,
            p_null_z: 1.0,
            p_gof: 1.0,
            stat_null_d: 0.0,
            stat_null_z: 0.0,
            stat_gof: 0.0,
            replicates,
        });
    }
    let n = curves.subjects();
    let root_n = (n as f64).sqrt();
    let values = fit.curve.values();
    let beta_d = fit.beta[0];

    let observed = [
        numerical_zero(
            values.iter().map(|v| root_n * v[0].abs()),
            values.iter().map(|v| root_n * v[0].abs()),
        ),
        numerical_zero(
            values.iter().map(|v| root_n * v[1].abs()),
            values.iter().map(|v| root_n * v[1].abs()),
        ),
        numerical_zero(
            grid.iter().zip(values).map(|(t, v)| root_n * (v[0] - beta_d * t).abs()),
            values.iter().map(|v| root_n * v[0].abs()),
        ),
    ];

    // Columns: D curve, Z curve, D curve minus t times the β_D term.
    let eps_d = curves.component(0);
    let eps_z = curves.component(1);
    let eps_beta = curves.beta_component(0);
    let mut gof = eps_d.to_owned();
    for (k, &t) in grid.iter().enumerate() {
        let mut row = gof.row_mut(k);
        for (x, b) in row.iter_mut().zip(eps_beta) {
            *x -= t * b;
        }
    }

    let mut exceed = [0usize; 3];
    let mut done = 0;
    while done < replicates {
        let size = BLOCK.min(replicates - done);
        let mut xi = Array2::<f64>::zeros((size, n));
        for b in 0..size {
            let mut rng = substream(seed, (done + b) as u64);
            let mut row = xi.row_mut(b);
            for &i in curves.order() {
                row[i] = rng.sample(StandardNormal);
            }
        }
        for (c, eps) in [eps_d, eps_z, gof.view()].into_iter().enumerate() {
            let g = xi.dot(&eps.t());
            for row in g.axis_iter(Axis(0)) {
                let sup = row.iter().fold(0.0f64, |m, x| m.max(x.abs())) / root_n;
                if sup >= observed[c] {
                    exceed[c] += 1;
                }
            }
        }
        done += size;
    }
    let p = |e: usize| (1 + e) as f64 / (replicates + 1) as f64;
    Ok(MultiplierTests {
        p_null_d: p(exceed[0]),
        p_null_z: p(exceed[1]),
        p_gof: p(exceed[2]),
        stat_null_d: observed[0],
        stat_null_z: observed[1],
        stat_gof: observed[2],
        replicates,
    })
}

/// Supremum of `values`, with round-off relative to `scale` mapped to 0.
fn numerical_zero(values: impl Iterator<Item = f64>, scale: impl Iterator<Item = f64>) -> f64 {
    let sup = values.fold(0.0f64, f64::max);
    let scale = scale.fold(1.0f64, f64::max);
    if sup <= 1e-12 * scale {
        0.0
    } else {
        sup
    }
}
