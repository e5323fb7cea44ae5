use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorKind, FitOptions};
use crate::model::Dataset;
use crate::par::par_map;
use crate::rng::substream;

pub const MIN_BOOTSTRAP_REPLICATES: usize = 100;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe {
    /// Jump times of the fit on the original data.
    pub grid: Vec<f64>,
    pub se_curve: Vec<[f64; 2]>,
    pub se_beta: [f64; 2],
    pub replicates: usize,
    /// Resamples discarded because one arm was empty.
    pub redraws: usize,
    /// Replicates whose refit failed and were left out of the SEs.
    pub failures: usize,
    pub warnings: Vec<String>,
}

struct Replicate {
    curve: Option<(Vec<[f64; 2]>, [f64; 2])>,
    redraws: usize,
}

/// Nonparametric bootstrap: resample subjects with replacement, refit, and
/// take the sample standard deviation of the refits on the original jump grid.
pub fn se_bootstrap(
    data: &Dataset,
    kind: EstimatorKind,
    opts: &FitOptions,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSe> {
    if replicates < MIN_BOOTSTRAP_REPLICATES {
        return Err(Error::invalid(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATES} replicates, got {replicates}"
        )));
    }
    let grid = data.event_times();
    let subjects = data.subjects();
    let n = subjects.len();
    let draws: Vec<Replicate> = par_map(replicates, |b| {
        let mut rng = substream(seed, b as u64);
        let mut redraws = 0;
        let sample = loop {
            let picked: Vec<_> = (0..n).map(|_| subjects[rng.random_range(0..n)].clone()).collect();
            let treated = picked.iter().filter(|s| s.arm).count();
            if treated > 0 && treated < n {
                break Some(picked);
            }
            redraws += 1;
            if redraws >= MAX_REDRAWS {
                break None;
            }
        };
        let curve = sample
            .and_then(|picked| Dataset::new(picked, data.tau()).ok())
            .and_then(|d| fit(&d, kind, opts).ok())
            .map(|f| (grid.iter().map(|&t| f.curve.evaluate(t)).collect(), f.beta));
        Replicate { curve, redraws }
    });

    let redraws: usize = draws.iter().map(|d| d.redraws).sum();
    let ok: Vec<&(Vec<[f64; 2]>, [f64; 2])> = draws.iter().filter_map(|d| d.curve.as_ref()).collect();
    let failures = replicates - ok.len();
    let mut warnings = Vec::new();
    if redraws * 10 > replicates {
        warnings.push(format!("{redraws} bootstrap resamples redrawn for an empty arm"));
    }
    if failures > 0 {
        warnings.push(format!(
            "{failures} of {replicates} bootstrap refits failed and were excluded"
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    if ok.len() < 2 {
        return Err(Error::NumericFailure {
            jump: 0,
            message: format!("only {} bootstrap refits succeeded", ok.len()),
        });
    }
    let se_curve = (0..grid.len())
        .map(|k| [0, 1].map(|c| sample_sd(ok.iter().map(|(curve, _)| curve[k][c]))))
        .collect();
    let se_beta = [0, 1].map(|c| sample_sd(ok.iter().map(|(_, beta)| beta[c])));
    Ok(BootstrapSe {
        grid,
        se_curve,
        se_beta,
        replicates,
        redraws,
        failures,
        warnings,
    })
}

pub(crate) fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let count = values.clone().count();
    if count < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / count as f64;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    (ss / (count - 1) as f64).sqrt()
}
