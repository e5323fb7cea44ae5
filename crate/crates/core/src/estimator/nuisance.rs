use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Population over which `E_n{D(t) | Z}` is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringPopulation {
    /// Subjects in the arm still at risk at `t`, weighted by their current
    /// survivor weight `W(t-)`.
    #[default]
    SurvivorWeighted,
    /// Every subject in the arm, with treatment set to 0 after follow-up ends.
    AllSubjects,
    /// Subjects in the arm still at risk at `t`, unweighted.
    AtRisk,
}

impl CenteringPopulation {
    pub fn as_str(self) -> &'static str {
        match self {
            CenteringPopulation::SurvivorWeighted => "survivor-weighted",
            CenteringPopulation::AllSubjects => "all-subjects",
            CenteringPopulation::AtRisk => "at-risk",
        }
    }
}

impl std::fmt::Display for CenteringPopulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CenteringPopulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "survivor-weighted" => Ok(CenteringPopulation::SurvivorWeighted),
            "all-subjects" => Ok(CenteringPopulation::AllSubjects),
            "at-risk" => Ok(CenteringPopulation::AtRisk),
            other => Err(Error::invalid(format!("unknown centering population '{other}'"))),
        }
    }
}

/// Empirical centering terms `Z^c` and `E_n{D(t) | Z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredNuisances {
    pub z_mean: f64,
    pub zc: Vec<f64>,
    times: Vec<f64>,
    /// `d_mean[k][arm]` at `times[k]`.
    d_mean: Vec<[f64; 2]>,
}

impl CenteredNuisances {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Arm-specific mean treatment at one of the centering times.
    pub fn d_mean_by_arm(&self, t: f64, arm: bool) -> Option<f64> {
        let k = self.times.binary_search_by(|s| s.total_cmp(&t)).ok()?;
        Some(self.d_mean[k][arm as usize])
    }

    pub fn d_mean_at(&self, k: usize) -> [f64; 2] {
        self.d_mean[k]
    }

    pub(crate) fn set_d_mean(&mut self, k: usize, value: [f64; 2]) {
        self.d_mean[k] = value;
    }
}

/// Subject indices ordered by follow-up, so the risk set at `t` is a suffix.
#[derive(Debug, Clone)]
pub(crate) struct RiskOrder {
    pub order: Vec<usize>,
    pub followup: Vec<f64>,
}

impl RiskOrder {
    pub fn new(data: &Dataset) -> Self {
        let subjects = data.subjects();
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        order.sort_by(|&a, &b| subjects[a].followup.total_cmp(&subjects[b].followup).then(a.cmp(&b)));
        let followup = order.iter().map(|&i| subjects[i].followup).collect();
        Self { order, followup }
    }

    /// Subjects with follow-up `>= t`.
    pub fn at_risk(&self, t: f64) -> &[usize] {
        let start = self.followup.partition_point(|&x| x < t);
        &self.order[start..]
    }
}

/// Centering terms at the given times.
///
/// `SurvivorWeighted` is evaluated here at unit weights; the fit replaces
/// each time's arm means with the weighted ones as the recursion reaches it.
pub fn center_nuisances(data: &Dataset, times: &[f64], population: CenteringPopulation) -> Result<CenteredNuisances> {
    let subjects = data.subjects();
    let n = subjects.len();
    let arm_counts = subjects.iter().fold([0usize; 2], |mut acc, s| {
        acc[s.arm as usize] += 1;
        acc
    });
    if arm_counts[0] == 0 || arm_counts[1] == 0 {
        return Err(Error::Identification(format!(
            "arm sizes {arm_counts:?}: both arms must be non-empty"
        )));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("centering times must be strictly increasing"));
    }
    let z_mean = arm_counts[1] as f64 / n as f64;
    let zc = subjects.iter().map(|s| s.arm_f64() - z_mean).collect();

    let risk = RiskOrder::new(data);
    let d_mean = times
        .iter()
        .map(|&t| {
            let mut treated = [0usize; 2];
            let mut present = [0usize; 2];
            for &i in risk.at_risk(t) {
                let s = &subjects[i];
                present[s.arm as usize] += 1;
                if s.path.value_at(t) {
                    treated[s.arm as usize] += 1;
                }
            }
            let denom = match population {
                CenteringPopulation::AllSubjects => arm_counts,
                CenteringPopulation::AtRisk | CenteringPopulation::SurvivorWeighted => present,
            };
            [0, 1].map(|a| {
                if denom[a] == 0 {
                    0.0
                } else {
                    treated[a] as f64 / denom[a] as f64
                }
            })
        })
        .collect();

    Ok(CenteredNuisances {
        z_mean,
        zc,
        times: times.to_vec(),
        d_mean,
    })
}
