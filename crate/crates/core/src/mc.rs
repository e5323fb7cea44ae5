//! Replicated simulation studies: bias, Monte Carlo spread, average
//! estimated standard error and coverage for each estimator.

use std::fmt::{self, Write as _};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorKind, FitOptions};
use crate::inference::{
    influence_curves, multiplier_tests, normal_critical_value, se_bootstrap, InfluenceCurves, SeMethod,
};
use crate::par::par_map;
use crate::rng::derive_seed;
use crate::simulation::{resolve_censor_hazard, simulate_with_hazard, DgmConfig, Truth};

pub const TARGET_TIMES: [f64; 3] = [1.0, 2.0, 3.0];

/// A scalar summary of a fitted curve: `B_c(t)` or `beta_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// 0 for the treatment effect, 1 for the direct arm effect.
    pub coordinate: usize,
    /// Evaluation time; `None` for the constant effect.
    pub at: Option<f64>,
}

impl Target {
    pub fn for_estimator(kind: EstimatorKind) -> Vec<Target> {
        (0..kind.dimension())
            .flat_map(|coordinate| {
                TARGET_TIMES
                    .iter()
                    .map(move |&t| Target {
                        coordinate,
                        at: Some(t),
                    })
                    .chain(std::iter::once(Target { coordinate, at: None }))
            })
            .collect()
    }

    pub fn truth(&self, truth: &Truth) -> f64 {
        let slope = [truth.slope_d, truth.slope_z][self.coordinate];
        match self.at {
            Some(t) => slope * t,
            None => slope,
        }
    }

    pub fn label(&self) -> String {
        let c = ["D", "Z"][self.coordinate];
        match self.at {
            Some(t) => format!("B_{c}({t})"),
            None => format!("beta_{c}"),
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown target '{label}'"));
        let coordinate_of = |c: &str| match c {
            "D" => Ok(0),
            "Z" => Ok(1),
            _ => Err(bad()),
        };
        if let Some(c) = label.strip_prefix("beta_") {
            return Ok(Target {
                coordinate: coordinate_of(c)?,
                at: None,
            });
        }
        let rest = label.strip_prefix("B_").ok_or_else(bad)?;
        let (c, t) = rest.split_once('(').ok_or_else(bad)?;
        let t: f64 = t.strip_suffix(')').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Ok(Target {
            coordinate: coordinate_of(c)?,
            at: Some(t),
        })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgm: DgmConfig,
    pub replicates: usize,
    pub estimators: Vec<EstimatorKind>,
    pub se_method: SeMethod,
    pub bootstrap_replicates: usize,
    /// Multiplier draws per replicate for the supremum tests; `None` skips them.
    pub multiplier_replicates: Option<usize>,
    pub fit: FitOptions,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(dgm: DgmConfig, replicates: usize, seed: u64) -> Self {
        Self {
            dgm,
            replicates,
            estimators: vec![EstimatorKind::Robust, EstimatorKind::Ytt],
            se_method: SeMethod::Influence,
            bootstrap_replicates: 200,
            multiplier_replicates: None,
            fit: FitOptions::default(),
            seed,
        }
    }
}

/// One estimator on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    /// Point estimates and standard errors, aligned with the estimator's targets.
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// `[p_null_D, p_null_Z, p_gof]` when the tests were requested.
    pub p_values: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub censoring_fraction: f64,
    pub switching_fraction: f64,
    /// Per estimator in config order; `Err` holds the failure message.
    pub fits: Vec<std::result::Result<ReplicateFit, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: EstimatorKind,
    pub target: String,
    pub bias: f64,
    /// Monte Carlo standard deviation of the point estimates.
    pub see: f64,
    /// Mean estimated standard error.
    pub sd: f64,
    /// Fraction of 95% intervals covering the truth.
    pub cp: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRates {
    pub estimator: EstimatorKind,
    /// Fraction of successful replicates with p < 0.05, `[null_D, null_Z, gof]`.
    pub at_5pct: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub truth: Truth,
    pub censor_hazard: f64,
    pub mean_censoring_fraction: f64,
    pub mean_switching_fraction: f64,
    pub rows: Vec<MetricRow>,
    pub rejection: Vec<RejectionRates>,
    pub outcomes: Vec<ReplicateOutcome>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl StudyReport {
    pub fn row(&self, estimator: EstimatorKind, target: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.target == target)
    }

    pub fn failures(&self, estimator: EstimatorKind) -> usize {
        let Some(e) = self.config.estimators.iter().position(|&k| k == estimator) else {
            return 0;
        };
        self.outcomes.iter().filter(|o| o.fits[e].is_err()).count()
    }
}

fn analyse(data: &crate::model::Dataset, kind: EstimatorKind, cfg: &StudyConfig, seed: u64) -> Result<ReplicateFit> {
    let f = fit(data, kind, &cfg.fit)?;
    let targets = Target::for_estimator(kind);
    let estimates = targets
        .iter()
        .map(|t| match t.at {
            Some(at) => f.curve.evaluate(at)[t.coordinate],
            None => f.beta[t.coordinate],
        })
        .collect();
    let curves: Option<InfluenceCurves> = match (cfg.se_method, cfg.multiplier_replicates) {
        (SeMethod::Bootstrap, None) => None,
        _ => Some(influence_curves(data, &f)?),
    };
    let (se_curve, se_beta) = match cfg.se_method {
        SeMethod::Influence => {
            let c = curves.as_ref().expect("influence curves computed");
            (c.se_curve(), c.se_beta())
        }
        SeMethod::Bootstrap => {
            let b = se_bootstrap(data, kind, &cfg.fit, cfg.bootstrap_replicates, derive_seed(seed, 0))?;
            (b.se_curve, b.se_beta)
        }
    };
    let standard_errors = targets
        .iter()
        .map(|t| match t.at {
            Some(at) => f.curve.index_at(at).map_or(0.0, |k| se_curve[k][t.coordinate]),
            None => se_beta[t.coordinate],
        })
        .collect();
    let p_values = match (cfg.multiplier_replicates, curves.as_ref()) {
        (Some(g), Some(c)) => {
            let m = multiplier_tests(c, &f, g, derive_seed(seed, 1))?;
            Some([m.p_null_d, m.p_null_z, m.p_gof])
        }
        _ => None,
    };
    Ok(ReplicateFit {
        estimates,
        standard_errors,
        p_values,
    })
}

/// Runs `cfg.replicates` independent simulated trials. Replicate `r` draws its
/// data and resampling randomness from seeds derived from `(cfg.seed, r)`, so
/// the first `r` replicates of a larger study equal a study of size `r`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replicates < 2 {
        return Err(Error::invalid(format!(
            "a study needs at least 2 replicates, got {}",
            cfg.replicates
        )));
    }
    cfg.dgm.validate()?;
    let start = Timer::start();
    let (hazard, calibration_warning) = resolve_censor_hazard(&cfg.dgm)?;
    let truth = cfg.dgm.truth();

    let outcomes: Vec<ReplicateOutcome> = par_map(cfg.replicates, |r| {
        let rep_seed = derive_seed(cfg.seed, r as u64);
        let mut dgm = cfg.dgm.clone();
        dgm.seed = derive_seed(rep_seed, 0);
        match simulate_with_hazard(&dgm, hazard, Vec::new()) {
            Ok(trial) => ReplicateOutcome {
                index: r,
                censoring_fraction: trial.truth.censoring_fraction,
                switching_fraction: trial.truth.switching_fraction,
                fits: cfg
                    .estimators
                    .iter()
                    .enumerate()
                    .map(|(e, &kind)| {
                        analyse(&trial.dataset, kind, cfg, derive_seed(rep_seed, 1 + e as u64))
                            .map_err(|err| err.to_string())
                    })
                    .collect(),
            },
            Err(err) => ReplicateOutcome {
                index: r,
                censoring_fraction: f64::NAN,
                switching_fraction: f64::NAN,
                fits: cfg.estimators.iter().map(|_| Err(err.to_string())).collect(),
            },
        }
    });

    let mut warnings: Vec<String> = calibration_warning.into_iter().collect();
    let mut rows = Vec::new();
    let mut rejection = Vec::new();
    let z = normal_critical_value(0.95)?;
    for (e, &kind) in cfg.estimators.iter().enumerate() {
        let ok: Vec<&ReplicateFit> = outcomes.iter().filter_map(|o| o.fits[e].as_ref().ok()).collect();
        let failures = cfg.replicates - ok.len();
        if failures * 100 > cfg.replicates {
            let msg = format!(
                "{kind}: {failures} of {} replicates failed ({:.1}%) and are excluded",
                cfg.replicates,
                100.0 * failures as f64 / cfg.replicates as f64
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        for (j, target) in Target::for_estimator(kind).iter().enumerate() {
            let truth_value = target.truth(&truth);
            let est: Vec<f64> = ok.iter().map(|f| f.estimates[j]).collect();
            let se: Vec<f64> = ok.iter().map(|f| f.standard_errors[j]).collect();
            let count = est.len() as f64;
            let (bias, see, sd, cp) = if est.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let bias = est.iter().sum::<f64>() / count - truth_value;
                let see = crate::inference::sample_sd(est.iter().copied());
                let sd = se.iter().sum::<f64>() / count;
                let covered = est
                    .iter()
                    .zip(&se)
                    .filter(|(b, s)| (*b - truth_value).abs() <= z * *s)
                    .count();
                (bias, see, sd, covered as f64 / count)
            };
            rows.push(MetricRow {
                estimator: kind,
                target: target.label(),
                bias,
                see,
                sd,
                cp,
                n: cfg.dgm.n,
                replicates: cfg.replicates,
                seed: cfg.seed,
                failures,
            });
        }
        if cfg.multiplier_replicates.is_some() {
            let with_p: Vec<[f64; 3]> = ok.iter().filter_map(|f| f.p_values).collect();
            let count = with_p.len().max(1) as f64;
            rejection.push(RejectionRates {
                estimator: kind,
                at_5pct: [0, 1, 2].map(|c| with_p.iter().filter(|p| p[c] < 0.05).count() as f64 / count),
            });
        }
    }
    let finite = |f: fn(&ReplicateOutcome) -> f64| {
        let v: Vec<f64> = outcomes.iter().map(f).filter(|x| x.is_finite()).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    Ok(StudyReport {
        config: cfg.clone(),
        truth,
        censor_hazard: hazard,
        mean_censoring_fraction: finite(|o| o.censoring_fraction),
        mean_switching_fraction: finite(|o| o.switching_fraction),
        rows,
        rejection,
        outcomes,
        warnings,
        runtime_seconds: start.seconds(),
    })
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "estimator",
    "target",
    "bias",
    "see",
    "sd",
    "cp",
    "n",
    "R",
    "seed",
    "failures",
];

/// Machine-readable metrics, one row per estimator and target.
pub fn report_csv(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.estimator.to_string(),
            r.target.clone(),
            float17(r.bias),
            float17(r.see),
            float17(r.sd),
            float17(r.cp),
            r.n.to_string(),
            r.replicates.to_string(),
            r.seed.to_string(),
            r.failures.to_string(),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_CSV_HEADER {
        return Err(Error::invalid(format!("unexpected report header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let field = |c: usize| -> Result<&str> {
            record
                .get(c)
                .ok_or_else(|| Error::invalid(format!("report row {} lacks column {}", line + 2, REPORT_CSV_HEADER[c])))
        };
        let num = |c: usize| -> Result<f64> {
            field(c)?.parse().map_err(|_| {
                Error::invalid(format!(
                    "report row {} column {}: not a number",
                    line + 2,
                    REPORT_CSV_HEADER[c]
                ))
            })
        };
        let int = |c: usize| -> Result<u64> {
            field(c)?.parse().map_err(|_| {
                Error::invalid(format!(
                    "report row {} column {}: not an integer",
                    line + 2,
                    REPORT_CSV_HEADER[c]
                ))
            })
        };
        rows.push(MetricRow {
            estimator: field(0)?.parse()?,
            target: field(1)?.to_string(),
            bias: num(2)?,
            see: num(3)?,
            sd: num(4)?,
            cp: num(5)?,
            n: int(6)? as usize,
            replicates: int(7)? as usize,
            seed: int(8)?,
            failures: int(9)? as usize,
        });
    }
    Ok(rows)
}

type Metric = (&'static str, fn(&MetricRow) -> f64);

/// Human-readable tables in the layout Bias / SEE / SD / CP by t = 1, 2, 3
/// and beta, for the treatment-effect targets of each estimator.
pub fn report_markdown(rows: &[MetricRow]) -> String {
    let mut out = String::new();
    let mut estimators: Vec<EstimatorKind> = Vec::new();
    for r in rows {
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator);
        }
    }
    let columns: Vec<String> = TARGET_TIMES
        .iter()
        .map(|&t| {
            Target {
                coordinate: 0,
                at: Some(t),
            }
            .label()
        })
        .chain(std::iter::once(
            Target {
                coordinate: 0,
                at: None,
            }
            .label(),
        ))
        .collect();
    let _ = writeln!(out, "| estimator | metric | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---:|".repeat(columns.len()));
    for kind in estimators {
        let metrics: [Metric; 4] = [
            ("Bias", |r| r.bias),
            ("SEE", |r| r.see),
            ("SD", |r| r.sd),
            ("CP", |r| 100.0 * r.cp),
        ];
        for (name, get) in metrics {
            let cells: Vec<String> = columns
                .iter()
                .map(|c| {
                    rows.iter()
                        .find(|r| r.estimator == kind && &r.target == c)
                        .map_or_else(|| "-".to_string(), |r| format!("{:.4}", get(r)))
                })
                .collect();
            let _ = writeln!(out, "| {kind} | {name} | {} |", cells.join(" | "));
        }
    }
    out
}

/// `(csv, markdown)` renderings of a report's metrics.
pub fn summarize(report: &StudyReport) -> Result<(String, String)> {
    Ok((report_csv(&report.rows)?, report_markdown(&report.rows)))
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// Wall-clock timer; reads zero where the platform has no clock.
struct Timer(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Timer {
    fn start() -> Self {
        Timer(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}
