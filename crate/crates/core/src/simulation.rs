//! Synthetic open-label trials with treatment switching and a direct
//! effect of the randomized arm.
//!
//! Each subject carries a bivariate normal confounder `U = (U1, U2)`. `U1`
//! drives the switching time, `U2` the event hazard
//! `0.1 + slope_d D(t) + slope_z Z + 0.15 U2`. Switching times live on a
//! grid; event times are continuous.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Subject, TreatmentPath};
use crate::par::par_map;
use crate::rng::{substream, StreamRng};

pub const U_MEAN: [f64; 2] = [1.5, 1.5];
/// Cholesky factor of `[[1/4, -1/6], [-1/6, 1/4]]`.
pub const U_CHOLESKY: [[f64; 2]; 2] = [[0.5, 0.0], [-1.0 / 3.0, 0.372_677_996_249_964_9]];
pub const HAZARD_FLOOR: f64 = 1e-6;
const BASE_HAZARD: f64 = 0.1;
const U2_HAZARD: f64 = 0.15;
/// Switch-time search horizon when there is no administrative cutoff.
const OPEN_SWITCH_HORIZON: f64 = 100.0;
const CALIBRATION_TOL: f64 = 0.005;
const CALIBRATION_SEED: u64 = 0x5EED_CA1B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Switching survival as published, repaired into a valid survival function.
    Paper,
    /// Switching survival that satisfies the no-interaction constraints without repair.
    Valid,
    /// `Valid` switching with no treatment or arm effect on the hazard.
    Null,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Paper => "paper",
            Variant::Valid => "valid",
            Variant::Null => "null",
        }
    }

    pub fn truth(self) -> Truth {
        match self {
            Variant::Paper | Variant::Valid => Truth {
                slope_d: 0.2,
                slope_z: 0.1,
            },
            Variant::Null => Truth {
                slope_d: 0.0,
                slope_z: 0.0,
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Variant::Paper),
            "valid" => Ok(Variant::Valid),
            "null" => Ok(Variant::Null),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }
}

/// True cumulative effects `B_D(t) = slope_d t`, `B_Z(t) = slope_z t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub slope_d: f64,
    pub slope_z: f64,
}

impl Truth {
    pub fn at(&self, t: f64) -> [f64; 2] {
        [self.slope_d * t, self.slope_z * t]
    }

    pub fn hazard(&self, d: bool, z: bool, u2: f64) -> f64 {
        let h = BASE_HAZARD + if d { self.slope_d } else { 0.0 } + if z { self.slope_z } else { 0.0 } + U2_HAZARD * u2;
        h.max(HAZARD_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmConfig {
    pub n: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub tau_admin: f64,
    pub censor_rate_target: f64,
    pub variant: Variant,
    /// Exponential censoring hazard; calibrated to `censor_rate_target` when absent.
    pub censor_hazard: Option<f64>,
    pub pilot_n: usize,
}

impl DgmConfig {
    pub fn new(n: usize, seed: u64, variant: Variant) -> Self {
        Self {
            n,
            seed,
            grid_step: 0.1,
            tau_admin: 3.0,
            censor_rate_target: 0.18,
            variant,
            censor_hazard: None,
            pilot_n: 100_000,
        }
    }

    pub fn truth(&self) -> Truth {
        self.variant.truth()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("n = {} must be at least 2", self.n)));
        }
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::invalid(format!("grid_step {} must be positive", self.grid_step)));
        }
        if !(self.tau_admin > 0.0) {
            return Err(Error::invalid(format!("tau_admin {} must be positive", self.tau_admin)));
        }
        if !(0.0..1.0).contains(&self.censor_rate_target) {
            return Err(Error::invalid(format!(
                "censor_rate_target {} must lie in [0, 1)",
                self.censor_rate_target
            )));
        }
        if let Some(h) = self.censor_hazard {
            if !(h >= 0.0) || !h.is_finite() {
                return Err(Error::invalid(format!("censor hazard {h} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn switch_horizon(&self) -> f64 {
        if self.tau_admin.is_finite() {
            10.0 * self.tau_admin
        } else {
            OPEN_SWITCH_HORIZON
        }
    }
}

/// Unrepaired `P(W > t | Z, U1)` for the variant.
pub fn switch_survival_raw(variant: Variant, z: bool, u1: f64, t: f64) -> f64 {
    let zf = if z { 1.0 } else { 0.0 };
    match variant {
        Variant::Paper => {
            (-0.5 * t).exp()
                + zf * (1.0 - (-0.05 * t).exp())
                + (2.0 * zf - 1.0) * (1.0 - (-0.05 * t - 0.1 * u1 * t).exp())
        }
        Variant::Valid | Variant::Null => {
            let decay = (-0.05 * t).exp();
            let alpha = 0.3 * decay * (1.0 - (-0.1 * u1 * t).exp());
            let beta0 = (-0.5 * t).exp();
            let beta1 = (1.0 - decay) * decay;
            alpha * (2.0 * zf - 1.0) + beta0 + zf * beta1
        }
    }
}

/// One point of a switching survival curve on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchSurvivalPoint {
    pub t: f64,
    pub raw: f64,
    /// Running minimum of the raw value clamped to `[0, 1]`.
    pub repaired: f64,
}

pub fn switch_survival_curve(
    variant: Variant,
    z: bool,
    u1: f64,
    grid_step: f64,
    horizon: f64,
) -> Vec<SwitchSurvivalPoint> {
    let steps = (horizon / grid_step).floor() as usize;
    let mut running = 1.0f64;
    (0..=steps)
        .map(|g| {
            let t = g as f64 * grid_step;
            let raw = switch_survival_raw(variant, z, u1, t);
            running = running.min(raw.clamp(0.0, 1.0));
            SwitchSurvivalPoint {
                t,
                raw,
                repaired: running,
            }
        })
        .collect()
}

/// Smallest grid point whose repaired survival is `<= u`, or `+inf`.
pub fn switch_time_from_uniform(u: f64, variant: Variant, z: bool, u1: f64, grid_step: f64, horizon: f64) -> f64 {
    let steps = (horizon / grid_step).floor() as usize;
    let mut running = 1.0f64;
    for g in 0..=steps {
        let t = g as f64 * grid_step;
        running = running.min(switch_survival_raw(variant, z, u1, t).clamp(0.0, 1.0));
        if running <= u {
            return t;
        }
    }
    f64::INFINITY
}

pub fn sample_switch_time<R: Rng + ?Sized>(rng: &mut R, z: bool, u1: f64, cfg: &DgmConfig) -> f64 {
    let u: f64 = rng.random();
    switch_time_from_uniform(u, cfg.variant, z, u1, cfg.grid_step, cfg.switch_horizon())
}

/// Time at which the cumulative hazard along `path` reaches `e`.
pub fn event_time_from_exp(e: f64, path: &TreatmentPath, z: bool, u2: f64, truth: &Truth) -> f64 {
    let mut remaining = e;
    for (start, end, d) in path.pieces(f64::INFINITY) {
        let h = truth.hazard(d, z, u2);
        let mass = h * (end - start);
        if remaining <= mass {
            return start + remaining / h;
        }
        remaining -= mass;
    }
    unreachable!("the last piece of a path is unbounded")
}

pub fn sample_event_time<R: Rng + ?Sized>(rng: &mut R, path: &TreatmentPath, z: bool, u2: f64, truth: &Truth) -> f64 {
    loop {
        let e: f64 = rng.sample(Exp1);
        if e > 0.0 {
            return event_time_from_exp(e, path, z, u2, truth);
        }
    }
}

pub fn sample_confounder<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    [
        U_MEAN[0] + U_CHOLESKY[0][0] * a,
        U_MEAN[1] + U_CHOLESKY[1][0] * a + U_CHOLESKY[1][1] * b,
    ]
}

/// Latent draws of one subject before censoring is applied.
#[derive(Debug, Clone, Copy)]
struct Latent {
    arm: bool,
    switch_time: f64,
    event_time: f64,
    censor_exp: f64,
}

fn draw_latent(rng: &mut StreamRng, cfg: &DgmConfig) -> Latent {
    let u = sample_confounder(rng);
    let arm = rng.random::<f64>() < 0.5;
    let switch_time = sample_switch_time(rng, arm, u[0], cfg);
    let path = generative_path(arm, switch_time);
    let event_time = sample_event_time(rng, &path, arm, u[1], &cfg.truth());
    let censor_exp: f64 = rng.sample(Exp1);
    Latent {
        arm,
        switch_time,
        event_time,
        censor_exp,
    }
}

/// Treatment equals the arm before the switch and the other arm from it on.
fn generative_path(arm: bool, switch_time: f64) -> TreatmentPath {
    if switch_time == 0.0 {
        TreatmentPath::constant(!arm)
    } else if switch_time.is_finite() {
        TreatmentPath::new(arm, vec![(switch_time, !arm)]).expect("single switch is valid")
    } else {
        TreatmentPath::constant(arm)
    }
}

fn censor_time(censor_exp: f64, hazard: f64, tau_admin: f64) -> f64 {
    let c = if hazard > 0.0 {
        censor_exp / hazard
    } else {
        f64::INFINITY
    };
    c.min(tau_admin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringCalibration {
    pub hazard: f64,
    pub achieved_rate: f64,
    pub warning: Option<String>,
}

/// Bisection for the exponential censoring hazard that yields the target
/// censored fraction on a pilot sample.
pub fn calibrate_censoring(cfg: &DgmConfig, pilot_n: usize, seed: u64) -> Result<CensoringCalibration> {
    cfg.validate()?;
    if pilot_n < 10_000 {
        return Err(Error::invalid(format!("pilot_n = {pilot_n} must be at least 10^4")));
    }
    let pilot: Vec<Latent> = par_map(pilot_n, |i| draw_latent(&mut substream(seed, i as u64), cfg));
    let rate = |hazard: f64| {
        let censored = pilot
            .iter()
            .filter(|l| l.event_time > censor_time(l.censor_exp, hazard, cfg.tau_admin))
            .count();
        censored as f64 / pilot_n as f64
    };
    let target = cfg.censor_rate_target;
    let base = rate(0.0);
    if base >= target - CALIBRATION_TOL {
        let warning = (base > target + CALIBRATION_TOL).then(|| {
            format!(
                "censoring target {target} unreachable: administrative cutoff alone censors {base:.4}; using hazard 0"
            )
        });
        if let Some(w) = &warning {
            warn!("{w}");
        }
        return Ok(CensoringCalibration {
            hazard: 0.0,
            achieved_rate: base,
            warning,
        });
    }
    let mut lo = 0.0;
    let mut hi = 0.01;
    while rate(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::invalid(format!("censoring target {target} not reachable")));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CensoringCalibration {
        hazard: hi,
        achieved_rate: rate(hi),
        warning: None,
    })
}

/// Truth and realized rates attached to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetadata {
    pub variant: Variant,
    pub slope_d: f64,
    pub slope_z: f64,
    pub n: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub tau_admin: f64,
    pub censor_hazard: f64,
    pub censoring_fraction: f64,
    pub switching_fraction: f64,
    pub switch_survival_repair: String,
    pub warnings: Vec<String>,
}

impl TruthMetadata {
    pub fn truth(&self) -> Truth {
        Truth {
            slope_d: self.slope_d,
            slope_z: self.slope_z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub dataset: Dataset,
    pub truth: TruthMetadata,
}

/// Resolves the censoring hazard, calibrating when the config does not fix it.
pub fn resolve_censor_hazard(cfg: &DgmConfig) -> Result<(f64, Option<String>)> {
    match cfg.censor_hazard {
        Some(h) => Ok((h, None)),
        None => {
            let cal = calibrate_censoring(cfg, cfg.pilot_n, CALIBRATION_SEED)?;
            Ok((cal.hazard, cal.warning))
        }
    }
}

pub fn simulate_trial(cfg: &DgmConfig) -> Result<SimulatedTrial> {
    cfg.validate()?;
    let (hazard, warning) = resolve_censor_hazard(cfg)?;
    simulate_with_hazard(cfg, hazard, warning.into_iter().collect())
}

pub(crate) fn simulate_with_hazard(cfg: &DgmConfig, hazard: f64, mut warnings: Vec<String>) -> Result<SimulatedTrial> {
    let draws: Vec<(Subject, bool)> = par_map(cfg.n, |i| {
        let latent = draw_latent(&mut substream(cfg.seed, i as u64), cfg);
        let c = censor_time(latent.censor_exp, hazard, cfg.tau_admin);
        let followup = latent.event_time.min(c);
        let event = latent.event_time <= c;
        let observed_switch = latent.switch_time <= followup;
        let path = if observed_switch {
            generative_path(latent.arm, latent.switch_time)
        } else {
            TreatmentPath::constant(latent.arm)
        };
        let subject = Subject::new((i + 1).to_string(), followup, event, latent.arm, path)
            .expect("simulated follow-up is positive and finite");
        (subject, observed_switch)
    });
    let n = draws.len() as f64;
    let censoring_fraction = draws.iter().filter(|(s, _)| !s.event).count() as f64 / n;
    let switching_fraction = draws.iter().filter(|(_, sw)| *sw).count() as f64 / n;
    let subjects: Vec<Subject> = draws.into_iter().map(|(s, _)| s).collect();
    let dataset = Dataset::with_default_tau(subjects)?;
    if cfg.variant == Variant::Paper {
        warnings.push("switching survival clamped to [0, 1] and made non-increasing by a running minimum".to_string());
    }
    let truth = cfg.truth();
    Ok(SimulatedTrial {
        dataset,
        truth: TruthMetadata {
            variant: cfg.variant,
            slope_d: truth.slope_d,
            slope_z: truth.slope_z,
            n: cfg.n,
            seed: cfg.seed,
            grid_step: cfg.grid_step,
            tau_admin: cfg.tau_admin,
            censor_hazard: hazard,
            censoring_fraction,
            switching_fraction,
            switch_survival_repair: "clamp-to-unit-interval+running-minimum".to_string(),
            warnings,
        },
    })
}
