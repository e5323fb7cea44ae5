//! Trial data types and the counting-process primitives shared by the
//! estimators, the simulator and the I/O layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant binary treatment trajectory.
///
/// The value in force at time `t` is the value of the last switch at or
/// before `t` (right-continuous), or `initial` when no switch has happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPath {
    initial: bool,
    switches: Vec<(f64, bool)>,
}

impl TreatmentPath {
    pub fn new(initial: bool, switches: Vec<(f64, bool)>) -> Result<Self> {
        let mut prev_time = 0.0;
        let mut prev_value = initial;
        for (k, &(time, value)) in switches.iter().enumerate() {
            if !time.is_finite() || time <= prev_time {
                return Err(Error::invalid(format!(
                    "switch {k} at time {time} must be finite and strictly after {prev_time}"
                )));
            }
            if value == prev_value {
                return Err(Error::invalid(format!(
                    "switch {k} at time {time} does not change the treatment value"
                )));
            }
            prev_time = time;
            prev_value = value;
        }
        Ok(Self { initial, switches })
    }

    pub fn constant(value: bool) -> Self {
        Self {
            initial: value,
            switches: Vec::new(),
        }
    }

    pub fn initial(&self) -> bool {
        self.initial
    }

    pub fn switches(&self) -> &[(f64, bool)] {
        &self.switches
    }

    /// Recorded value at `t`, ignoring follow-up.
    pub fn value_at(&self, t: f64) -> bool {
        let idx = self.switches.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            self.initial
        } else {
            self.switches[idx - 1].1
        }
    }

    /// Constant pieces `(start, end, value)` covering `[0, horizon)`.
    pub fn pieces(&self, horizon: f64) -> Vec<(f64, f64, bool)> {
        let mut out = Vec::with_capacity(self.switches.len() + 1);
        let mut start = 0.0;
        let mut value = self.initial;
        for &(s, v) in &self.switches {
            if s >= horizon {
                break;
            }
            out.push((start, s, value));
            start = s;
            value = v;
        }
        out.push((start, horizon, value));
        out
    }
}

/// One trial participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub followup: f64,
    pub event: bool,
    pub arm: bool,
    pub path: TreatmentPath,
}

impl Subject {
    pub fn new(id: impl Into<String>, followup: f64, event: bool, arm: bool, path: TreatmentPath) -> Result<Self> {
        let id = id.into();
        if !followup.is_finite() || followup <= 0.0 {
            return Err(Error::invalid(format!(
                "subject {id}: follow-up {followup} must be finite and positive"
            )));
        }
        Ok(Self {
            id,
            followup,
            event,
            arm,
            path,
        })
    }

    /// Treatment value used by the estimators: the recorded value while under
    /// observation and 0 after follow-up ends.
    #[inline]
    pub fn effective_treatment(&self, t: f64) -> bool {
        t <= self.followup && self.path.value_at(t)
    }

    /// `(Y(t), dN(t))`: at risk at `t`, and observed event exactly at `t`.
    #[inline]
    pub fn risk_event_state(&self, t: f64) -> (bool, bool) {
        let at_risk = self.followup >= t;
        (at_risk, self.event && self.followup == t)
    }

    pub(crate) fn arm_f64(&self) -> f64 {
        if self.arm {
            1.0
        } else {
            0.0
        }
    }
}

/// Free-function form of [`Subject::effective_treatment`].
pub fn effective_treatment(subject: &Subject, t: f64) -> bool {
    subject.effective_treatment(t)
}

/// Free-function form of [`Subject::risk_event_state`].
pub fn risk_event_state(subject: &Subject, t: f64) -> (bool, bool) {
    subject.risk_event_state(t)
}

/// A validated analysis dataset with horizon `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    tau: f64,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, tau: f64) -> Result<Self> {
        if subjects.len() < 2 {
            return Err(Error::invalid(format!(
                "dataset needs at least 2 subjects, got {}",
                subjects.len()
            )));
        }
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::invalid(format!("tau = {tau} must be finite and positive")));
        }
        let treated = subjects.iter().filter(|s| s.arm).count();
        if treated == 0 || treated == subjects.len() {
            return Err(Error::Identification(format!(
                "both randomized arms must be present ({treated} of {} subjects in arm 1)",
                subjects.len()
            )));
        }
        Ok(Self { subjects, tau })
    }

    /// Horizon defaults to the largest follow-up time.
    pub fn with_default_tau(subjects: Vec<Subject>) -> Result<Self> {
        let tau = subjects.iter().map(|s| s.followup).fold(0.0, f64::max);
        Self::new(subjects, tau)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.subjects.clone(), tau)
    }

    /// Distinct observed event times in `(0, tau]`, ascending.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .subjects
            .iter()
            .filter(|s| s.event && s.followup <= self.tau)
            .map(|s| s.followup)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

/// Pure-jump cumulative effect `t -> (B_D(t), B_Z(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeEffect {
    jump_times: Vec<f64>,
    increments: Vec<[f64; 2]>,
    dimension: usize,
    #[serde(skip)]
    cumulative: Vec<[f64; 2]>,
}

impl CumulativeEffect {
    pub fn new(jump_times: Vec<f64>, increments: Vec<[f64; 2]>, dimension: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dimension}")));
        }
        if jump_times.len() != increments.len() {
            return Err(Error::invalid(format!(
                "{} jump times but {} increments",
                jump_times.len(),
                increments.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &jump_times {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::invalid(format!(
                    "jump times must be positive and strictly increasing (saw {t} after {prev})"
                )));
            }
            prev = t;
        }
        if dimension == 1 && increments.iter().any(|inc| inc[1] != 0.0) {
            return Err(Error::invalid("one-dimensional effect with a nonzero second slot"));
        }
        let cumulative = prefix_sums(&increments);
        Ok(Self {
            jump_times,
            increments,
            dimension,
            cumulative,
        })
    }

    pub fn zero(dimension: usize) -> Self {
        Self {
            jump_times: Vec::new(),
            increments: Vec::new(),
            dimension,
            cumulative: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn increments(&self) -> &[[f64; 2]] {
        &self.increments
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    /// Cumulative values at each jump time.
    pub fn values(&self) -> &[[f64; 2]] {
        &self.cumulative
    }

    /// `B(t)`; right-continuous, zero before the first jump.
    pub fn evaluate(&self, t: f64) -> [f64; 2] {
        match self.index_at(t) {
            Some(k) => self.cumulative[k],
            None => [0.0, 0.0],
        }
    }

    /// Index of the last jump at or before `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let idx = self.jump_times.partition_point(|&s| s <= t);
        idx.checked_sub(1)
    }

    /// Rebuilds the cached cumulative sums after deserialization.
    pub fn rebuild(mut self) -> Self {
        self.cumulative = prefix_sums(&self.increments);
        self
    }
}

fn prefix_sums(increments: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut acc = [0.0, 0.0];
    increments
        .iter()
        .map(|inc| {
            acc[0] += inc[0];
            acc[1] += inc[1];
            acc
        })
        .collect()
}

/// Free-function form of [`CumulativeEffect::evaluate`].
pub fn evaluate_step(curve: &CumulativeEffect, t: f64) -> [f64; 2] {
    curve.evaluate(t)
}
