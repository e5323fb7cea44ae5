//! Shared fixtures: an independent brute-force fitter and small data generators.
#![allow(dead_code)]

use ivscsm::model::{Dataset, Subject, TreatmentPath};
use ivscsm::rng::substream;
use ivscsm::simulation::{sample_confounder, sample_event_time, Variant};
use ivscsm::EstimatorKind;
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::Exp1;

/// Treatment in force at `t` by a direct scan of the recorded switches.
fn treated(s: &Subject, t: f64) -> f64 {
    let mut value = s.path.initial();
    for &(at, v) in s.path.switches() {
        if at <= t {
            value = v;
        }
    }
    f64::from(u8::from(value))
}

fn arm(s: &Subject) -> f64 {
    f64::from(u8::from(s.arm))
}

/// `(t_k, ΔB(t_k))` by direct summation at each jump, survivor-weighted
/// centering, and an SVD pseudo-inverse.
pub fn oracle_fit(data: &Dataset, kind: EstimatorKind, rtol: f64) -> Vec<(f64, [f64; 2])> {
    let subs = data.subjects();
    let n = subs.len() as f64;
    let mut times: Vec<f64> = subs
        .iter()
        .filter(|s| s.event && s.followup <= data.tau())
        .map(|s| s.followup)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let zbar = subs.iter().map(arm).sum::<f64>() / n;
    let robust = kind == EstimatorKind::Robust;

    let mut out: Vec<(f64, [f64; 2])> = Vec::new();
    for &t in &times {
        let weight = |s: &Subject| -> f64 {
            let mut exponent = 0.0;
            for &(u, jump) in &out {
                exponent += treated(s, u) * jump[0] + arm(s) * jump[1];
            }
            exponent.exp()
        };
        let mut num = [0.0; 2];
        let mut den = [0.0; 2];
        for s in subs.iter().filter(|s| s.followup >= t) {
            let a = usize::from(s.arm);
            num[a] += weight(s) * treated(s, t);
            den[a] += weight(s);
        }
        let dbar = [0, 1].map(|a| if den[a] > 0.0 { num[a] / den[a] } else { 0.0 });

        let mut m = Matrix2::<f64>::zeros();
        let mut e = Vector2::<f64>::zeros();
        let mut scale = 0.0;
        for s in subs.iter().filter(|s| s.followup >= t) {
            let zc = arm(s) - zbar;
            let d = treated(s, t);
            let dc = d - dbar[usize::from(s.arm)];
            let w = weight(s);
            let v = if robust {
                Vector2::new(zc, zc * dc)
            } else {
                Vector2::new(zc, 0.0)
            };
            let x = if robust {
                Vector2::new(d, arm(s))
            } else {
                Vector2::new(d, 0.0)
            };
            m += v * x.transpose() * w / n;
            scale += (w * zc * d).abs() / n;
            if s.event && s.followup == t {
                e += v * w / n;
            }
        }
        let jump = if robust {
            let svd = m.svd(true, true);
            let smax = svd.singular_values.max();
            let cut = rtol * smax;
            let mut inv = Matrix2::zeros();
            if smax > 0.0 {
                let u = svd.u.unwrap();
                let vt = svd.v_t.unwrap();
                for r in 0..2 {
                    let sv = svd.singular_values[r];
                    if sv > cut {
                        inv += vt.row(r).transpose() * u.column(r).transpose() / sv;
                    }
                }
            }
            let j = inv * e;
            [j[0], j[1]]
        } else {
            let v = m[(0, 0)];
            let j = if v == 0.0 || v.abs() <= 8.0 * f64::EPSILON * scale {
                0.0
            } else {
                e[0] / v
            };
            [j, 0.0]
        };
        out.push((t, jump));
    }
    out
}

/// Tiny random trial: 2 to 6 subjects, both arms, at most 3 distinct event
/// times, random switching.
pub fn tiny_dataset<R: Rng>(rng: &mut R) -> Dataset {
    let n = rng.random_range(2..=6usize);
    let slots = [0.5, 1.0, 1.5, 2.0, 2.5];
    let mut event_slots: Vec<f64> = Vec::new();
    while event_slots.len() < rng.random_range(0..=3usize) {
        let s = slots[rng.random_range(0..slots.len())] + rng.random_range(0.0..0.4);
        event_slots.push(s);
    }
    let subjects: Vec<Subject> = (0..n)
        .map(|i| {
            let arm = if i < 2 { i == 0 } else { rng.random_bool(0.5) };
            let event = !event_slots.is_empty() && rng.random_bool(0.6);
            let followup = if event {
                event_slots[rng.random_range(0..event_slots.len())]
            } else {
                rng.random_range(0.2..3.0)
            };
            let initial = if rng.random_bool(0.8) { arm } else { !arm };
            let mut switches = Vec::new();
            let mut t = 0.0;
            let mut value = initial;
            for _ in 0..rng.random_range(0..=2usize) {
                t += rng.random_range(0.1..1.2);
                value = !value;
                switches.push((t, value));
            }
            let path = TreatmentPath::new(initial, switches).unwrap();
            Subject::new(format!("s{i}"), followup, event, arm, path).unwrap()
        })
        .collect();
    Dataset::with_default_tau(subjects).unwrap()
}

/// Identified design: only arm-1 subjects switch off treatment, at rate 0.3,
/// independently of the confounders. Hazard as in the valid variant,
/// administrative censoring at 3.
pub fn identified(n: usize, seed: u64) -> Dataset {
    let truth = Variant::Valid.truth();
    let subjects = (0..n)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let u = sample_confounder(&mut rng);
            let z = rng.random::<f64>() < 0.5;
            let e: f64 = rng.sample(Exp1);
            let w = if z { e / 0.3 } else { f64::INFINITY };
            let path = if w.is_finite() {
                TreatmentPath::new(true, vec![(w, false)]).unwrap()
            } else {
                TreatmentPath::constant(z)
            };
            let t = sample_event_time(&mut rng, &path, z, u[1], &truth);
            let x = t.min(3.0);
            let observed = if w <= x { path } else { TreatmentPath::constant(z) };
            Subject::new((i + 1).to_string(), x, t <= 3.0, z, observed).unwrap()
        })
        .collect();
    Dataset::with_default_tau(subjects).unwrap()
}

/// Everyone takes the assigned arm throughout; exponential events at rate
/// `0.1 + 0.2 Z`, administrative censoring at 3.
pub fn no_switching(n: usize, seed: u64) -> Dataset {
    let subjects = (0..n)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let z = i % 2 == 0;
            let e: f64 = rng.sample(Exp1);
            let t = e / if z { 0.3 } else { 0.1 };
            Subject::new((i + 1).to_string(), t.min(3.0), t <= 3.0, z, TreatmentPath::constant(z)).unwrap()
        })
        .collect();
    Dataset::with_default_tau(subjects).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
