use ivscsm::model::TreatmentPath;
use ivscsm::rng::substream;
use ivscsm::simulation::*;
use proptest::prelude::*;

#[test]
fn switch_time_boundaries() {
    for variant in [Variant::Paper, Variant::Valid] {
        for z in [false, true] {
            assert_eq!(switch_time_from_uniform(1.0, variant, z, 1.5, 0.1, 30.0), 0.0);
        }
    }
}

#[test]
fn treated_arm_switch_by_three() {
    let raw = switch_survival_raw(Variant::Paper, true, 1.5, 3.0);
    let by_hand = (-1.5f64).exp() + (1.0 - (-0.15f64).exp()) + (1.0 - (-0.6f64).exp());
    assert!((raw - by_hand).abs() < 1e-15);
    assert!((raw - 0.8136).abs() < 1e-4);
    let w = switch_time_from_uniform(0.82, Variant::Paper, true, 1.5, 0.1, 30.0);
    assert!(w <= 3.0, "{w}");
    // Grid-aligned.
    assert!(((w / 0.1).round() * 0.1 - w).abs() < 1e-12);
}

#[test]
fn control_arm_switches_too() {
    let w = switch_time_from_uniform(0.05, Variant::Paper, false, 4.0, 0.1, 30.0);
    assert!(w.is_finite());
    let w = switch_time_from_uniform(0.05, Variant::Valid, false, 4.0, 0.1, 30.0);
    assert!(w.is_finite());
}

#[test]
fn paper_formula_needs_repair() {
    let s1 = switch_survival_curve(Variant::Paper, true, 3.0, 0.1, 60.0);
    assert!(s1.iter().any(|p| p.raw > 1.0));
    let s0 = switch_survival_curve(Variant::Paper, false, 3.0, 0.1, 60.0);
    assert!(s0.iter().any(|p| p.raw < 0.0));
}

#[test]
fn valid_variant_needs_no_repair_within_follow_up() {
    for z in [false, true] {
        for k in -10..=40 {
            let u1 = k as f64 * 0.1;
            for p in switch_survival_curve(Variant::Valid, z, u1, 0.1, 3.0) {
                assert!((p.raw - p.repaired).abs() < 1e-12, "z={z} u1={u1} t={}", p.t);
            }
        }
    }
}

proptest! {
    #[test]
    fn repaired_survival_is_valid(z: bool, u1 in -1.0f64..5.0, paper: bool) {
        let variant = if paper { Variant::Paper } else { Variant::Valid };
        let curve = switch_survival_curve(variant, z, u1, 0.1, 30.0);
        prop_assert_eq!(curve[0].repaired, 1.0);
        for w in curve.windows(2) {
            prop_assert!(w[1].repaired <= w[0].repaired);
        }
        prop_assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.repaired)));
    }

    #[test]
    fn switch_time_inverts_survival(u in 0.0f64..1.0, z: bool, u1 in 0.0f64..3.0) {
        let curve = switch_survival_curve(Variant::Paper, z, u1, 0.1, 30.0);
        let w = switch_time_from_uniform(u, Variant::Paper, z, u1, 0.1, 30.0);
        match curve.iter().find(|p| p.repaired <= u) {
            Some(p) => prop_assert!((p.t - w).abs() < 1e-12),
            None => prop_assert!(w.is_infinite()),
        }
    }

    #[test]
    fn event_time_hits_cumulative_hazard(e in 0.001f64..5.0, switch in 0.1f64..4.0, z: bool, u2 in 0.0f64..3.0) {
        let truth = Variant::Valid.truth();
        let path = TreatmentPath::new(z, vec![(switch, !z)]).unwrap();
        let t = event_time_from_exp(e, &path, z, u2, &truth);
        let h0 = truth.hazard(z, z, u2);
        let h1 = truth.hazard(!z, z, u2);
        let cum = if t <= switch { h0 * t } else { h0 * switch + h1 * (t - switch) };
        prop_assert!((cum - e).abs() < 1e-10 * (1.0 + e));
    }
}

#[test]
fn event_time_closed_forms() {
    let truth = Variant::Paper.truth();
    let t = event_time_from_exp(0.625, &TreatmentPath::constant(true), true, 1.5, &truth);
    assert!((t - 1.0).abs() < 1e-14);
    let median = event_time_from_exp(
        std::f64::consts::LN_2,
        &TreatmentPath::constant(false),
        false,
        0.0,
        &truth,
    );
    assert!((median - 6.931_471_805_599_453).abs() < 1e-12);
    // Negative U2 tails are floored.
    assert_eq!(truth.hazard(false, false, -10.0), HAZARD_FLOOR);
}

#[test]
fn confounder_covariance() {
    let mut rng = substream(99, 0);
    let n = 1_000_000;
    let draws: Vec<[f64; 2]> = (0..n).map(|_| sample_confounder(&mut rng)).collect();
    let mean = [0, 1].map(|c| draws.iter().map(|u| u[c]).sum::<f64>() / n as f64);
    let cov =
        |a: usize, b: usize| draws.iter().map(|u| (u[a] - mean[a]) * (u[b] - mean[b])).sum::<f64>() / (n - 1) as f64;
    assert!((mean[0] - 1.5).abs() < 0.01 && (mean[1] - 1.5).abs() < 0.01);
    assert!((cov(0, 0) - 0.25).abs() < 0.01);
    assert!((cov(1, 1) - 0.25).abs() < 0.01);
    assert!((cov(0, 1) + 1.0 / 6.0).abs() < 0.01);
}

#[test]
fn valid_switching_is_additive_in_arm_and_confounder() {
    // Within confounder deciles, the arm difference in P(D(t) = 1) is constant.
    let cfg = DgmConfig::new(2, 0, Variant::Valid);
    let n = 400_000;
    let mut rng = substream(5, 0);
    let mut draws: Vec<(f64, bool, f64)> = (0..n)
        .map(|i| {
            let u = sample_confounder(&mut rng);
            let z = i % 2 == 0;
            (u[0], z, sample_switch_time(&mut rng, z, u[0], &cfg))
        })
        .collect();
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));
    for t in [1.0, 2.0] {
        let diffs: Vec<f64> = draws
            .chunks(n / 10)
            .map(|chunk| {
                let mut treated = [0.0; 2];
                let mut count = [0.0; 2];
                for &(_, z, w) in chunk {
                    let d = if w > t { z } else { !z };
                    count[usize::from(z)] += 1.0;
                    treated[usize::from(z)] += f64::from(u8::from(d));
                }
                treated[1] / count[1] - treated[0] / count[0]
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        for d in &diffs {
            assert!((d - mean).abs() < 0.025, "t={t}: {diffs:?}");
        }
    }
}

#[test]
fn simulation_is_deterministic_and_prefix_stable() {
    let mut cfg = DgmConfig::new(300, 17, Variant::Paper);
    cfg.censor_hazard = Some(0.05);
    let a = simulate_trial(&cfg).unwrap();
    let b = simulate_trial(&cfg).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let mut small = cfg.clone();
    small.n = 100;
    let c = simulate_trial(&small).unwrap();
    for (x, y) in c.dataset.subjects().iter().zip(a.dataset.subjects()) {
        assert_eq!(x, y);
    }
    cfg.seed = 18;
    assert_ne!(simulate_trial(&cfg).unwrap().dataset, a.dataset);
}

#[test]
fn truth_metadata() {
    let mut cfg = DgmConfig::new(200, 1, Variant::Paper);
    cfg.censor_hazard = Some(0.0);
    let t = simulate_trial(&cfg).unwrap().truth;
    assert_eq!((t.slope_d, t.slope_z), (0.2, 0.1));
    assert_eq!(t.truth().at(2.0), [0.4, 0.2]);
    assert!(t.switch_survival_repair.contains("running-minimum"));
    assert!((0.0..=1.0).contains(&t.censoring_fraction));
    assert!((0.0..=1.0).contains(&t.switching_fraction));
    cfg.variant = Variant::Null;
    let t = simulate_trial(&cfg).unwrap().truth;
    assert_eq!((t.slope_d, t.slope_z), (0.0, 0.0));
}

#[test]
fn follow_up_respects_administrative_cutoff() {
    let mut cfg = DgmConfig::new(500, 3, Variant::Valid);
    cfg.censor_hazard = Some(0.1);
    let trial = simulate_trial(&cfg).unwrap();
    for s in trial.dataset.subjects() {
        assert!(s.followup <= 3.0 && s.followup > 0.0);
        assert!(s.path.switches().iter().all(|&(w, _)| w <= s.followup));
        assert!(s.path.initial() == s.arm || s.path.switches().is_empty());
    }
}

#[test]
fn censoring_rate_increases_with_hazard() {
    let mut cfg = DgmConfig::new(20_000, 4, Variant::Valid);
    let rates: Vec<f64> = [0.0, 0.05, 0.2, 0.8]
        .iter()
        .map(|&h| {
            cfg.censor_hazard = Some(h);
            simulate_trial(&cfg).unwrap().truth.censoring_fraction
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
}

#[test]
fn calibration_hits_reachable_target() {
    let mut cfg = DgmConfig::new(2, 0, Variant::Valid);
    cfg.tau_admin = 20.0;
    cfg.censor_rate_target = 0.3;
    let cal = calibrate_censoring(&cfg, 100_000, 11).unwrap();
    assert!(cal.warning.is_none());
    assert!((cal.achieved_rate - 0.3).abs() <= 0.005, "{cal:?}");
    // An independent sample at the calibrated hazard lands near the target.
    cfg.n = 100_000;
    cfg.seed = 12;
    cfg.censor_hazard = Some(cal.hazard);
    let rate = simulate_trial(&cfg).unwrap().truth.censoring_fraction;
    assert!((rate - 0.3).abs() < 0.01, "{rate}");
}

#[test]
fn calibration_edge_cases() {
    let mut cfg = DgmConfig::new(2, 0, Variant::Valid);
    cfg.tau_admin = f64::INFINITY;
    cfg.censor_rate_target = 0.0;
    assert_eq!(calibrate_censoring(&cfg, 10_000, 1).unwrap().hazard, 0.0);

    let paper = DgmConfig::new(2, 0, Variant::Paper);
    let cal = calibrate_censoring(&paper, 10_000, 1).unwrap();
    assert_eq!(cal.hazard, 0.0);
    assert!(cal.warning.unwrap().contains("unreachable"));
    assert!(calibrate_censoring(&paper, 9_999, 1).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = DgmConfig::new(1, 0, Variant::Paper);
    assert!(cfg.validate().is_err());
    cfg.n = 10;
    cfg.grid_step = 0.0;
    assert!(cfg.validate().is_err());
    cfg.grid_step = 0.1;
    cfg.censor_rate_target = 1.0;
    assert!(cfg.validate().is_err());
    assert_eq!("valid".parse::<Variant>().unwrap(), Variant::Valid);
    assert!("other".parse::<Variant>().is_err());
}
