use ivscsm::estimator::{center_nuisances, CenteringPopulation};
use ivscsm::model::{Dataset, Subject, TreatmentPath};

fn subj(id: &str, x: f64, arm: bool, path: TreatmentPath) -> Subject {
    Subject::new(id, x, false, arm, path).unwrap()
}

#[test]
fn balanced_arms_center_to_half() {
    let p = TreatmentPath::constant(false);
    let d = Dataset::new(
        vec![
            subj("1", 5.0, true, p.clone()),
            subj("2", 5.0, false, p.clone()),
            subj("3", 5.0, true, p.clone()),
            subj("4", 5.0, false, p),
        ],
        5.0,
    )
    .unwrap();
    let c = center_nuisances(&d, &[1.0], CenteringPopulation::AllSubjects).unwrap();
    assert_eq!(c.zc, vec![0.5, -0.5, 0.5, -0.5]);
    assert!(c.zc.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn two_point_mean_and_after_followup_zeroing() {
    let d = Dataset::new(
        vec![
            subj("1", 5.0, true, TreatmentPath::constant(true)),
            subj("2", 5.0, true, TreatmentPath::constant(false)),
            subj("3", 1.0, false, TreatmentPath::constant(true)),
            subj("4", 5.0, false, TreatmentPath::constant(false)),
        ],
        5.0,
    )
    .unwrap();
    let c = center_nuisances(&d, &[0.5, 2.0], CenteringPopulation::AllSubjects).unwrap();
    assert_eq!(c.d_mean_by_arm(0.5, true), Some(0.5));
    assert_eq!(c.d_mean_by_arm(0.5, false), Some(0.5));
    // Subject 3 leaves at 1.0 and contributes D = 0 afterwards.
    assert_eq!(c.d_mean_by_arm(2.0, false), Some(0.0));
    assert_eq!(c.d_mean_by_arm(1.5, false), None);

    let r = center_nuisances(&d, &[2.0], CenteringPopulation::AtRisk).unwrap();
    assert_eq!(r.d_mean_by_arm(2.0, false), Some(0.0));
    assert_eq!(r.d_mean_by_arm(2.0, true), Some(0.5));
}

#[test]
fn at_risk_population_ignores_departed() {
    let d = Dataset::new(
        vec![
            subj("1", 5.0, true, TreatmentPath::constant(true)),
            subj("2", 1.0, true, TreatmentPath::constant(false)),
            subj("3", 5.0, false, TreatmentPath::constant(false)),
        ],
        5.0,
    )
    .unwrap();
    let all = center_nuisances(&d, &[2.0], CenteringPopulation::AllSubjects).unwrap();
    let risk = center_nuisances(&d, &[2.0], CenteringPopulation::AtRisk).unwrap();
    assert_eq!(all.d_mean_by_arm(2.0, true), Some(0.5));
    assert_eq!(risk.d_mean_by_arm(2.0, true), Some(1.0));
}
