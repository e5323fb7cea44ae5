use ivscsm::estimator::constant_effect;
use ivscsm::model::{CumulativeEffect, Dataset, Subject, TreatmentPath};

fn flat_data(n: usize, tau: f64) -> Dataset {
    let subs = (0..n)
        .map(|i| Subject::new(i.to_string(), tau, false, i % 2 == 0, TreatmentPath::constant(false)).unwrap())
        .collect();
    Dataset::new(subs, tau).unwrap()
}

#[test]
fn linear_curve_recovers_slope_with_constant_weights() {
    let c = 0.37;
    let tau = 3.0;
    let times = vec![0.4, 1.1, 1.9, 2.25, 3.0];
    let mut prev = 0.0;
    let incs = times
        .iter()
        .map(|&t| {
            let inc = [c * (t - prev), 0.0];
            prev = t;
            inc
        })
        .collect();
    let curve = CumulativeEffect::new(times, incs, 2).unwrap();
    let ce = constant_effect(&curve, &flat_data(6, tau)).unwrap();
    assert!((ce.beta[0] - c).abs() < 1e-12, "{}", ce.beta[0]);
    assert_eq!(ce.beta[1], 0.0);

    // Jumps covering only [0, 2] under constant weights give c * 2 / tau.
    let partial = CumulativeEffect::new(vec![1.0, 2.0], vec![[c, 0.0], [c, 0.0]], 2).unwrap();
    let ce = constant_effect(&partial, &flat_data(6, tau)).unwrap();
    assert!((ce.beta[0] - c * 2.0 / tau).abs() < 1e-12);
}

#[test]
fn single_jump_scales_by_weight() {
    let subs = vec![
        Subject::new("a", 1.0, true, true, TreatmentPath::constant(true)).unwrap(),
        Subject::new("b", 2.0, false, false, TreatmentPath::constant(false)).unwrap(),
        Subject::new("c", 4.0, false, false, TreatmentPath::constant(false)).unwrap(),
    ];
    let data = Dataset::new(subs, 3.0).unwrap();
    let curve = CumulativeEffect::new(vec![1.0], vec![[0.3, -0.2]], 2).unwrap();
    let ce = constant_effect(&curve, &data).unwrap();
    // Normalizer (1 + 2 + 3) / 3 = 2, w~(1) = 1.
    assert!((ce.normalizer - 2.0).abs() < 1e-15);
    assert!((ce.weights[0] - 0.5).abs() < 1e-15);
    assert!((ce.beta[0] - 0.15).abs() < 1e-15);
    assert!((ce.beta[1] + 0.1).abs() < 1e-15);
}
