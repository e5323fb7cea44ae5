use ivscsm::model::*;
use ivscsm::Error;
use proptest::prelude::*;

fn subject(x: f64, event: bool, path: TreatmentPath) -> Subject {
    Subject::new("s", x, event, true, path).unwrap()
}

#[test]
fn effective_treatment_examples() {
    let s = subject(5.0, true, TreatmentPath::constant(true));
    assert!(s.effective_treatment(2.0));
    assert!(!s.effective_treatment(6.0));
    assert!(s.effective_treatment(5.0));

    let switched = subject(5.0, true, TreatmentPath::new(true, vec![(2.0, false)]).unwrap());
    assert!(!switched.effective_treatment(2.0));
    assert!(switched.effective_treatment(1.999));
}

#[test]
fn risk_event_examples() {
    let ev = subject(3.0, true, TreatmentPath::constant(false));
    let cens = subject(3.0, false, TreatmentPath::constant(false));
    assert_eq!(ev.risk_event_state(3.0), (true, true));
    assert_eq!(cens.risk_event_state(3.0), (true, false));
    assert_eq!(ev.risk_event_state(4.0), (false, false));
    assert_eq!(ev.risk_event_state(1.0), (true, false));
}

#[test]
fn path_rejects_bad_switches() {
    assert!(TreatmentPath::new(true, vec![(0.0, false)]).is_err());
    assert!(TreatmentPath::new(true, vec![(1.0, true)]).is_err());
    assert!(TreatmentPath::new(true, vec![(1.0, false), (1.0, true)]).is_err());
    assert!(TreatmentPath::new(true, vec![(1.0, false), (0.5, true)]).is_err());
    assert!(TreatmentPath::new(false, vec![(1.0, true), (2.0, false)]).is_ok());
}

#[test]
fn path_pieces_cover_horizon() {
    let p = TreatmentPath::new(false, vec![(1.0, true), (4.0, false)]).unwrap();
    assert_eq!(p.pieces(3.0), vec![(0.0, 1.0, false), (1.0, 3.0, true)]);
    assert_eq!(
        p.pieces(10.0),
        vec![(0.0, 1.0, false), (1.0, 4.0, true), (4.0, 10.0, false)]
    );
}

#[test]
fn subject_and_dataset_validation() {
    let p = TreatmentPath::constant(true);
    assert!(Subject::new("a", 0.0, true, true, p.clone()).is_err());
    assert!(Subject::new("a", f64::INFINITY, true, true, p.clone()).is_err());
    let a = Subject::new("a", 1.0, true, true, p.clone()).unwrap();
    let b = Subject::new("b", 2.0, false, true, p).unwrap();
    assert!(Dataset::new(vec![a.clone()], 1.0).is_err());
    assert!(matches!(
        Dataset::new(vec![a.clone(), b.clone()], 1.0),
        Err(Error::Identification(_))
    ));
    let mut c = b.clone();
    c.arm = false;
    let d = Dataset::with_default_tau(vec![a, c]).unwrap();
    assert_eq!(d.tau(), 2.0);
    assert!(d.with_tau(0.0).is_err());
}

#[test]
fn event_times_are_distinct_and_bounded() {
    let p = TreatmentPath::constant(false);
    let subs = vec![
        Subject::new("1", 2.0, true, true, p.clone()).unwrap(),
        Subject::new("2", 1.0, true, false, p.clone()).unwrap(),
        Subject::new("3", 2.0, true, false, p.clone()).unwrap(),
        Subject::new("4", 3.0, false, false, p.clone()).unwrap(),
        Subject::new("5", 4.0, true, true, p).unwrap(),
    ];
    let d = Dataset::new(subs, 3.5).unwrap();
    assert_eq!(d.event_times(), vec![1.0, 2.0]);
}

#[test]
fn evaluate_step_examples() {
    let c = CumulativeEffect::new(vec![1.0], vec![[0.2, 0.1]], 2).unwrap();
    assert_eq!(c.evaluate(0.0), [0.0, 0.0]);
    assert_eq!(c.evaluate(1.5), [0.2, 0.1]);
    let c2 = CumulativeEffect::new(vec![1.0, 2.0], vec![[0.2, 0.1], [0.1, 0.0]], 2).unwrap();
    let v = c2.evaluate(2.0);
    assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] - 0.1).abs() < 1e-15);
    assert_eq!(c2.evaluate(1.999_999), [0.2, 0.1]);
}

#[test]
fn cumulative_effect_validation() {
    assert!(CumulativeEffect::new(vec![0.0], vec![[1.0, 0.0]], 2).is_err());
    assert!(CumulativeEffect::new(vec![2.0, 1.0], vec![[1.0, 0.0]; 2], 2).is_err());
    assert!(CumulativeEffect::new(vec![1.0], vec![[1.0, 1.0]], 1).is_err());
    assert!(CumulativeEffect::new(vec![1.0], vec![], 2).is_err());
    assert!(CumulativeEffect::new(vec![1.0], vec![[1.0, 0.0]], 3).is_err());
}

proptest! {
    #[test]
    fn adding_later_jump_keeps_earlier_values(
        gaps in prop::collection::vec(0.01f64..2.0, 1..8),
        incs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
        extra in (0.01f64..3.0, -1.0f64..1.0),
        probe in 0.0f64..1.0,
    ) {
        let mut t = 0.0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let increments: Vec<[f64; 2]> = incs[..times.len()].iter().map(|&(a, b)| [a, b]).collect();
        let base = CumulativeEffect::new(times.clone(), increments.clone(), 2).unwrap();
        let last = *times.last().unwrap();
        let mut times2 = times.clone();
        times2.push(last + extra.0);
        let mut inc2 = increments.clone();
        inc2.push([extra.1, extra.1]);
        let longer = CumulativeEffect::new(times2, inc2, 2).unwrap();
        let at = probe * last;
        prop_assert_eq!(base.evaluate(at), longer.evaluate(at));
    }

    #[test]
    fn not_at_risk_implies_no_event(x in 0.01f64..10.0, t in 0.001f64..12.0, ev: bool) {
        let s = Subject::new("p", x, ev, false, TreatmentPath::constant(false)).unwrap();
        let (r, e) = s.risk_event_state(t);
        prop_assert!(r || !e);
    }
}
