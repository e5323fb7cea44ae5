use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ivscsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivscsm")).args(args).output().unwrap()
}

fn ivscsm_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivscsm"))
        .env("RAYON_NUM_THREADS", threads.to_string())
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ivscsm(&[]).status.code(), Some(2));
    assert_eq!(
        ivscsm(&["fit", "--treatment", "t.csv", "--out", "x"]).status.code(),
        Some(2)
    );
    assert_eq!(ivscsm(&["simulate", "--n", "ten", "--out", "x"]).status.code(), Some(2));
    assert_eq!(
        ivscsm(&[
            "fit",
            "--events",
            "e",
            "--treatment",
            "t",
            "--estimator",
            "ols",
            "--out",
            "x"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(ivscsm(&["bogus"]).status.code(), Some(2));
}

#[test]
fn version_and_help_exit_zero() {
    let v = ivscsm(&["version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).starts_with("ivscsm "));
    assert_eq!(ivscsm(&["--help"]).status.code(), Some(0));
    assert_eq!(ivscsm(&["--version"]).status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible_and_prints_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = ivscsm(&[
        "simulate",
        "--n",
        "300",
        "--seed",
        "42",
        "--variant",
        "valid",
        "--out",
        &p(dir.path(), "a"),
    ]);
    let b = ivscsm_threads(
        &[
            "simulate",
            "--n",
            "300",
            "--seed",
            "42",
            "--variant",
            "valid",
            "--out",
            &p(dir.path(), "b"),
        ],
        1,
    );
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    assert!(stdout(&a).contains("seed: 42"));
    for ext in ["events.csv", "treatment.csv", "truth.json"] {
        let x = fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let y = fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert_eq!(x, y, "{ext}");
    }
    let events = fs::read_to_string(dir.path().join("a.events.csv")).unwrap();
    assert!(events.starts_with("# tool: ivscsm"));
    assert!(events.contains("# seed: 42"));
}

#[test]
fn omitted_seed_is_drawn_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ivscsm(&[
        "simulate",
        "--n",
        "50",
        "--censor-hazard",
        "0.1",
        "--out",
        &p(dir.path(), "s"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out)
        .lines()
        .find(|l| l.starts_with("seed: "))
        .unwrap()
        .to_string();
    let seed: u64 = line["seed: ".len()..].parse().unwrap();
    let events = fs::read_to_string(dir.path().join("s.events.csv")).unwrap();
    assert!(events.contains(&format!("# seed: {seed}")));
    // Re-running with the printed seed reproduces the data.
    let again = ivscsm(&[
        "simulate",
        "--n",
        "50",
        "--censor-hazard",
        "0.1",
        "--seed",
        &seed.to_string(),
        "--out",
        &p(dir.path(), "r"),
    ]);
    assert_eq!(again.status.code(), Some(0));
    let strip = |s: String| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(
        strip(events),
        strip(fs::read_to_string(dir.path().join("r.events.csv")).unwrap())
    );
}

#[test]
fn fit_writes_results_deterministically_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = ivscsm(&[
        "simulate",
        "--n",
        "400",
        "--seed",
        "7",
        "--variant",
        "valid",
        "--out",
        &p(dir.path(), "d"),
    ]);
    assert_eq!(sim.status.code(), Some(0));
    let (ev, tr) = (p(dir.path(), "d.events.csv"), p(dir.path(), "d.treatment.csv"));
    let args = |out: &str| -> Vec<String> {
        [
            "fit",
            "--events",
            &ev,
            "--treatment",
            &tr,
            "--se",
            "bootstrap",
            "--boot-B",
            "100",
            "--seed",
            "9",
            "--out",
            out,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let one = p(dir.path(), "one");
    let many = p(dir.path(), "many");
    let a = ivscsm_threads(&args(&one).iter().map(String::as_str).collect::<Vec<_>>(), 1);
    let b = ivscsm_threads(&args(&many).iter().map(String::as_str).collect::<Vec<_>>(), 4);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    for ext in ["curve.csv", "summary.json"] {
        let x = fs::read_to_string(format!("{one}.{ext}")).unwrap();
        let y = fs::read_to_string(format!("{many}.{ext}")).unwrap();
        assert_eq!(x, y, "{ext}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{one}.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["estimator"], "robust");
    assert_eq!(summary["se_method"], "bootstrap");
    assert!(summary["beta_D"]["estimate"].is_number());
    assert!(summary["p_gof"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bad_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    let tr = dir.path().join("t.csv");
    fs::write(&ev, "id,time,status,z\n1,1.0,1,1\n2,2.0,1,2\n").unwrap();
    fs::write(&tr, "id,t_start,d\n1,0,1\n2,0,0\n").unwrap();
    let args = [
        "fit",
        "--events",
        ev.to_str().unwrap(),
        "--treatment",
        tr.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        &p(dir.path(), "o"),
    ];
    let out = ivscsm(&args);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3") && err.contains("'z'"), "{err}");

    let missing = ivscsm(&[
        "fit",
        "--events",
        "/nonexistent/e.csv",
        "--treatment",
        "/nonexistent/t.csv",
        "--seed",
        "1",
        "--out",
        "x",
    ]);
    assert_eq!(missing.status.code(), Some(3));

    // One arm only: the instrument carries no information.
    fs::write(&ev, "id,time,status,z\n1,1.0,1,1\n2,2.0,1,1\n").unwrap();
    fs::write(&tr, "id,t_start,d\n1,0,1\n2,0,0\n").unwrap();
    assert_eq!(ivscsm(&args).status.code(), Some(3));
}

#[test]
fn numeric_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    let tr = dir.path().join("t.csv");
    // Too few subjects for stable survivor weights.
    fs::write(
        &ev,
        "id,time,status,z\n1,1.2,1,1\n2,2.0,0,1\n3,0.7,1,0\n4,2.5,1,0\n5,1.6,1,1\n6,3.0,0,0\n7,0.9,1,1\n8,2.2,1,0\n",
    )
    .unwrap();
    fs::write(
        &tr,
        "id,t_start,d\n1,0,1\n2,0,1\n2,1.0,0\n3,0,0\n4,0,0\n4,1.5,1\n5,0,1\n6,0,0\n7,0,1\n8,0,0\n",
    )
    .unwrap();
    let out = ivscsm(&[
        "fit",
        "--events",
        ev.to_str().unwrap(),
        "--treatment",
        tr.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        &p(dir.path(), "o"),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mc_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ivscsm(&[
        "mc",
        "--n",
        "200",
        "--reps",
        "3",
        "--variant",
        "valid",
        "--seed",
        "5",
        "--out",
        &p(dir.path(), "m"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let md = fs::read_to_string(dir.path().join("m.md")).unwrap();
    assert!(md.contains("B_D(1)") && md.contains("beta_D"));
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("# seed: 5")));
    assert_eq!(
        ivscsm(&[
            "mc",
            "--n",
            "200",
            "--reps",
            "1",
            "--seed",
            "5",
            "--out",
            &p(dir.path(), "m")
        ])
        .status
        .code(),
        Some(3)
    );
}
