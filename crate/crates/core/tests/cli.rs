use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use car2::estimate::{estimate_sigma, mle, SufficientStats};
use car2::simulate::{simulate, SimConfig};
use car2::ModelParams;
use serde_json::Value;

fn car2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_car2")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_estimate_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let out = car2(&[
        "simulate", "--theta1", "-1.5", "--theta2", "-2", "--sigma", "0.8", "--x0", "0.3", "--horizon", "20",
        "--n-steps", "2000", "--seed", "17", "--out", s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("path.csv");
    let out = car2(&["estimate", "--input", s(&csv), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = json(&dir.path().join("estimate.json"));

    let params = ModelParams::new(-1.5, -2.0, 0.8, 0.3, 0.0).unwrap();
    let path = simulate(&params, &SimConfig::new(20.0, 2000).with_seed(17, 0)).unwrap();
    let e = mle(&SufficientStats::from_path(&path).unwrap()).unwrap();
    assert_eq!(rec["theta1_hat"].as_f64().unwrap(), e.theta1_hat);
    assert_eq!(rec["theta2_hat"].as_f64().unwrap(), e.theta2_hat);
    assert_eq!(rec["det_D"].as_f64().unwrap(), e.det_d);
    assert_eq!(rec["sigma_hat"].as_f64().unwrap(), estimate_sigma(&path).unwrap());
    assert_eq!(rec["T"].as_f64().unwrap(), 20.0);
    assert_eq!(rec["n"].as_u64().unwrap(), 2000);
    assert_eq!(rec["seed"].as_u64().unwrap(), 17);
}

#[test]
fn constant_path_and_singular_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = car2(&[
        "simulate", "--theta1", "0", "--theta2", "0", "--sigma", "0", "--x0", "1", "--horizon", "1", "--n-steps",
        "50", "--out", s(dir.path()),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let xs: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(xs.len(), 51);
    assert!(xs.iter().all(|&x| x == 1.0));

    let out = car2(&["estimate", "--input", s(&dir.path().join("path.csv")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular"));
    assert!(!dir.path().join("estimate.json").exists());
}

#[test]
fn roots_report_regimes() {
    for (t1, t2, regime) in [
        ("-3", "-2", "Ergodic"),
        ("2.5", "-1", "DistinctPositive"),
        ("0", "-1", "Harmonic"),
        ("1", "-2.25", "UnstableOscillation"),
        ("0", "0", "ZeroDouble"),
    ] {
        let out = car2(&["roots", "--theta1", t1, "--theta2", t2]);
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["regime"], regime);
    }
    let v: Value = serde_json::from_slice(&car2(&["roots", "--theta1", "2.5", "--theta2", "-1"]).stdout).unwrap();
    assert_eq!(v["p"][0].as_f64().unwrap(), 2.0);
    assert_eq!(v["q"][0].as_f64().unwrap(), 0.5);
}

#[test]
fn bad_input_exits_with_usage_code() {
    assert_eq!(car2(&["roots", "--theta1", "1"]).status.code(), Some(2));
    assert_eq!(car2(&["roots", "--theta1", "nan", "--theta2", "1"]).status.code(), Some(2));
    assert_eq!(car2(&["experiment"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"command":"roots","theta1":1,"theta2":2,"extra":0}"#).unwrap();
    assert_eq!(car2(&["--config", s(&cfg)]).status.code(), Some(2));
    let missing = dir.path().join("none.csv");
    assert_eq!(car2(&["estimate", "--input", s(&missing)]).status.code(), Some(2));
}

fn experiment_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("exp.json");
    fs::write(
        &cfg,
        r#"{
  "command": "experiment",
  "params": {"theta1": -2, "theta2": -1, "sigma": 1},
  "horizons": [10, 20],
  "n_reps": 100,
  "seed": 5,
  "comparison": {"kind": "limit_sampler", "n_ref": 1000, "grid_n": 1000}
}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = car2(&["--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = car2(&["--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    assert!(o.status.success());
    for name in ["report.json", "residuals.csv"] {
        let (fa, fb, fc) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), fs::read(c.join(name)).unwrap());
        assert_eq!(fa, fb, "{name}");
        assert_ne!(fa, fc, "{name} ignores --seed");
    }
    let report = json(&a.join("report.json"));
    assert_eq!(report["regime"], "Ergodic");
    assert_eq!(report["horizons"].as_array().unwrap().len(), 2);
}

#[test]
fn limit_sample_writes_draws() {
    let dir = tempfile::tempdir().unwrap();
    let o = car2(&[
        "limit-sample", "--theta1", "0", "--theta2", "0", "--sigma", "1", "--n", "300", "--grid-n", "1000", "--seed",
        "3", "--out", s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("limit.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("l1,l2"));
    assert_eq!(text.lines().count(), 301);
    assert_eq!(json(&dir.path().join("limit.json"))["regime"], "ZeroDouble");
    let o = car2(&["limit-sample", "--theta1", "0", "--theta2", "0", "--sigma", "1", "--n", "10", "--grid-n", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let job = car2::cli::CliConfig::from_json(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if let car2::cli::CliConfig::Experiment(c) | car2::cli::CliConfig::Convergence(c) = &job {
            c.validate().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}
