use std::path::Path;
use std::process::{Command, Output};

use fairgbt::report::read_report;

fn fairgbt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairgbt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn fairgbt")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn synth(dir: &Path, bias: &str) {
    let o = fairgbt(dir, &["synth", "--rows", "800", "--cols", "5", "--bias", bias, "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

const DATA: [&str; 4] = ["--data", "synth.csv", "--schema", "synth.schema.toml"];

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "2.0");
    synth(b.path(), "2.0");
    for f in ["synth.csv", "synth.schema.toml"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fairgbt(dir.path(), &["synth", "--rows", "10"])), 2);
    assert_eq!(code(&fairgbt(dir.path(), &["audit", "--data", "x.csv"])), 2);
    assert_eq!(code(&fairgbt(dir.path(), &["frobnicate"])), 2);
    synth(dir.path(), "1.0");
    let mut args = vec!["mitigate"];
    args.extend(DATA);
    args.extend(["--theta", "1,2"]);
    assert_eq!(code(&fairgbt(dir.path(), &args)), 2);
}

#[test]
fn missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1.0");
    let o = fairgbt(dir.path(), &["audit", "--data", "nope.csv", "--schema", "synth.schema.toml"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn audit_reports_injected_disparity() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2.0");
    let mut args = vec!["--out-dir", "out", "audit"];
    args.extend(DATA);
    let o = fairgbt(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snap: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/audit_snapshot.json")).unwrap()).unwrap();
    assert!(snap["fairness"]["spd"].as_f64().unwrap() >= 0.2);
    assert!(dir.path().join("out/shap_disparity_pre.csv").exists());
}

#[test]
fn zero_lambda_theta_is_identity_and_outputs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2.0");
    let run = |out: &str| {
        let mut args = vec!["--out-dir", out, "mitigate"];
        args.extend(DATA);
        args.extend(["--theta", "0,1,1,1", "--rounds", "20"]);
        let o = fairgbt(dir.path(), &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a");
    run("b");
    let r = read_report(&dir.path().join("a/report.json")).unwrap();
    assert_eq!(r.pre.fairness, r.post.fairness);
    assert_eq!(r.reductions.spd, Some(0.0));
    for f in ["report.json", "model_fair.txt", "train_trace.csv", "shap_attribution_post.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }

    let o = fairgbt(dir.path(), &["--out-dir", "a", "report", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["theta_star"]["lambda"].as_f64(), Some(0.0));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2.0");
    std::fs::write(
        dir.path().join("run.toml"),
        "[train]\nrounds = 7\n\n[search]\nbudget = 3\ninit_points = 2\nfolds = 2\n",
    )
    .unwrap();
    let mut args = vec!["--config", "run.toml", "mitigate"];
    args.extend(DATA);
    args.extend(["--budget", "40", "--rounds", "50"]);
    let o = fairgbt(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(r.provenance.train_config.rounds, 7);
    assert_eq!(r.provenance.search_space.unwrap().budget, 3);
    let history = std::fs::read_to_string(dir.path().join("bo_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);

    std::fs::write(dir.path().join("bad.toml"), "[train]\nrounds_typo = 7\n").unwrap();
    let mut args = vec!["--config", "bad.toml", "audit"];
    args.extend(DATA);
    assert_eq!(code(&fairgbt(dir.path(), &args)), 2);
}
