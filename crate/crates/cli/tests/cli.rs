use std::path::Path;
use std::process::{Command, Output};

fn gridguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridguard")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gridguard(&["bogus"]).status.code(), Some(1));
    assert_eq!(gridguard(&["generate"]).status.code(), Some(1));
    assert_eq!(gridguard(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gridguard(&[
        "detect",
        "--corpus",
        s(&tmp.path().join("none")),
        "--model",
        s(&tmp.path().join("none.json")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("none"));
}

#[test]
fn evaluate_rejects_foreign_json() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"x": 1}"#).unwrap();
    let out = gridguard(&["evaluate", "--out", s(&tmp.path().join("eval")), s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn method_needs_mitigated_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let model = tmp.path().join("model");
    // Small config keeps the run quick.
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"generator": {"days": 60, "houses": 10}}"#).unwrap();
    assert!(gridguard(&["generate", "--config", s(&cfg), "--out", s(&corpus)]).status.success());
    assert!(gridguard(&["train", "--corpus", s(&corpus), "--out", s(&model)]).status.success());
    let model_file = model.join("model.json");
    let base = ["simulate", "--corpus", s(&corpus), "--model", s(&model_file), "--days", "1"];
    let mut bad = base.to_vec();
    bad.extend(["--scenario", "clean", "--method", "2", "--out", s(tmp.path())]);
    assert_eq!(gridguard(&bad).status.code(), Some(1));

    let out_dir = tmp.path().join("sim");
    let mut good = base.to_vec();
    good.extend(["--scenario", "mitigated", "--method", "2", "--out", s(&out_dir)]);
    let out = gridguard(&good);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("simulate.csv")).unwrap();
    assert!(csv.contains("method2"));
    assert!(!csv.contains("method1"));
}
