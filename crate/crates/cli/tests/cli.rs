use std::path::Path;
use std::process::{Command, Output};

fn biclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biclab")).args(args).env_remove("BICLAB_SEED").output().expect("binary runs")
}

fn write_instance(dir: &Path) -> String {
    let path = dir.join("two.json");
    std::fs::write(&path, r#"{"atoms": [{"a":1,"b":1},{"a":1,"b":1}], "actions": [[0],[1]], "alpha": 1}"#).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn game_solve_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());
    let out = dir.path().join("out");
    let o = biclab(&["game", "solve", "--instance", &inst, "--j", "1", "--samples", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("game-solve.json")).unwrap()).unwrap();
    assert_eq!(summary["certificate_pass"], true);
    assert!(out.join("manifest.json").is_file() && out.join("policy.json").is_file());
}

#[test]
fn flat_and_nested_forms_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["--replications", "2000", "--seed", "4"];
    let oa = biclab(&[&["counterexample-2", "--out", a.to_str().unwrap()][..], &common[..]].concat());
    let ob = biclab(&[&["counterexample", "two", "--out", b.to_str().unwrap()][..], &common[..]].concat());
    assert_eq!(oa.status.code(), ob.status.code());
    let read = |p: &Path| std::fs::read(p.join("counterexample-2.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_biclab"))
            .args(["reduce", "extreme-points", "--replications", "50", "--out", out.to_str().unwrap()])
            .env("BICLAB_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("config.json")).unwrap()
    };
    assert!(run("77", "x").contains("\"seed\": 77"));
}

#[test]
fn malformed_instance_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = biclab(&["game-sweep", "--instance", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn unknown_command_exits_with_usage_code() {
    assert_eq!(biclab(&["no-such-kind"]).status.code(), Some(2));
    assert_eq!(biclab(&["audit", "nothing"]).status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // a tiny radius constant cannot cover the estimation error
    let cfg = dir.path().join("glm.json");
    std::fs::write(&cfg, r#"{"kind": "glm-audit", "replications": 4000, "seed": 2, "params": {"delta": 0.01, "c": 0.001}}"#).unwrap();
    let o = biclab(&["glm-audit", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn config_kind_must_match_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"kind": "corollary", "replications": 10, "seed": 1}"#).unwrap();
    assert_eq!(biclab(&["reduce", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}
