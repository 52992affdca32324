use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regretctl::fixtures::{matching_pennies, zero_reward_system};
use regretctl::save_system;
use serde_json::Value;

fn regretctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regretctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout is JSON lines"))
        .collect()
}

fn write_system(dir: &Path, name: &str, system: &regretctl::System64) -> String {
    let path = dir.join(name);
    fs::write(&path, save_system(system.spec())).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn zero_reward_system_has_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(dir.path(), "zero.json", &zero_reward_system(3, 2, 2, 0.9));
    let art = dir.path().join("a.json");
    let out = regretctl(&["solve", "--system", &sys, "--k", "2", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 3);
    for line in lines {
        assert_eq!(line["regret"].as_f64(), Some(0.0));
    }
    let artifact: Value = serde_json::from_str(&fs::read_to_string(art).unwrap()).unwrap();
    assert_eq!(artifact["kind"], "regret");
    assert_eq!(artifact["converged"], true);
}

#[test]
fn matching_pennies_regret_is_two_at_half_discount() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(dir.path(), "mp.json", &matching_pennies(0.5));
    let art = dir.path().join("a.json");
    let out = regretctl(&["solve", "--system", &sys, "--k", "1", "--epsilon", "1e-9", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let lines = stdout_lines(&out);
    assert_eq!(lines[0]["s0"], 0);
    assert!((lines[0]["regret"].as_f64().unwrap() - 2.0).abs() <= 2e-9);
}

#[test]
fn finite_matching_pennies_regret_equals_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(dir.path(), "mp.json", &matching_pennies(0.5));
    let art = dir.path().join("f.json");
    let out = regretctl(&["solve-finite", "--system", &sys, "--k", "1", "--horizon", "3", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_lines(&out)[0]["regret"].as_f64(), Some(3.0));
}

#[test]
fn mdp_without_distribution_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(dir.path(), "mp.json", &matching_pennies(0.5));
    let art = dir.path().join("m.json");
    let out = regretctl(&["solve", "--system", &sys, "--mode", "mdp", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dist"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unconverged_solve_exits_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_system(dir.path(), "mp.json", &matching_pennies(0.99));
    let art = dir.path().join("a.json");
    let out = regretctl(&["solve", "--system", &sys, "--max-sweeps", "2", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let artifact: Value = serde_json::from_str(&fs::read_to_string(art).unwrap()).unwrap();
    assert_eq!(artifact["converged"], false);
}

#[test]
fn missing_system_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let art = dir.path().join("a.json");
    let out = regretctl(&["solve", "--system", "/definitely/not/here.json", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_system_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"version":1,"num_states":1,"num_actions":1,"num_disturbances":1,"gamma":0.5,"transition":[[[3]]],"reward":[[[0.0]]]}"#).unwrap();
    let out = regretctl(&["validate", "--system", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_with_zero_tolerance_fails() {
    let out = regretctl(&[
        "verify",
        "--systems-per-cell",
        "1",
        "--contraction-systems",
        "3",
        "--contraction-pairs",
        "3",
        "--decomposition-trials",
        "5",
        "--max-horizon",
        "4",
        "--tolerance",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let suites = stdout_lines(&out);
    assert!(suites.iter().any(|s| s["passed"] == false));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system={"));
}

#[test]
fn verify_small_grid_passes() {
    let out = regretctl(&[
        "verify",
        "--systems-per-cell",
        "2",
        "--contraction-systems",
        "3",
        "--contraction-pairs",
        "5",
        "--decomposition-trials",
        "5",
        "--max-horizon",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_lines(&out).len(), 7);
}

#[test]
fn verify_grid_beyond_enumeration_budget_is_rejected() {
    let out = regretctl(&["verify", "--max-horizon", "12"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn inventory_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inv.json");
    let p = path.to_str().unwrap();
    let out = regretctl(&["inventory-gen", "--s-max", "4", "--a-max", "2", "--w-max", "3", "--out", p]);
    assert_eq!(out.status.code(), Some(0));
    let out = regretctl(&["validate", "--system", p]);
    let summary = &stdout_lines(&out)[0];
    assert_eq!(summary["num_states"], 5);
    assert_eq!(summary["num_actions"], 3);
    assert_eq!(summary["num_disturbances"], 4);
}

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("inv.json");
    let s = sys.to_str().unwrap();
    regretctl(&["inventory-gen", "--s-max", "3", "--a-max", "3", "--w-max", "3", "--gamma", "0.9", "--out", s]);
    let art = dir.path().join("a.json");
    let out = regretctl(&["solve", "--system", s, "--k", "1", "--s0", "0", "--out", art.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = dir.path().join("t.csv");
    let out = regretctl(&[
        "simulate",
        "--system",
        s,
        "--artifact",
        art.to_str().unwrap(),
        "--lambda",
        "1.5",
        "--horizon",
        "25",
        "--seed",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_lines(&out)[0]["steps"], 25);
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 26);
}

const SMALL_EXPERIMENT: &str = r#"{
  "system": {"inventory": {"s_max": 4, "a_max": 4, "w_max": 6, "holding": 1.0, "penalty": 9.0, "gamma": 0.9}},
  "controllers": [{"kind": "mdp", "lambda": 2.0}, {"kind": "robust"}, {"kind": "regret", "k": 1}],
  "models": [
    {"kind": "poisson", "lambda": 3.0},
    {"kind": "hmm", "lambda_low": 1.0, "lambda_high": 4.0, "persistence": 0.9}
  ],
  "horizon": 40,
  "seeds": 3,
  "output": "run"
}"#;

#[test]
fn experiment_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    fs::write(&config, SMALL_EXPERIMENT).unwrap();
    let c = config.to_str().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out_dir in [&first, &second] {
        let out = regretctl(&["experiment", "--config", c, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["steps.csv", "aggregate.csv", "manifest.json"] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
    let aggregate = fs::read_to_string(first.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 3 * 2);
    let steps = fs::read_to_string(first.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 1 + 3 * 2 * 3 * 40);
}

#[test]
fn experiment_output_defaults_next_to_config_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    fs::write(&config, SMALL_EXPERIMENT).unwrap();
    let out = regretctl(&["experiment", "--config", config.to_str().unwrap(), "--seeds", "2", "--horizon", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["horizon"], 7);
}

#[test]
fn unknown_flags_exit_one() {
    let out = regretctl(&["solve", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}
