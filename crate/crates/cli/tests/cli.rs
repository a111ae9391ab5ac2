use std::process::{Command, Output};

use serde_json::Value;

fn ncmodsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncmodsym")).args(args).env_remove("NCMODSYM_CACHE").output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn rows(r: &Value) -> &Vec<Value> {
    r["checks"].as_array().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = ncmodsym(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_flag_exit_2() {
    assert_eq!(ncmodsym(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ncmodsym(&["assoc", "--colour", "red"]).status.code(), Some(2));
}

#[test]
fn check_shuffle_passes_for_delta_at_depth_3() {
    let out = ncmodsym(&["check-shuffle", "--family", "delta", "--depth", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["subcommand"], "check-shuffle");
    assert_eq!(r["inputs"]["config"]["depth"], 3);
    assert!(rows(&r).iter().all(|c| c["pass"] == true));
    assert_eq!(r["payload"]["series"]["D"], 3);
}

#[test]
fn assoc_reports_phi_and_duality() {
    let out = ncmodsym(&["assoc", "--depth", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let duality = rows(&r).iter().find(|c| c["name"].as_str().unwrap().starts_with("duality")).unwrap();
    assert!(duality["residual"].as_f64().unwrap() < 1e-7);
    let coeffs = r["payload"]["phi"]["coeffs"].as_array().unwrap();
    // words of length <= 4 over two letters
    assert_eq!(coeffs.len(), 31);
}

#[test]
fn failing_check_exits_1_with_fail_rows() {
    // the chain agrees to about 4e-13 relative, so 3e-14 must fail
    let out = ncmodsym(&["cf-decompose", "--cusp", "3/7", "--tol", "3e-14"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(rows(&r).iter().any(|c| c["pass"] == false));
    assert!(rows(&r).iter().all(|c| (c["residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap()) == (c["pass"] == true)));
}

#[test]
fn bad_values_exit_2() {
    assert_eq!(ncmodsym(&["assoc", "--tol", "1e-20"]).status.code(), Some(2));
    assert_eq!(ncmodsym(&["assoc", "--depth", "9"]).status.code(), Some(2));
    assert_eq!(ncmodsym(&["cf-decompose", "--cusp", "x/7"]).status.code(), Some(2));
    // j_1 may not exceed m_1 - 1
    assert_eq!(ncmodsym(&["dirichlet-eval", "--s", "2", "--j", "5"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# test run\ndepth = 3\nnodes = 40\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let r = report(&ncmodsym(&["check-shuffle", "--config", cfg, "--depth", "2"]));
    assert_eq!(r["inputs"]["config"]["depth"], 2);
    assert_eq!(r["inputs"]["config"]["nodes"], 40);
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let out = ncmodsym(&["shuffle-check", "--k", "2", "--l", "1", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(v["timing_ms"].is_number());
        v["inputs"]["config"]["out"] = Value::Null;
        v["timing_ms"] = Value::Null;
        texts.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn cache_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ncmodsym"))
        .args(["dirichlet-eval", "--s", "10,6", "--nmax", "50"])
        .env("NCMODSYM_CACHE", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("delta_50.json").exists());
    // a second run reads the cache and gives the same numbers
    let again = Command::new(env!("CARGO_BIN_EXE_ncmodsym"))
        .args(["dirichlet-eval", "--s", "10,6", "--nmax", "50"])
        .env("NCMODSYM_CACHE", dir.path())
        .output()
        .unwrap();
    assert_eq!(report(&out)["payload"], report(&again)["payload"]);
}

#[test]
fn cf_decompose_lists_the_convergents_of_3_over_7() {
    let r = report(&ncmodsym(&["cf-decompose", "--cusp", "3/7"]));
    let conv: Vec<(i64, i64)> = serde_json::from_value(r["payload"]["convergents"].clone()).unwrap();
    assert_eq!(conv, vec![(1, 0), (0, 1), (1, 2), (3, 7)]);
}
