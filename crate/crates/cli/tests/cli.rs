use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn topeq(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_topeq")).args(args).output().expect("binary runs").status.code().unwrap_or(-1)
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(cmd: &str, config: &str) -> (i32, Value, String, TempDir) {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "config.json", config);
    let out = tmp.path().join("out");
    let code = topeq(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let csv = fs::read_to_string(out.join("detail.csv")).unwrap();
    (code, summary, csv, tmp)
}

const PAPER_DIAG: &str = r#"{"scenario": {"name": "paper_diag", "params": {"c": 1.0}}, "window": [-30, 30]}"#;

#[test]
fn certify_paper_diag_passes_and_reports_constants() {
    let (code, summary, csv, _t) = run("certify", PAPER_DIAG);
    assert_eq!(code, 0);
    let h23 = &summary["results"]["h2_h3"];
    assert!(h23["theta"].as_f64().unwrap() < 1.0);
    assert!(h23["b"].as_f64().unwrap() > 0.0);
    assert!(csv.starts_with("check_name,n,m,argument_hash,parameter,measured,bound,passed\n"));
    assert_eq!(summary["results"]["alpha_scan"].as_array().unwrap().len(), 3);
}

#[test]
fn claimed_alpha_is_rejected_with_a_segment() {
    let cfg = r#"{"scenario": {"name": "paper_diag"}, "window": [-30, 30], "claimed_kind": {"alpha": 0.5}}"#;
    let (code, summary, csv, _t) = run("certify", cfg);
    assert_eq!(code, 1);
    let seg = &summary["results"]["claimed_alpha"]["rejection"]["counterexample"];
    assert!(seg["average"].as_f64().unwrap() < 0.5);
    assert!(csv.contains("claimed_alpha_segment"));
}

#[test]
fn missing_window_is_a_config_error() {
    let cfg = r#"{"scenario": {"name": "paper_diag"}}"#;
    let (code, summary, _, _t) = run("certify", cfg);
    assert_eq!(code, 2);
    assert_eq!(summary["error"]["kind"], "config");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(topeq(&["frobnicate"]), 2);
    assert_eq!(topeq(&[]), 2);
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(topeq(&["verify", "--config", "/nonexistent.json", "--out", out.to_str().unwrap()]), 2);
    let cfg = write(tmp.path(), "c.json", PAPER_DIAG);
    assert_eq!(topeq(&["certify", "--config", &cfg, "--window", "3", "--out", out.to_str().unwrap()]), 2);
    assert_eq!(topeq(&["certify", "--config", &cfg, "--window", "-2,3", "--out", out.to_str().unwrap()]), 2);
    let unknown =
        write(tmp.path(), "u.json", r#"{"scenario": {"name": "paper_diag"}, "window": [-9, 9], "colour": 1}"#);
    assert_eq!(topeq(&["certify", "--config", &unknown, "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn window_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", PAPER_DIAG);
    let out = tmp.path().join("o");
    assert_eq!(topeq(&["certify", "--config", &cfg, "--window", "-12,12", "--out", out.to_str().unwrap()]), 0);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["header"]["window"], serde_json::json!([-12, 12]));
}

#[test]
fn bounded_zero_forcing_gives_zero() {
    let cfg = r#"{"scenario": {"name": "const_alpha"}, "window": [-20, 20], "forcing": {"kind": "zero"}}"#;
    let (code, summary, _, _t) = run("bounded", cfg);
    assert_eq!(code, 0);
    assert_eq!(summary["results"]["solution"]["sup_norm"].as_f64(), Some(0.0));
}

#[test]
fn bounded_inline_scalar_closed_form() {
    let cfg = r#"{
        "system": {"dim": 1, "start": 0, "matrices": [[0.5]]},
        "certificate": {"P": [1.0], "K": 1.0, "a": {"mode": "constant", "value": 0.6931471805599453}, "kind": {"alpha": 0.6931471805599453}},
        "window": [-200, 200],
        "forcing": {"kind": "constant", "value": [1.0]}
    }"#;
    let (code, summary, csv, _t) = run("bounded", cfg);
    assert_eq!(code, 0, "{summary}");
    assert!((summary["results"]["closed_form"][0].as_f64().unwrap() - 2.0).abs() < 1e-15);
    assert!(csv.contains("closed_form,"));
}

#[test]
fn verify_with_fault_fails() {
    let cfg = r#"{"scenario": {"name": "paper_diag"}, "window": [-40, 40], "fault_injection": {"n": 0, "offset": 0.01},
                  "sampling": {"points": 10, "solutions": 4, "span": 3}}"#;
    let (code, summary, _, _t) = run("verify", cfg);
    assert_eq!(code, 1);
    assert!(summary["checks"]["solution_map_h"]["failed"].as_u64().unwrap() > 0);
}

#[test]
fn verify_equal_perturbations_is_identity() {
    let cfg = r#"{"scenario": {"name": "paper_diag"}, "window": [-30, 30],
                  "f": {"kind": "saturating", "amplitude": {"constant": 0.05}},
                  "g": {"kind": "saturating", "amplitude": {"constant": 0.05}},
                  "sampling": {"points": 10, "solutions": 2}}"#;
    let (code, summary, _, _t) = run("verify", cfg);
    assert_eq!(code, 0);
    assert!(summary["checks"]["bound_h"]["max_measured"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn modulus_not_applicable_runs_uniform_probe() {
    let cfg = r#"{"scenario": {"name": "const_alpha", "params": {"alpha": 1.0}}, "window": [-30, 30]}"#;
    let (code, summary, csv, _t) = run("modulus", cfg);
    assert_eq!(code, 0);
    assert_eq!(summary["results"]["holder"]["applicable"], false);
    assert!(csv.contains("uniform_modulus"));
    assert!(!csv.contains("\nmodulus,"));
}

#[test]
fn modulus_holder_regime_reports_bounds() {
    let cfg = r#"{"scenario": {"name": "stable_alpha", "params": {"alpha": 2.0}}, "window": [-30, 30]}"#;
    let (code, summary, csv, _t) = run("modulus", cfg);
    assert_eq!(code, 0);
    let exponent = summary["results"]["holder"]["exponent"].as_f64().unwrap();
    assert!(exponent > 0.5);
    assert_eq!(csv.lines().filter(|l| l.starts_with("modulus,")).count(), 5);
}

#[test]
fn seed_fixes_the_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"scenario": {"name": "paper_diag"}, "window": [-30, 30], "sampling": {"points": 8}}"#,
    );
    let read = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        assert_eq!(topeq(&["verify", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]), 0);
        (fs::read(out.join("summary.json")).unwrap(), fs::read(out.join("detail.csv")).unwrap())
    };
    let a = read("a", "5");
    assert_eq!(a, read("b", "5"));
    assert_ne!(a.1, read("c", "6").1);
}

#[test]
fn non_contractive_pair_is_a_numerical_failure() {
    let cfg = r#"{"scenario": {"name": "const_alpha"}, "window": [-20, 20],
                  "f": {"kind": "saturating", "amplitude": {"constant": 0.9}}}"#;
    let (code, summary, _, _t) = run("verify", cfg);
    assert_eq!(code, 3);
    assert_eq!(summary["error"]["kind"], "numerical");
}
