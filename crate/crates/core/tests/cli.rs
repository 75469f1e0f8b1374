use std::fs;
use std::path::{Path, PathBuf};

use kdyn::cli::{self, EXIT_INPUT, EXIT_OK, EXIT_VIOLATION};

const EXAMPLE_FLOW: &str = r#"{"n": 3, "time": "continuous", "generator": [[2,0,0],[0,-1,1],[0,0,-1]], "gridResolution": 4, "seed": 7}"#;

fn scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["kdyn"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn decompose_reports_chamber_and_parts() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "s.json", EXAMPLE_FLOW);
    let (code, out, _) = run(&["decompose", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["H"], serde_json::json!([2.0, -1.0, -1.0]));
    assert_eq!(v["mu"], 3.0);
    assert_eq!(v["diagonalizable"], false);
    assert_eq!(v["additive"]["N"][1][2], 1.0);
}

#[test]
fn morse_writes_report_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "s.json", EXAMPLE_FLOW);
    let out_dir = dir.path().join("out");
    let (code, out, _) = run(&["morse", "--scenario", s.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("morse.json")).unwrap()).unwrap();
    assert_eq!(v["cosets"].as_array().unwrap().len(), 6);
    assert_eq!(v["recurrentPoints"].as_array().unwrap().len(), 12);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "s.json", EXAMPLE_FLOW);
    let (c1, a, _) = run(&["simulate", "--scenario", s.to_str().unwrap()]);
    let (c2, b, _) = run(&["simulate", "--scenario", s.to_str().unwrap()]);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(a, b);
    assert!(a.starts_with("index,a,b,c,forward,backward\n"));
    assert_eq!(a.lines().count(), 1 + 64);
    let (_, c, _) = run(&["simulate", "--scenario", s.to_str().unwrap(), "--grid", "3"]);
    assert_eq!(c.lines().count(), 1 + 27);
}

#[test]
fn simulate_trajectory_from_k0() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"n": 2, "time": "discrete", "generator": [[2.718281828459045, 0], [0, 0.36787944117144233]],
        "k0": [[0.7071067811865476, -0.7071067811865476], [0.7071067811865476, 0.7071067811865476]], "horizon": 5}"#;
    let s = scenario(dir.path(), "s.json", body);
    let (code, out, _) = run(&["simulate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "time,k00,k01,k10,k11");
    assert_eq!(lines.len(), 7);
}

#[test]
fn verify_passes_on_example_and_degenerate_flows() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "s.json", EXAMPLE_FLOW);
    let (code, out, _) = run(&["verify", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
    assert!(!out.contains("FAIL"));

    let s = scenario(dir.path(), "z.json", r#"{"n": 2, "time": "discrete", "generator": [[-1, -1], [0, -1]]}"#);
    let (code, out, _) = run(&["verify", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
}

#[test]
fn verify_flags_an_impossible_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"n": 3, "time": "continuous", "generator": [[2,0,0],[0,-1,1],[0,0,-1]],
        "tolerances": {"det": 1e-9, "orth": 1e-19, "fix": 1e-18, "recon": 1e-20}}"#;
    let s = scenario(dir.path(), "s.json", body);
    let (code, out, _) = run(&["verify", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, EXIT_VIOLATION, "{out}");
    assert!(out.contains("FAIL iwasawa"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = scenario(dir.path(), "u.json", r#"{"n": 2, "time": "discrete", "generator": [[1,0],[0,1]], "bogus": 1}"#);
    let (code, _, err) = run(&["decompose", "--scenario", unknown.to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("bogus"));

    let singular = scenario(dir.path(), "d.json", r#"{"n": 2, "time": "discrete", "generator": [[2,0],[0,1]]}"#);
    assert_eq!(run(&["decompose", "--scenario", singular.to_str().unwrap()]).0, EXIT_INPUT);

    let zero = scenario(dir.path(), "z.json", r#"{"n": 2, "time": "continuous", "generator": [[0,1],[0,0]]}"#);
    assert_eq!(run(&["morse", "--scenario", zero.to_str().unwrap()]).0, EXIT_INPUT);

    let big = scenario(dir.path(), "b.json", r#"{"n": 4, "time": "continuous", "generator": [[1,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,-1]]}"#);
    assert_eq!(run(&["simulate", "--scenario", big.to_str().unwrap()]).0, EXIT_INPUT);

    assert_eq!(run(&["decompose"]).0, EXIT_INPUT);
    assert_eq!(run(&["decompose", "--scenario", "/nonexistent/s.json"]).0, EXIT_INPUT);
    assert_eq!(run(&["frobnicate"]).0, EXIT_INPUT);
}
