use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{}-{name}", std::process::id()))
}

fn gvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvd")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_ok_and_problems() {
    let out = gvd(&["validate", path(&fixture("golden.json"))]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 units, 2 clusters"));
    let bad = scratch("bad.json");
    let text = std::fs::read_to_string(fixture("golden.json")).unwrap().replacen("\"weight\": 1.0", "\"weight\": -1", 1);
    std::fs::write(&bad, text).unwrap();
    let out = gvd(&["validate", path(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("x1"));
    assert_eq!(code(&gvd(&["validate", "/nonexistent/instance.json"])), 1);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&gvd(&["frobnicate"])), 1);
    assert_eq!(code(&gvd(&["pipeline"])), 1);
    let g = fixture("golden.json");
    assert_eq!(code(&gvd(&["pipeline", path(&g), "--approach", "voronoi"])), 1);
    assert_eq!(code(&gvd(&["pipeline", path(&g), "--pin", "zero:x1"])), 1);
    assert_eq!(code(&gvd(&["--help"])), 0);
}

#[test]
fn pipeline_is_deterministic_under_a_seed() {
    let t = fixture("two_lobe.json");
    for approach in ["power", "shortest-path", "awvd"] {
        let a = gvd(&["pipeline", path(&t), "--approach", approach, "--seed", "7"]);
        let b = gvd(&["pipeline", path(&t), "--approach", approach, "--seed", "7"]);
        assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn missing_prerequisites_and_missed_targets_exit_with_two() {
    let g = fixture("golden.json");
    let out = gvd(&["pipeline", path(&g), "--approach", "anisotropic"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("reference"));
    // the golden star cannot be split into two connected halves of weight 2
    let out = gvd(&["pipeline", path(&g), "--approach", "shortest-path", "--epsilon", "0.1"]);
    assert_eq!(code(&out), 2);
    let written: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(written["summary"]["epsilonBalanced"], false);
}

#[test]
fn conflicting_constraints_exit_with_one() {
    let t = fixture("two_lobe.json");
    let out = gvd(&["pipeline", path(&t), "--pin", "1:42", "--exclude", "1:42"]);
    assert_eq!(code(&out), 1);
    let out = gvd(&["pipeline", path(&t), "--exclude", "0:nope"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn infeasible_pins_exit_with_two() {
    let g = fixture("golden.json");
    let out = gvd(&["pipeline", path(&g), "--approach", "awvd", "--pin", "0:x1", "--pin", "0:x2", "--pin", "0:x3"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_round_evaluate_chain_matches_pipeline() {
    let t = fixture("two_lobe.json");
    let solved = scratch("solved.json");
    let rounded = scratch("rounded.json");
    let out = gvd(&["solve", path(&t), "--approach", "power", "--out", path(&solved)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = gvd(&["round", path(&t), path(&solved), "--out", path(&rounded)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let piped = gvd(&["pipeline", path(&t), "--approach", "power"]);
    assert_eq!(std::fs::read(&rounded).unwrap(), piped.stdout);
    let eval = gvd(&["evaluate", path(&t), path(&rounded)]);
    assert_eq!(code(&eval), 0);
    let summary: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let full: serde_json::Value = serde_json::from_slice(&piped.stdout).unwrap();
    assert_eq!(summary, full["summary"]);
    let csv = gvd(&["evaluate", path(&t), path(&rounded), "--format", "csv"]);
    assert_eq!(String::from_utf8_lossy(&csv.stdout).lines().count(), 3);
}

#[test]
fn export_formats() {
    let t = fixture("two_lobe.json");
    let csv = gvd(&["pipeline", path(&t), "--format", "csv"]);
    assert_eq!(code(&csv), 0);
    assert_eq!(String::from_utf8_lossy(&csv.stdout).lines().count(), 31);
    let geo = gvd(&["pipeline", path(&t), "--format", "geojson"]);
    let g: serde_json::Value = serde_json::from_slice(&geo.stdout).unwrap();
    assert_eq!(g["type"], "FeatureCollection");
    let sp = gvd(&["pipeline", path(&t), "--approach", "shortest-path", "--format", "geojson"]);
    assert_eq!(code(&sp), 1);
}
