use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nirenberg"));
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_reports_index_of_height_function() {
    let dir = TempDir::new().unwrap();
    let out = run(&["analyze"], Some("k = \"x4 + 2\"\n"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("analyze.json"));
    assert_eq!(r["index"], -2);
    assert_eq!(r["in_a"], true);
    assert_eq!(r["critical_points"].as_array().unwrap().len(), 2);
}

#[test]
fn constant_curvature_is_degenerate() {
    let dir = TempDir::new().unwrap();
    let out = run(&["analyze"], Some("k = \"2\"\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_to_string(dir.path().join("analyze.txt")).unwrap().contains("constant"));
}

#[test]
fn rotation_block_keeps_index() {
    let dir = TempDir::new().unwrap();
    let cfg = "k = \"x4 + 2\"\n[[rotation]]\ni = 0\nj = 3\nangle = 0.7\n[[rotation]]\ni = 1\nj = 2\nangle = 1.1\n";
    let out = run(&["analyze"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("analyze.json"))["index"], -2);
}

#[test]
fn config_errors_exit_one_with_location() {
    let dir = TempDir::new().unwrap();
    let out = run(&["analyze"], Some("k = \"x4 + 2\"\n[solver]\nrtoll = 1\n"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3, column 1"), "{err}");

    let out = run(&["analyze"], Some("k = \"x4 + \"\n"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn validate_passes_hard_identities() {
    let dir = TempDir::new().unwrap();
    let cfg = "[validate]\nspectral_L = 16\nspectral_samples = 4\n";
    let out = run(&["validate"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json(&dir.path().join("validate.json"));
    let checks = r["checks"].as_array().unwrap();
    let get = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap().clone();
    assert_eq!(get("bubble-energy")["status"], "pass");
    assert_eq!(get("flux-limit")["status"], "pass");
    assert!(checks.iter().filter(|c| c["hard"] == true).all(|c| c["status"] == "pass"));
}

#[test]
fn failed_hard_identity_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = "[validate]\nspectral_L = 8\nspectral_samples = 2\nenergy_rtol = 0.0\nsquare_rtol = 0.0\n";
    let out = run(&["validate"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn constant_curvature_branch_does_not_concentrate() {
    let dir = TempDir::new().unwrap();
    let cfg = "k = \"1\"\nL_zonal = 32\nzonal = true\n[schedule]\ntau_start = 0.5\ntau_end = 0.05\nsteps = 4\n";
    let out = run(&["continue"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let branch = json(&dir.path().join("branch_0.json"));
    let points = branch["points"].as_array().unwrap();
    assert_eq!(points.len(), 5);
    assert!(points.iter().all(|p| p["diagnostics"]["concentrating"] == false));
    let csv = fs::read_to_string(dir.path().join("branch_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(fs::read_to_string(dir.path().join("comparison.txt")).unwrap().contains("no concentration"));
}

#[test]
fn continuation_is_reproducible_and_reportable() {
    let cfg = "L_zonal = 128\nzonal = true\n[schedule]\ntau_start = 0.5\ntau_end = 0.02\nsteps = 12\n";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let out = run(&["continue"], Some(cfg), d.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["branch_0.csv", "branch_0.json", "comparison.txt", "log_m_vs_log_tau.dat", "peak_distance_vs_tau.dat"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let series = fs::read_to_string(a.path().join("log_m_vs_log_tau.dat")).unwrap();
    assert_eq!(series.lines().filter(|l| !l.starts_with('#')).count(), 13);
    assert!(series.lines().skip(1).all(|l| l.split_whitespace().count() == 2));

    let before = fs::read(a.path().join("comparison.txt")).unwrap();
    fs::remove_file(a.path().join("comparison.txt")).unwrap();
    let out = run(&["report"], Some(cfg), a.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(a.path().join("comparison.txt")).unwrap(), before);
    assert!(String::from_utf8_lossy(&before).contains("nearer candidate"));
}

#[test]
fn predict_matches_closed_form_rate() {
    let dir = TempDir::new().unwrap();
    let out = run(&["predict"], Some("[predict]\ntaus = [0.02]\n"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let preds = json(&dir.path().join("predict.json"));
    let t = preds[0]["t_star"][0].as_f64().unwrap();
    assert!((t * (2.0f64 * 0.02).sqrt() - 1.0).abs() < 1e-10, "{t}");
}

#[test]
fn solve_and_solver_failure_codes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["solve", "--L", "8"], None, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("solve.json"))["state"]["status"], "converged");

    let out = run(&["solve", "--zonal", "--L", "64"], Some("[solver]\nmax_steps = 1\n"), dir.path());
    assert_eq!(out.status.code(), Some(4));
}
