use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn camp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn condense_reports_default_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["condense"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = read_json(&dir.path().join("condense.json"));
    assert_eq!(v["num_constraints"], 1944);
    assert_eq!(v["num_vars"], 12);
    assert_eq!(v["state_checks"], 160);
    assert!(stdout(&o).contains("n_c=1944"));
}

#[test]
fn shipped_config_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/double_integrator.json");
    let o = camp(&["condense", "--config", cfg, "--set", "horizon=5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("condense.json"))["num_vars"], 5);
}

#[test]
fn kappa_prints_both_bounds_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["kappa", "--set", "validation_samples=100", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("kappa=") && text.contains("kappa_hat="));
    assert!(text.contains("violations=0"));
    let v = read_json(&dir.path().join("kappa.json"));
    assert!(v["kappa_hat"]["kappa"].as_f64().unwrap() > 0.0);
    assert_eq!(v["validation"]["violations"], 0);
}

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["simulate", "--steps", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("step,x_0,x_1,u_0,n_kept,n_removed"));
    assert_eq!(lines.len(), 8);
}

#[test]
fn compare_passes_on_default_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["compare", "--steps", "25"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS max_dev="));
    let v = read_json(&dir.path().join("compare.json"));
    assert_eq!(v["steps_compared"], 25);
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["bench", "--steps", "20", "--set", "repetitions=1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = read_json(&dir.path().join("summary.json"));
    assert_eq!(v["verdict"], "PASS");
    assert_eq!(v["n_c"], 1944);
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["condense", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(camp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(camp(&["condense", "--steps", "many"], dir.path()).status.code(), Some(1));
    assert_eq!(camp(&["condense", "--config", "/nonexistent.json"], dir.path()).status.code(), Some(1));

    let o = camp(&["condense", "--set", "stage_ellipses.7.tangent_count=4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage_ellipses.7.tangent_count"), "{}", stderr(&o));

    let o = camp(&["condense", "--set", "horizonn=4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("horizonn"));

    let o = camp(&["condense", "--set", "horizon=\"long\""], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("horizon"));

    // indefinite ellipse shape
    let o = camp(&["condense", "--set", "terminal_ellipses.1.shape=[[0.1,0.7],[0.7,0.97]]"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ellipse"), "{}", stderr(&o));
}

#[test]
fn infeasible_start_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["simulate", "--steps", "3", "--set", "x0=[50,50]"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = camp(&["compare", "--steps", "3", "--set", "x0=[50,50]"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unsound_kappa_override_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = camp(&["compare", "--steps", "60", "--kappa", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("FAIL"));

    let o = camp(&["kappa", "--kappa", "1", "--set", "validation_samples=100"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(read_json(&dir.path().join("kappa.json"))["validation"]["violations"].as_u64().unwrap() > 0);

    assert_eq!(camp(&["compare", "--kappa", "-1"], dir.path()).status.code(), Some(1));
}
