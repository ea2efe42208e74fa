use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    if !dir.exists() {
        return Vec::new();
    }
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect()
}

#[test]
fn design_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcsim(&["design"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("design.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "cell,user,gamma,gamma_hat,b_raw,b_hat,power,s_1,s_2,s_3"
    );
    assert_eq!(lines.count(), 8);
    assert!(!csv.contains('\r'));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    for key in ["command=design", "config_sha256=", "seed=1", "version=", "files=design.csv;correlations.csv"] {
        assert!(manifest.contains(key), "missing {key} in {manifest}");
    }
}

#[test]
fn missing_scenario_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run");
    let out = pcsim(&["reproduce", "fig3", "--scenario", "/nonexistent/scenario.toml"], &target);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));
    assert!(csv_files(&target).is_empty());
}

#[test]
fn malformed_scenario_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[network]\ncells = 2\nusers = \"four\"\npilot_len = 3\n").unwrap();
    let out = pcsim(&["design", "--scenario", path.to_str().unwrap()], &dir.path().join("run"));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("users"), "{err}");
}

#[test]
fn region_violation_quotes_sum_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.toml");
    fs::write(
        &path,
        "[network]\ncells = 1\nusers = 4\npilot_len = 2\n[targets]\ngamma = [[1.5, 1.5, 1.5, 1.5]]\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = pcsim(&["design", "--scenario", path.to_str().unwrap()], &run);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2.400000") && err.contains("budget 2.000000"), "{err}");
    assert!(csv_files(&run).is_empty());
}

#[test]
fn capacity_sweep_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcsim(
        &["capacity", "--n-range", "0:2", "--k-range", "4,10", "--eta-range", "0.01:10:3", "--scope", "network"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("capacity.csv")).unwrap();
    assert!(csv.starts_with("n,k,gamma_max,budget,scope\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.contains(",network\n"));
    let eta = fs::read_to_string(dir.path().join("capacity_eta.csv")).unwrap();
    assert_eq!(eta.lines().count(), 10);
}

#[test]
fn sinr_with_trials_fills_monte_carlo_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcsim(&["sinr", "--trials", "200", "--seed", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sinr.csv")).unwrap();
    assert!(csv.starts_with("cell,user,m,n,theta_closed,theta_asymptotic,theta_mc,ci,gamma,satisfied\n"));
    assert!(!csv.contains("nan"));
}

#[test]
fn attacker_power_above_bob_power_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loud.toml");
    fs::write(
        &path,
        "[network]\ncells = 2\nusers = 4\neves = 1\npilot_len = 3\n[gains]\neve_power_db = 3\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = pcsim(&["attack-audit", "--scenario", path.to_str().unwrap()], &run);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eve-power-bound"));
    assert!(csv_files(&run).is_empty());
}
