use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coarse-osc"))
}

#[test]
fn unknown_task_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--set", "task=bogus", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("\"path\":\"task\""));
    assert!(!out.exists());
}

#[test]
fn unknown_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[model]\nbeta = 0.1\ngamma = 2\n").unwrap();
    let o = bin().arg("freq-sweep").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model"), "{err}");
}

#[test]
fn freq_sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[freq_sweep]\nphi_min = -0.1\nphi_max = 1.0\npoints = 3\n").unwrap();
    let o = bin()
        .arg("freq-sweep")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("freq-sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "phi,state,angular_frequency,amplitude");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains("quiescent"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("freq-sweep.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["task"], "freq-sweep");
    assert_eq!(meta["config"]["freq_sweep"]["points"], 3);
    assert!(meta["files"]["freq-sweep.csv"]["description"].is_string());
}

#[test]
fn identical_runs_write_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let o = bin()
            .args(["simulate", "--seed", "7", "--set", "model.n_osc=40", "--set", "simulate.duration=3"])
            .args(["--set", "simulate.random_initial=true", "--out"])
            .arg(dir.path().join(run))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/simulate.csv")).unwrap();
    let b = fs::read(dir.path().join("b/simulate.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reproduce_rejects_out_of_range_experiments() {
    let o = bin().args(["reproduce", "13"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_quick_fixed_point_emits_the_defect_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["reproduce", "5", "--quick", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("exp5/fixed-point/fixed-point-defect.csv")).unwrap();
    assert!(csv.starts_with("i,mu,dx,dy\n"));
    assert_eq!(csv.lines().count(), 61);
}

#[test]
fn single_oscillator_branch_reports_its_folds() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["branch", "--set", "model.single_oscillator=true", "--set", "model.n_osc=1"])
        .args(["--set", "model.beta=0.0", "--set", "numerics.q=0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("branch.meta.json")).unwrap()).unwrap();
    let folds = meta["summary"]["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 2, "{meta}");
    let csv = fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("omega,a0,b0,"));
}

#[test]
fn branch_without_bifurcations_still_writes_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["branch", "--set", "model.n_osc=30", "--set", "numerics.r=1"])
        .args(["--set", "continuation.max_points=3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("branch-bifurcations.csv")).unwrap();
    assert_eq!(csv.trim(), "kind,omega,a0,a1,b0,b1,distance_to_unity,theta");
}
