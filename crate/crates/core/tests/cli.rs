use std::fs;
use std::process::Command;

const CONFIG: &str = r#"[model]
kind = "reduced-linear"

[simulation]
dt = 0.01
t_end = 4.0
seed = 5

[analysis]
stride = 25
burn_in = 1.0

[queries.y_to_x]
cause = ["y"]
effect = ["x"]
"#;

fn aci() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aci"))
}

#[test]
fn analyze_writes_artifacts_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let status = aci()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .args(["--seed", "9", "--exact-cir", "--lag-cap", "200"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let meta = fs::read_to_string(out.join("run.meta")).unwrap();
    assert!(meta.contains("seed=9"));
    assert!(meta.contains("lag_cap=200"));
    assert!(meta.contains("exact_cir=true"));
    let csv = fs::read_to_string(out.join("cir_y_to_x.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("tau_b_exact"));
    assert!(out.join("y_to_x.svg").exists());
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let status = aci()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--dt", "0.02"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x,y");
    assert_eq!(text.lines().count(), 1 + 201);
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("stride = 25", "stride = 25\nstrid = 3")).unwrap();
    let out = aci().args(["analyze", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains(":11:"), "{err}");
}

#[test]
fn unknown_preset_and_mode_rejected() {
    assert!(!aci().args(["reproduce", "nope"]).output().unwrap().status.success());
    let out = aci()
        .args(["reproduce", "reduced-linear", "--conditioning-mode", "sideways"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
