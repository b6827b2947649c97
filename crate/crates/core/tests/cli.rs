use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_three-spheres"));
    c.env_remove("THREE_SPHERES_OUT");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn bounds_prints_classical_weight() {
    let o = bin().args(["bounds", "--n", "2", "--p", "2", "--radii", "1,2,4"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mode"], "classical_n");
    assert!((v["lambda"].as_f64().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn bounds_rejects_regime_mismatch() {
    let o = bin()
        .args(["bounds", "--n", "2", "--p", "4", "--radii", "1,2,4", "--mode", "border_n", "--c", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_is_byte_identical_and_honours_env_dir() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = bin()
            .env("THREE_SPHERES_OUT", dir)
            .args(["run", "--config"])
            .arg(config("hadamard-classical.json"))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("PASS"));
    }
    for f in ["hadamard-classical.json", "hadamard-classical.csv", "hadamard-classical.txt", "hadamard-classical-profiles.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
        assert!(!x.contains(&b'\r'));
    }
    let csv = fs::read_to_string(a.path().join("hadamard-classical.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("r1,r2,r3,lambda,lambda_star,margin,pass"));
}

#[test]
fn run_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("hadamard-classical.json")).unwrap();
    let bad = text.replacen("\"seed\"", "\"colour\": 1, \"seed\"", 1);
    let path = dir.path().join("bad.json");
    fs::write(&path, bad).unwrap();
    let o = bin().env("THREE_SPHERES_OUT", dir.path()).args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn fdm_profile_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin().args(["fdm", "--h", "0.0625", "--data", "saddle", "--out"]).arg(d).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["report"]["residual_history"].as_array().is_some());
    assert!(fs::read_to_string(d.join("fdm.csv")).unwrap().starts_with("x,y,u\n"));

    let prof = d.join("prof.csv");
    let o = bin()
        .args(["profile", "--radii", "0.25,0.5,0.75", "--from"])
        .arg(d.join("fdm.csv"))
        .arg("--out")
        .arg(&prof)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&prof).unwrap().starts_with("r,M,m\n"));

    let verify = |extra: &[&str]| {
        bin()
            .args(["verify", "--triple", "0.25,0.5,0.75", "--profile"])
            .arg(&prof)
            .args(extra)
            .output()
            .unwrap()
    };
    // M(r) = r^2 for the saddle, so the classical check passes
    assert_eq!(verify(&[]).status.code(), Some(0));
    // a small constant puts λ near 1, which r^2 violates
    let o = verify(&["--mode", "border_n", "--c", "0.01", "--b1", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn radial_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["radial", "--kind", "extremal", "--b1", "1", "--sign", "minus", "--steps", "64", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(meta["provenance"], "exact_extremal_drift");
    let csv = fs::read_to_string(dir.path().join("radial.csv")).unwrap();
    assert_eq!(csv.lines().count(), 66);
}

#[test]
fn calibrate_reports_constant() {
    let dir = tempfile::tempdir().unwrap();
    let prof = dir.path().join("p.csv");
    fs::write(&prof, "r,M,m\n1,0,0\n2,0.6931471805599453,0\n4,1.3862943611198906,0\n").unwrap();
    let o = bin()
        .args(["calibrate", "--mode", "border_n", "--b1", "1", "--triple", "1,2,4", "--profile"])
        .arg(&prof)
        .arg("--holdout")
        .arg(&prof)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["calibration"]["c_min"].as_f64().unwrap() > 0.0);
    assert_eq!(v["holdout"]["passed"], true);
}
