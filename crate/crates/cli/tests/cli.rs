use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_greeks-dk"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_BS: &str = r#"{
  "model": { "type": "black_scholes", "lambda0": [100.0] },
  "payoff": { "type": "put", "strike": 100.0 },
  "ell": { "profile": "epanechnikov", "radius": 25.0 },
  "estimator": { "delta": "auto" },
  "kernel_K": { "name": "epanechnikov", "order": 2 },
  "kernel_H": { "name": "epanechnikov", "order": 2 },
  "bandwidth": { "method": "analytic" },
  "sweep": { "Ns": [500, 1000, 2000, 4000], "replications": 3, "seed": 5 },
  "outputs": "unused"
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn kernels_verify_reports_order() {
    let o = run(&["kernels", "verify", "epanechnikov", "2"]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verified_order"], 2);

    let o = run(&["kernels", "verify", "quartic", "4"]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verified_order"], 4);
    assert!(v["moments"][4].as_f64().unwrap().abs() > 1e-3);
}

#[test]
fn kernels_verify_rejects_unknown_name() {
    let o = run(&["kernels", "verify", "gaussian", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown kernel"));
}

#[test]
fn smoke_sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.json");
    let o = run(&["sweep", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sweep.csv", "aggregate.csv", "run.json", "mse_beta_tilde.dat", "mse_fd.dat"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(sweep.as_bytes());
    let recs: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(recs.len(), 2);
    // Z = λ with a linear payoff: finite differences are exact
    let fd = recs.iter().find(|r| &r[0] == "fd").unwrap();
    let beta: f64 = fd[6].parse().unwrap();
    assert!((beta - 1.0).abs() < 1e-9, "fd = {beta}");
    let kernel = recs.iter().find(|r| &r[0] == "beta_tilde").unwrap();
    assert!(kernel[6].parse::<f64>().unwrap().is_finite());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_BS);
    let mut outputs = Vec::new();
    for t in ["1", "3"] {
        let out = dir.path().join(format!("t{t}"));
        let o = run(&["--threads", t, "sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((
            std::fs::read(out.join("sweep.csv")).unwrap(),
            std::fs::read(out.join("aggregate.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_BS);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["run", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "6"]).status.success());
    let ja: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("estimate.json")).unwrap()).unwrap();
    let jb: serde_json::Value = serde_json::from_slice(&std::fs::read(b.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(ja["estimates"].as_array().unwrap().len(), 5);
    assert_ne!(ja["estimates"][0]["beta_hat"], jb["estimates"][0]["beta_hat"]);
    let truth = ja["true_greek"][0].as_f64().unwrap();
    assert!((truth + 0.3631693).abs() < 1e-6);
}

#[test]
fn clt_needs_enough_replications() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_BS);
    let o = run(&["clt", cfg.to_str().unwrap(), "--reps", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("200"));
}

#[test]
fn bad_config_is_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_BS.replace("[500, 1000", "[1000, 500"));
    let o = run(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config.json") && err.contains("strictly increasing"), "{err}");
    let missing = run(&["run", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));
}
