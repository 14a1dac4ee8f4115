use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn mflq(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mflq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("MFLQ_OUT_DIR")
        .output()
        .unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

fn error_of(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str::<serde_json::Value>(&text).unwrap()["error"].clone()
}

#[test]
fn diagnose_scalar_shift() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("scalar.json");
    let out = mflq(&["diagnose", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let rep: serde_json::Value = serde_json::from_str(&text).unwrap();
    let shift = rep["abar_plus_g_shift"].as_f64().unwrap();
    assert!((shift + 0.5873).abs() < 5e-4, "{shift}");
    assert_eq!(rep["case_tag"], "hamiltonian");
    assert_eq!(rep["verdict"], true);
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let cfg = scenario("scalar.json");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--agents", "7", "--steps", "400", "--seed", "5"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(mflq(&args, a.path()).status.success());
    assert!(mflq(&args, b.path()).status.success());
    for f in ["per_time.csv", "summary.csv", "samples.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
    let summary = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("N,j_soc_mean,j_soc_se,consistency_sup,consistency_int,epsilon_hat,epsilon_se\n"));
    assert_eq!(column(&summary, "N"), vec![7.0]);
}

#[test]
fn unknown_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("scalar.json")).unwrap().replace("\"R\"", "\"Rr\"");
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let out = mflq(&["solve", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err["kind"], "UnknownField");
    assert!(err["message"].as_str().unwrap().contains("Rr"));
}

#[test]
fn missing_config_file_is_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = mflq(&["solve", "--config", "/nonexistent/x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(error_of(&out)["kind"].is_string());
}

#[test]
fn usage_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = mflq(&["frobnicate", "--config", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "UsageError");
}

#[test]
fn infeasible_finite_horizon_reports_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("scalar_finite.json"))
        .unwrap()
        .replace("\"finite\": 2.5", "\"finite\": 10.0");
    assert!(text.contains("10.0"));
    let cfg = dir.path().join("long.json");
    std::fs::write(&cfg, text).unwrap();
    let out = mflq(&["solve", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "BlowUp");
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("scalar.json");
    let status = Command::new(env!("CARGO_BIN_EXE_mflq"))
        .args(["diagnose", "--quiet", "--config", cfg.to_str().unwrap()])
        .env("MFLQ_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn planar_mean_first_falls_then_rises_and_settles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("planar.json");
    assert!(mflq(&["solve", "--config", cfg.to_str().unwrap()], dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("meanfield.csv")).unwrap();
    let x2 = column(&text, "xbar_2");
    let x1 = column(&text, "xbar_1");
    let (kmin, min) = x2.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (k, v)| if v < a.1 { (k, v) } else { a });
    assert!(kmin > 0 && kmin < x2.len() - 1);
    assert!(min < *x2.last().unwrap() - 0.5);
    assert!((x2.last().unwrap() + 15.0 / 7.0).abs() < 1e-3, "{}", x2.last().unwrap());
    assert!((x1.last().unwrap() - 2.5 / 7.0).abs() < 1e-3, "{}", x1.last().unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(report["rho_integrable"], true);
}

#[test]
fn compare_legacy_representation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("legacy.json");
    assert!(mflq(&["compare", "--config", cfg.to_str().unwrap()], dir.path()).status.success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    assert!(rep["kbar_minus_pi_plus_p"].as_f64().unwrap() < 1e-8);
    assert!(rep["phi_minus_s"].as_f64().unwrap() < 1e-8);
}

#[test]
fn singular_scenario_not_integrable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("marginal.json");
    assert!(mflq(&["solve", "--config", cfg.to_str().unwrap()], dir.path()).status.success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(rep["rho_integrable"], false);
    assert_eq!(rep["s0"][0].as_f64().unwrap(), 0.0);
}
