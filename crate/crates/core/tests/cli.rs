//! End-to-end checks of the `phasepop` binary: exit codes, emitted files,
//! and the CSV contracts, driven through the sample configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasepop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_report(dir: &Path) -> Vec<(String, String)> {
    let text = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let (k, v) = line.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn report_value(report: &[(String, String)], key: &str) -> String {
    report
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("missing report key {key}"))
        .1
        .clone()
}

#[test]
fn spectral_run_succeeds_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("spectral_const.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("spectral"), "summary line missing: {stdout}");
    for name in ["spectral.csv", "report.csv", "plot.gp"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report = read_report(dir.path());
    let lambda: f64 = report_value(&report, "lambda_star").parse().unwrap();
    assert!((lambda + 0.5).abs() < 1e-8, "lambda_star = {lambda}");
    assert_eq!(report_value(&report, "method"), "quadrature_bisection");

    // CSV contract: comma separator, \n line endings, header row, 17
    // significant digits on every numeric cell
    let text = std::fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,K_lambda");
    for line in lines {
        for cell in line.split(',') {
            let mantissa = cell
                .trim_start_matches('-')
                .split('e')
                .next()
                .unwrap()
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "cell {cell} not 17 significant digits");
            let _: f64 = cell.parse().unwrap();
        }
    }
}

#[test]
fn quiet_flag_suppresses_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("spectral_const.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_config_exits_1() {
    let out = run_cli(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_assumption_exits_1_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("spectral_const.toml"))
        .unwrap()
        .replace(
            "[model.gamma1]\nform = \"constant\"\nvalue = 1.0",
            "[model.gamma1]\nform = \"constant\"\nvalue = 0.0",
        );
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run_cli(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("strictly positive"), "{stderr}");
}

#[test]
fn numerical_failure_exits_2() {
    // the n = 1 lower envelope of s*y is identically zero: no root exists
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("rank_n_envelope.toml"))
        .unwrap()
        .replace("n = 4", "n = 1");
    let cfg = dir.path().join("trivial.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run_cli(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no real root"), "{stderr}");
}

#[test]
fn rank_n_envelope_run_reports_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("rank_n_envelope.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(dir.path());
    assert_eq!(report_value(&report, "method"), "rank_n_determinant");
    assert_eq!(report_value(&report, "rank"), "9.0000000000000000e0");
    let lambda: f64 = report_value(&report, "lambda_star").parse().unwrap();
    assert!(lambda < 0.0);
}

#[test]
fn generator_eig_run_matches_discrete_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("generator_eig.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(dir.path());
    let eig: f64 = report_value(&report, "dominant_eigenvalue").parse().unwrap();
    // 200-cell discrete Perron root of the decoupled scenario
    assert!((eig + 0.485167).abs() < 1e-3, "eig = {eig}");
}

#[test]
fn aeg_run_reports_consistent_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("aeg_irreducible.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(dir.path());
    assert_eq!(report_value(&report, "verdict"), "AEG-consistent");
    assert!(dir.path().join("observables_a.csv").exists());
    assert!(dir.path().join("observables_b.csv").exists());
}

#[test]
fn report_audit_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("report_audit.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(dir.path());
    assert_eq!(report_value(&report, "birth_corner_ok"), "true");
    assert_eq!(report_value(&report, "c1_at_zero_ok"), "true");
    assert_eq!(report_value(&report, "c2_at_m_ok"), "true");
    // mB + C = 1*1 + 1 = 2 vs min(inf(mu+c1), inf c2) = min(1.2, 1) = 1
    let lhs: f64 = report_value(&report, "extinction_lhs").parse().unwrap();
    let rhs: f64 = report_value(&report, "extinction_rhs").parse().unwrap();
    assert_eq!(report_value(&report, "extinction_holds"), "false");
    assert!((lhs - 2.0).abs() < 1e-12 && (rhs - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_run_emits_profiles_and_observables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        config_path("simulate_decoupled.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "observables.csv",
        "profile_0.csv",
        "profile_10.csv",
        "profile_20.csv",
        "profile_40.csv",
        "report.csv",
        "plot.gp",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let obs = std::fs::read_to_string(dir.path().join("observables.csv")).unwrap();
    assert!(obs.starts_with("t,mass1,mass2,total\n"));
    let report = read_report(dir.path());
    let rate: f64 = report_value(&report, "growth_rate").parse().unwrap();
    assert!((rate + 0.5).abs() < 2e-2, "rate = {rate}");
    let profile = std::fs::read_to_string(dir.path().join("profile_40.csv")).unwrap();
    assert!(profile.starts_with("s,u1,u2\n"));
    assert_eq!(profile.lines().count(), 201);

    // the simulate plot script renders mass-vs-time and the final profile
    let script = std::fs::read_to_string(dir.path().join("plot.gp")).unwrap();
    assert_eq!(script.matches("set output").count(), 2, "{script}");
    assert!(script.contains("observables.csv"));
    assert!(script.contains("profile_40.csv"));
    assert!(script.contains("logscale y"));
}
