//! The `effcov` binary: exit codes, warnings, and simulate → estimate.

use std::path::Path;
use std::process::{Command, Output};

use effcov::estimators::Method;
use effcov::io::ReportDocument;
use effcov::simlab::McResult;

fn effcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effcov"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("run effcov")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_PANEL: &str = "experiment_id,arm,Y,S\n\
    a,0,1.0,0.5\na,0,1.4,0.1\na,1,2.0,0.9\na,1,2.2,1.3\n\
    b,0,0.2,0.3\nb,0,0.4,-0.1\nb,1,0.1,0.6\nb,1,0.9,0.2\n\
    c,0,1.1,1.0\nc,0,0.7,0.4\nc,1,1.9,1.8\nc,1,1.5,1.0\n";

#[test]
fn help_and_listing_succeed() {
    assert_eq!(code(&effcov(&["--help"])), 0);
    let out = effcov(&["scenarios"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["appendix-figure-setup", "appendix-no-direct", "appendix-direct", "npiv-quadratic"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn exit_codes_by_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write(&panel, SMALL_PANEL);

    assert_eq!(code(&effcov(&["estimate", "--input", p(&panel), "--method", "bogus"])), 2);
    assert_eq!(code(&effcov(&["estimate", "--input", p(&dir.path().join("nope.csv")), "--method", "naive"])), 4);
    assert_eq!(code(&effcov(&["estimate", "--input", p(&panel), "--method", "tc"])), 2);

    let bad_omega = dir.path().join("omega.csv");
    write(&bad_omega, "Y,S\n1,2\n2,1\n");
    let out = effcov(&["estimate", "--input", p(&panel), "--method", "limlk", "--omega", p(&bad_omega)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("positive definite"), "{}", stderr(&out));

    // Identical effects in every experiment: Λ_SS = 0 is a numerical failure.
    let flat = dir.path().join("flat.csv");
    write(&flat, "experiment_id,arm,Y,S\na,0,0,0\na,1,1,1\nb,0,0,0\nb,1,1,1\n");
    assert_eq!(code(&effcov(&["estimate", "--input", p(&flat), "--method", "naive"])), 3);

    let out = effcov(&["simulate", "--scenario", "appendix-direct", "--replications", "0", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = effcov(&["simulate", "--scenario", "no-such-preset", "--out", p(dir.path())]);
    assert_ne!(code(&out), 0);
}

#[test]
fn naive_with_omega_prints_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write(&panel, SMALL_PANEL);
    let out = effcov(&["estimate", "--input", p(&panel), "--method", "naive", "--omega", "within"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning:"), "{}", stderr(&out));
}

#[test]
fn text_report_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    let report = dir.path().join("report.txt");
    write(&panel, SMALL_PANEL);
    let out = effcov(&["estimate", "--input", p(&panel), "--method", "jackknife", "--format", "text", "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let saved = std::fs::read(&report).unwrap();
    assert_eq!(saved, out.stdout);
    assert!(String::from_utf8(saved).unwrap().contains("generated_at: 2023-11-14T22:13:20Z"));
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write(&panel, SMALL_PANEL);
    let out = effcov(&["estimate", "--input", p(&panel), "--method", "tc", "--omega", "within"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let doc = ReportDocument::from_json(&text).unwrap();
    assert_eq!(doc.to_json(), text);
    assert_eq!(doc.config.method, Method::Tc);
}

/// One simulated panel, estimated with the known Ω, lands inside the Monte
/// Carlo spread of the same scenario.
#[test]
fn simulated_panel_estimate_is_consistent_with_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let out = effcov(&[
        "simulate", "--scenario", "appendix-no-direct", "--experiments", "100", "--n", "1000",
        "--replications", "100", "--methods", "tc,kclass", "--write-panel", "--out", p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "scenario.toml", "mc_table.csv", "mc_draws.csv", "mc_result.json", "scatter_raw.csv",
        "scatter_whitened.csv", "reference_lines.csv", "omega.csv", "panel_units.csv",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let mc: McResult = serde_json::from_slice(&std::fs::read(out_dir.join("mc_result.json")).unwrap()).unwrap();
    let tc = mc.summary(Method::Tc).unwrap();
    let (mean, sd) = (tc.mean.as_ref().unwrap(), tc.sd.as_ref().unwrap());

    let out = effcov(&[
        "estimate", "--input", p(&out_dir.join("panel_units.csv")), "--method", "tc",
        "--omega", p(&out_dir.join("omega.csv")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = ReportDocument::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    for (j, w) in doc.weights.values.iter().enumerate() {
        assert!((w - mean[j]).abs() < 5.0 * sd[j], "weight {j}: {w} vs {} ± {}", mean[j], sd[j]);
    }

    // The echoed scenario reproduces the run.
    let again = dir.path().join("again");
    let out = effcov(&[
        "simulate", "--scenario", p(&out_dir.join("scenario.toml")), "--methods", "tc,kclass", "--out", p(&again),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read(out_dir.join("mc_result.json")).unwrap(),
        std::fs::read(again.join("mc_result.json")).unwrap()
    );
}
