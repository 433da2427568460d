mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn vh(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vh"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read(dir: &TempDir, name: &str) -> String {
    std::fs::read_to_string(dir.path().join(name)).unwrap()
}

/// Data rows of a CSV output, without the config line and header.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn charfn_starts_at_one_and_round_trips() {
    let a = TempDir::new().unwrap();
    let out = vh(&["charfn"], &config("rough.json"), a.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let first = read(&a, "charfn.csv");
    assert_eq!(rows(&first)[0], ["0", "1", "0"]);

    let b = TempDir::new().unwrap();
    let out = vh(&["charfn"], &a.path().join("charfn.csv"), b.path());
    assert!(out.status.success());
    assert_eq!(first, read(&b, "charfn.csv"));
}

#[test]
fn classical_prices_match_the_closed_form_fixture() {
    let dir = TempDir::new().unwrap();
    let out = vh(&["price"], &config("classical.json"), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let fx = common::fixtures();
    let got = rows(&read(&dir, "prices.csv"));
    assert_eq!(got.len(), fx.calls_theta.len());
    for (row, want) in got.iter().zip(&fx.calls_theta) {
        let strike: f64 = row[0].parse().unwrap();
        let price: f64 = row[1].parse().unwrap();
        assert!((strike - want.strike).abs() < 1e-12);
        assert!((price - want.price).abs() < 1e-6, "K = {strike}");
        assert!(row[2].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn simulate_output_ignores_thread_count() {
    let runs: Vec<TempDir> = ["1", "3"]
        .iter()
        .map(|t| {
            let dir = TempDir::new().unwrap();
            let out = vh(
                &["simulate", "--threads", t, "--seed", "5"],
                &config("rough.json"),
                dir.path(),
            );
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stdout)
            );
            dir
        })
        .collect();
    for name in ["paths.bin", "summary.csv", "simulate.json"] {
        let a = std::fs::read(runs[0].path().join(name)).unwrap();
        let b = std::fs::read(runs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&runs[0], "simulate.json")).unwrap();
    assert_eq!(report["config"]["seed"], 5);
}

#[test]
fn kernel_and_curve_checks_pass_on_the_rough_config() {
    let dir = TempDir::new().unwrap();
    for cmd in ["kernel-check", "curve-check"] {
        let out = vh(
            &[cmd, "--emit-plot-data"],
            &config("rough.json"),
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "curve_check.json")).unwrap();
    assert_eq!(report["pass"], true);
    assert!(dir.path().join("curve.dat").exists());
}

#[test]
fn invalid_input_exit_codes() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let base = std::fs::read_to_string(config("rough.json")).unwrap();

    let bad_alpha = write(
        "alpha.json",
        &base.replace("\"alpha\": 0.6", "\"alpha\": 0.4"),
    );
    assert_eq!(
        vh(&["charfn"], &bad_alpha, dir.path()).status.code(),
        Some(2)
    );

    let unknown = write(
        "unknown.json",
        &base.replace("\"seed\": 42", "\"seed\": 42, \"extra\": 1"),
    );
    let out = vh(&["charfn"], &unknown, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["error"], "config");

    let negative = write(
        "negative.json",
        &base.replace(
            "{ \"kind\": \"classical\", \"V0\": 0.04, \"theta\": 0.04 }",
            "{ \"kind\": \"tabulated\", \"points\": [[0, -0.01], [1, 0.04]] }",
        ),
    );
    assert_eq!(
        vh(&["curve-check"], &negative, dir.path()).status.code(),
        Some(1)
    );

    let no_section = write(
        "nosection.json",
        &std::fs::read_to_string(config("classical.json")).unwrap(),
    );
    assert_eq!(
        vh(&["simulate"], &no_section, dir.path()).status.code(),
        Some(2)
    );

    let out = Command::new(env!("CARGO_BIN_EXE_vh"))
        .arg("nonsense")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
