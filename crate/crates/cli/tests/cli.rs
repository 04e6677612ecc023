//! End-to-end runs of the `levy-garch` binary: exit codes, file round
//! trips, and byte-determinism of written reports.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-garch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["no-such-command"]);
    assert_eq!(code(&out), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    let out_csv = dir.path().join("y.csv");

    // Unknown field.
    write(
        &cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"}, "n": 50, "seed": 1, "typo": true}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Negative seed is a type error.
    write(
        &cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"}, "n": 50, "seed": -3}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid"));

    // Structurally invalid parameters.
    write(
        &cfg,
        r#"{"params": {"alpha0": -0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"}, "n": 50, "seed": 3}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    // Nonstationary parameters pass construction but fail at simulation
    // time: a runtime failure, not a config one.
    write(
        &cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.6], "beta": [0.7]},
            "noise": {"family": "gaussian"}, "n": 50, "seed": 3}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = dir.path().join("sim.json");
    let est_cfg = dir.path().join("est.json");
    let series = dir.path().join("y.csv");
    let report = dir.path().join("fit.json");
    let report2 = dir.path().join("fit2.json");

    write(
        &sim_cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"}, "n": 8000, "seed": 40}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        sim_cfg.to_str().unwrap(),
        "--out",
        series.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    write(
        &est_cfg,
        r#"{"noise": {"family": "gaussian"}, "r": 1, "s": 1}"#,
    );
    let est_args = [
        "estimate",
        "--config",
        est_cfg.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ];
    let out = run(&est_args);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let fit = read_json(&report);
    assert_eq!(fit["n"], 8000);
    let theta: Vec<f64> = fit["theta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let truth = [0.1, 0.2, 0.7];
    for (est, tr) in theta.iter().zip(truth) {
        assert!((est - tr).abs() < 0.1, "theta = {theta:?}");
    }
    assert_eq!(fit["se"].as_array().unwrap().len(), 3);
    assert!(fit["efficiency"].as_f64().unwrap() > 1.0);
    assert!(fit["ml"].is_object());

    // Same input, same bytes.
    let mut second = est_args;
    second[6] = report2.to_str().unwrap();
    let out = run(&second);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(&report).unwrap(),
        std::fs::read(&report2).unwrap()
    );
}

#[test]
fn aborted_study_exits_3_but_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    let report = dir.path().join("study.json.out");
    // Small-sample high-persistence block: most replications stall on the
    // local-domain boundary, tripping the 20% abort rule.
    write(
        &cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"},
            "sample_sizes": [700], "reps": 3, "seed": 11, "burn_in": 300,
            "reference_n": 6000}"#,
    );
    let out = run(&[
        "mc-study",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aborted"));

    let rep = read_json(&report);
    assert_eq!(rep["aborted_at"], 700);
    assert!(rep["blocks"][0]["failure_share"].as_f64().unwrap() > 0.2);
}

#[test]
fn stability_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stab.json");
    let report = dir.path().join("stab.out.json");
    write(
        &cfg,
        r#"{"params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"}}"#,
    );
    let out = run(&[
        "stability",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&report);
    assert!((rep["orders"][0]["rho"].as_f64().unwrap() - 0.89).abs() < 1e-9);
    assert!((rep["orders"][1]["rho"].as_f64().unwrap() - 1.3713).abs() < 1e-6);
    assert_eq!(rep["coprime"], true);
    assert_eq!(rep["stationary"], true);
    assert_eq!(rep["orders"][0]["block_identity"]["holds"], true);
}

#[test]
fn efficiency_curve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("curve.json");
    let out_csv = dir.path().join("curve.csv");
    write(
        &cfg,
        r#"{"noise": {"family": "gaussian"}, "delta": 0.5, "m_max": 4}"#,
    );
    let out = run(&[
        "efficiency-curve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("m,u_max,score,bound,ratio"));
    let last: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(last[0], "4");
    let score: f64 = last[2].parse().unwrap();
    assert!((score - 1.6024004946).abs() < 1e-6);
}

#[test]
fn estimate_on_unreadable_series_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let est_cfg = dir.path().join("est.json");
    write(
        &est_cfg,
        r#"{"noise": {"family": "gaussian"}, "r": 1, "s": 1}"#,
    );
    let out = run(&[
        "estimate",
        "--config",
        est_cfg.to_str().unwrap(),
        "--series",
        dir.path().join("missing.csv").to_str().unwrap(),
        "--out",
        dir.path().join("fit.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}
