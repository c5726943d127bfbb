//! End-to-end checks of the `cosim` binary: artifacts, exit codes, and
//! seeded reproducibility.

use std::path::Path;
use std::process::Command;

fn cosim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cosim"))
}

fn scenarios_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let out = tempdir("cli_exp");
    let status = cosim()
        .args(["run"])
        .arg(scenarios_dir().join("exponential/scenario.toml"))
        .arg("--out")
        .arg(&out)
        .args(["--log-level", "quiet"])
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["exp.x0.csv", "events.jsonl", "summary.txt", "plots.gp"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    for key in ["max_loading_pct", "shed_events", "shed_energy_kwh", "voltage_rmse_pu"] {
        assert!(summary.contains(key), "summary missing {key}");
    }
    let trace = std::fs::read_to_string(out.join("exp.x0.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("time_s,value"));
    // Nine decimal digits on the time column.
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').next().unwrap(), "0.000000000");
}

#[test]
fn config_errors_exit_one() {
    let status = cosim()
        .args(["run", "/nonexistent/scenario.toml", "--log-level", "quiet"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn same_seed_reproduces_event_log() {
    let (a, b) = (tempdir("cli_seed_a"), tempdir("cli_seed_b"));
    for out in [&a, &b] {
        let status = cosim()
            .args(["run"])
            .arg(scenarios_dir().join("dr_overload/scenario.toml"))
            .args(["--seed", "7", "--t-end", "7200", "--log-level", "quiet"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let ev_a = std::fs::read(a.join("events.jsonl")).unwrap();
    let ev_b = std::fs::read(b.join("events.jsonl")).unwrap();
    assert!(!ev_a.is_empty());
    assert_eq!(ev_a, ev_b);
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cosim_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
