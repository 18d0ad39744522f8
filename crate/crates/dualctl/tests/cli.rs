//! End-to-end tests of the command-line interface: artifact layout,
//! deterministic reruns and the exit-code contract (0 success, 1 failed
//! assertion, 2 usage/config errors).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualctl"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dualctl-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary must run")
}

#[test]
fn simulate_writes_reproducible_artifacts() {
    let dir = scratch("simulate");
    let config = write_config(
        &dir,
        "config.json",
        r#"{"n": 2, "alpha": 1.0, "gamma": "star", "horizon": 8,
            "adversary": {"kind": "gaussian", "std": 0.2}, "seed": 5, "runs": 2}"#,
    );
    let out_dir = dir.join("artifacts");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--output-dir")
        .arg(&out_dir));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv0 = std::fs::read_to_string(out_dir.join("trajectory_0.csv")).unwrap();
    let mut lines = csv0.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,norm_x,norm_u,norm_w,mode,y_max,est_error,stage_cost,running_cost"
    );
    assert_eq!(csv0.lines().count(), 9, "header plus one row per step");
    assert!(csv0.ends_with('\n'));
    assert!(out_dir.join("trajectory_1.csv").exists());
    assert!(out_dir.join("plot.svg").exists());
    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(report.contains("\"peak_running_cost\""));

    // A rerun must reproduce every artifact byte for byte.
    let before: Vec<(PathBuf, Vec<u8>)> = [
        "trajectory_0.csv",
        "trajectory_1.csv",
        "plot.svg",
        "report.json",
    ]
    .iter()
    .map(|f| {
        let p = out_dir.join(f);
        let bytes = std::fs::read(&p).unwrap();
        (p, bytes)
    })
    .collect();
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--output-dir")
        .arg(&out_dir));
    assert!(out.status.success());
    for (path, bytes) in before {
        assert_eq!(std::fs::read(&path).unwrap(), bytes, "{}", path.display());
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sync_subcommand_emits_csv_plot_and_report() {
    let dir = scratch("sync");
    let out = run(bin()
        .arg("sync")
        .arg("--n")
        .arg("4")
        .arg("--seed")
        .arg("3")
        .arg("--output-dir")
        .arg(&dir));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("synchronized at step"), "{stdout}");
    let csv = std::fs::read_to_string(dir.join("sync.csv")).unwrap();
    assert!(csv.starts_with("t,norm_x,norm_y,norm_z,est_error\n"));
    // Default horizon is 4n (minimum 12 for tiny systems).
    assert_eq!(csv.lines().count(), 17);
    assert!(dir.join("sync.svg").exists());
    assert!(dir.join("sync_report.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_gamma_suite_passes_and_writes_report() {
    let dir = scratch("verify");
    let out = run(bin()
        .arg("verify")
        .arg("--suite")
        .arg("gamma")
        .arg("--output-dir")
        .arg(&dir));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("gamma-threshold     PASS") || stdout.contains("gamma-threshold    PASS")
    );
    assert!(stdout.contains("verification suite: PASS"));
    let report = std::fs::read_to_string(dir.join("verify.json")).unwrap();
    assert!(report.contains("\"threshold\""));
    assert!(!report.contains("\"identity\""), "unrun checks stay absent");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_gamma_prints_the_feasibility_split() {
    let out = run(bin()
        .arg("sweep-gamma")
        .arg("--alpha")
        .arg("1.0")
        .arg("--points")
        .arg("5"));
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("critical gain = 2.414214"), "{stdout}");
    assert!(
        stdout.contains("escaped"),
        "gains below critical must escape"
    );
    assert!(
        stdout.contains("true"),
        "gains at or above critical stay bounded"
    );
    assert!(stdout.contains("3.414214"), "limit t* printed");
}

#[test]
fn audit_gain_passes_and_exit_one_on_violation() {
    let dir = scratch("audit");
    let good = write_config(
        &dir,
        "good.json",
        r#"{"n": 1, "alpha": 1.0, "horizon": 10, "adversary": {"kind": "zero"},
            "seed": 1, "runs": 400}"#,
    );
    let out = run(bin()
        .arg("audit-gain")
        .arg("--config")
        .arg(&good)
        .arg("--output-dir")
        .arg(&dir));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("gain audit: PASS"));
    assert!(dir.join("audit.json").exists());

    // A single-run "mean" legitimately exceeds the expectation bound when
    // that one episode explores in the unlucky direction; the audit must
    // report FAIL through exit code 1, not an error.
    let unlucky = write_config(
        &dir,
        "unlucky.json",
        r#"{"n": 1, "alpha": 1.0, "horizon": 12,
            "adversary": {"kind": "gaussian", "std": 0.3}, "seed": 4, "runs": 1}"#,
    );
    let out = run(bin().arg("audit-gain").arg("--config").arg(&unlucky));
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("gain audit: FAIL"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_two() {
    let dir = scratch("config-errors");
    // Unknown key.
    let unknown = write_config(
        &dir,
        "unknown.json",
        r#"{"n": 1, "alpha": 1.0, "horizon": 5, "horizont": 3}"#,
    );
    let out = run(bin().arg("simulate").arg("--config").arg(&unknown));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizont"));

    // Missing file.
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(dir.join("absent.json")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));

    // Invalid parameter combination: audit needs the critical gain.
    let relaxed = write_config(
        &dir,
        "relaxed.json",
        r#"{"n": 1, "alpha": 1.0, "gamma": 4.0, "horizon": 5}"#,
    );
    let out = run(bin().arg("audit-gain").arg("--config").arg(&relaxed));
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn shipped_example_configs_are_valid() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            let config: dualctl::sim::ExperimentConfig =
                serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            config
                .params()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(
        seen >= 3,
        "expected the shipped example configs, found {seen}"
    );
}

#[test]
fn divergence_demo_truncates_and_flags_the_episode() {
    let dir = scratch("diverge");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/divergence_demo.json");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--output-dir")
        .arg(&dir));
    // Divergence below the critical gain is an expected outcome, not an
    // error: the run truncates, is flagged, and the command succeeds.
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("(diverged)"), "{stdout}");
    let report = std::fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(report.contains("\"diverged\": true"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_two() {
    let out = run(bin().arg("simulate"));
    assert_eq!(out.status.code(), Some(2), "missing required --config");
    let out = run(bin().arg("verify").arg("--suite").arg("everything"));
    assert_eq!(out.status.code(), Some(2), "unknown suite value");
    let out = run(bin().arg("no-such-command"));
    assert_eq!(out.status.code(), Some(2));
}
