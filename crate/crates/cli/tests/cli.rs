use std::path::Path;
use std::process::Command;

use egd_cli::config::{Experiment, ExperimentConfig};
use egd_cli::run_experiment;

fn egd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_egd"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        out.push((rel, std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = vec![];
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn manifest_round_trip_is_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let status = egd()
        .args(["rate-study", "--experiment", "glm_low_snr", "--n-grid", "64,128,256,512"])
        .args(["--replicates", "5", "--max-iters", "300", "--algorithms", "egd,gd", "--trajectories"])
        .arg("--output-dir")
        .arg(first.path())
        .env("EGD_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    let status = egd()
        .arg("rate-study")
        .arg("--config")
        .arg(first.path().join("manifest.json"))
        .arg("--output-dir")
        .arg(second.path())
        .env("EGD_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    let a = read_dir_sorted(first.path());
    let b = read_dir_sorted(second.path());
    assert!(a.iter().any(|(n, _)| n == "rate_study.csv"));
    assert!(a.iter().any(|(n, _)| n.starts_with("trajectories")));
    assert_eq!(a.len(), b.len());
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
}

#[test]
fn invalid_config_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "glm_low_snr", "algorithms": ["em"]}"#).unwrap();
    let out = egd().arg("rate-study").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("algorithms"));

    let out = egd().args(["optimize", "--experiment", "two_phase", "--eta", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));

    let out = egd().args(["figure", "42"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_experiment() {
    let out = egd().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for e in Experiment::ALL {
        assert!(text.contains(e.name()), "{e} missing from --help");
    }
}

#[test]
fn two_phase_figure_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = egd().args(["figure", "two-phase", "--output-dir"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory_egd.csv")).unwrap();
    assert!(csv.starts_with(egd_core::optim::TRAJECTORY_CSV_HEADER));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"], "two_phase");
    assert!(manifest.get("timestamp").is_none());
}

#[test]
fn library_run_matches_defaults_of_every_deterministic_experiment() {
    for e in [Experiment::TwoPhase, Experiment::Diagonal, Experiment::EffectsEtaBeta] {
        let cfg = ExperimentConfig::defaults(e);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert!(a.failures.is_empty(), "{e}: {:?}", a.failures);
        assert_eq!(a, b);
        assert!(a.artifacts.files.contains_key("summary.json"));
    }
}
