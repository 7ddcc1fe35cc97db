//! The binary end to end on small configurations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel).canonicalize().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homecare")).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// Three patients, short walks, a tiny model.
fn small_config(dir: &Path, patients: &[&str], scenarios: &[&str]) -> PathBuf {
    let scen: Vec<String> = scenarios.iter().map(|s| format!("{:?}", data(&format!("scenarios/{s}.toml")))).collect();
    let pats: Vec<String> = patients.iter().map(|p| format!("{p:?}")).collect();
    let cfg = format!(
        "seed = 7\nregistry = {:?}\nscenarios = [{}]\n\n[cohort]\nwalks_per_patient = 1\nwalk_s = 25.0\nrest_s = 5.0\npatients = [{}]\n\n\
         [model]\nmap_height = 16\nmap_width = 16\nconv_channels = [4, 4, 4]\nfeature_dim = 8\nhidden = [16]\nbatch_size = 4\nmax_epochs = 3\n",
        data("registry.toml"),
        scen.join(", "),
        pats.join(", ")
    );
    let p = dir.join("cfg.toml");
    std::fs::write(&p, cfg).unwrap();
    p
}

#[test]
fn safety_eval_on_the_bundled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["safety-eval", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("detected 7") && text(&o).contains("false activations 0"), "{}", text(&o));
}

#[test]
fn report_on_an_empty_directory_marks_sections_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("incomplete"));
    let first = std::fs::read(dir.path().join("report.json")).unwrap();
    assert!(run(&["report", "--out", dir.path().to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), first);
}

#[test]
fn invalid_scenario_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\npatient = \"P01\"\n[[events]]\nt_s = 0\nkind = \"teleport\"\n").unwrap();
    let o = run(&["run-scenario", "--devices", "in-process", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o).contains("line"), "{}", text(&o));
}

#[test]
fn missing_class_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &["P01", "P08"], &[]);
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o).contains("no segments for class"), "{}", text(&o));
}

#[test]
fn simulate_train_eval_scenario_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &["P01", "P08", "P15"], &["evening_light"]);
    let out = dir.path().join("o");
    let args = |cmd: &[&str]| {
        let mut v: Vec<String> = cmd.iter().map(|s| s.to_string()).collect();
        v.extend(["--config".into(), cfg.to_str().unwrap().into(), "--out".into(), out.to_str().unwrap().into()]);
        v
    };
    let go = |cmd: &[&str]| {
        let a = args(cmd);
        let o = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{cmd:?}: {}", text(&o));
        o
    };
    go(&["simulate"]);
    assert!(std::fs::read_to_string(out.join("simulate/features.csv")).unwrap().lines().count() > 1);
    assert!(out.join("simulate/timelines/evening_light.jsonl").exists());

    go(&["train", "--max-epochs", "1"]);
    let hist = std::fs::read_to_string(out.join("train/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 2, "{hist}");
    go(&["eval"]);

    let o = go(&["run-scenario", "--devices", "loopback", "--suite"]);
    assert!(text(&o).contains("evening_light: DeviceCommand(lamp)"), "{}", text(&o));
    assert!(text(&o).contains("suite: success 1.000"), "{}", text(&o));

    let tl = out.join("simulate/timelines/evening_light.jsonl");
    go(&["agent-replay", "--timeline", tl.to_str().unwrap()]);
    go(&["safety-eval"]);
    let o = go(&["report"]);
    assert!(!text(&o).contains("incomplete"), "{}", text(&o));
}
