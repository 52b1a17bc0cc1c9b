use std::path::Path;
use std::process::Command;

use ac_lab::harness::{self, ConfigFile, Overrides};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ac-lab"))
}

#[test]
fn list_shows_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert!(names.len() >= 10);
    let reg: Vec<&str> = harness::registry().iter().map(|e| e.name).collect();
    assert_eq!(names, reg);
}

#[test]
fn unknown_name_is_a_config_error() {
    let out = bin().args(["run", "no-such-experiment"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["describe", "no-such-experiment"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_files_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, "[experiments.separation-law]\neps = [0.05, 0.1]\n").unwrap();
    let out = bin().args(["run", "separation-law", "--config"]).arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&p, "[experiments.bogus]\n").unwrap();
    let out = bin().args(["all", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn separation_law_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "separation-law", "--eps", "0.1,0.05,0.025,0.0125"])
        .env("AC_LAB_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let d = dir.path().join("separation-law");
    let csv = std::fs::read_to_string(d.join("separation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["criterion"], 5);
}

fn run_into(root: &Path, name: &str, seed: u64) -> Vec<(String, Vec<u8>)> {
    let cfg = ConfigFile::default();
    let spec = cfg.spec(name, root, &Overrides { seed: Some(seed), ..Default::default() }).unwrap();
    let r = harness::run(&spec).unwrap();
    let mut out: Vec<_> = r
        .artifacts
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = run_into(a.path(), "geometry-kernel", 11);
    let y = run_into(b.path(), "geometry-kernel", 11);
    assert!(!x.is_empty());
    assert_eq!(x, y);
    let z = run_into(b.path(), "geometry-kernel", 12);
    assert_ne!(x, z);
}

#[test]
fn checkpoint_written_for_field_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ConfigFile::default();
    let spec = cfg.spec("pde-critical-points", dir.path(), &Overrides::default()).unwrap();
    let r = harness::run(&spec).unwrap();
    let bin = r.artifacts.iter().find(|p| p.extension().is_some_and(|e| e == "bin")).expect("checkpoint");
    let ck = ac_lab::field::read_checkpoint(std::fs::File::open(bin).unwrap()).unwrap();
    assert!(ck.u.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn shipped_config_parses() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example.toml");
    let c = ConfigFile::load(&p).unwrap();
    assert_eq!(c.run.jobs, Some(1));
    for e in harness::registry() {
        c.spec(e.name, Path::new("o"), &Overrides::default()).unwrap();
    }
}
