use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hubbard_cone::cli::{parse_config, parse_document, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hubbard-cone"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn operator_audit_exits_zero_and_lists_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("audits.json");
    let out = run(&["audit-operators", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&csv_files(dir.path())[0]).unwrap();
    assert!(csv.starts_with("check,instance,param,value,bound,pass\n"));
    assert!(csv.contains("hopping-commutator,") && csv.contains("number-conservation,"));
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["transport", "--config", "/nonexistent/config.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transport_reference_writes_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = configs().join("transport.json");
    let out = run(&["transport", "--config", cfg_path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let cfg = parse_config(&cfg_path).unwrap();
    let hash = cfg.hash();
    let csv = fs::read_to_string(dir.path().join(format!("transport-{hash}.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + cfg.cone.t_grid.len() * cfg.cone.rho_grid.len());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(format!("transport-{hash}.json"))).unwrap()).unwrap();
    for key in ["config", "kappa", "fitted_velocity", "thresholds", "pass_counts", "hash"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert!(dir.path().join(format!("transport-mirror-{hash}.csv")).exists());
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("transport.json");
    let out = run(
        &["transport", "--config", cfg.to_str().unwrap(), "--set", "cone.thresholds.transport=1e-30"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn oversized_sector_exits_one_with_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("transport.json");
    let out = bin()
        .args(["transport", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("HUBBARD_CONE_DIM_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn bad_override_and_bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("transport.json");
    let out = run(&["transport", "--config", cfg.to_str().unwrap(), "--set", "cone.c=0.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cone.c") && err.contains("kappa"), "{err}");
    let out = run(&["no-such-experiment", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = configs().join("commutator.json");
    for experiment in ["commutator", "signal", "factorization"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let args = ["--config", cfg.to_str().unwrap()];
        let oa = bin().arg(experiment).args(args).args(["--threads", "1", "--out"]).arg(a.path()).output().unwrap();
        let ob = bin().arg(experiment).args(args).args(["--threads", "4", "--out"]).arg(b.path()).output().unwrap();
        assert_eq!(oa.status.code(), Some(0));
        assert_eq!(ob.status.code(), Some(0));
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(x.file_name(), y.file_name());
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }
}

#[test]
fn config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = parse_config(&configs().join("commutator.json")).unwrap();
    let path = dir.path().join("resolved.json");
    fs::write(&path, serde_json::to_string_pretty(&a.to_document()).unwrap()).unwrap();
    let b: RunConfig = parse_config(&path).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn overrides_change_the_hash() {
    let a = parse_config(&configs().join("transport.json")).unwrap();
    let b = parse_document(a.to_document(), &["cone.g=3.0".into()], None).unwrap();
    assert_ne!(a.hash(), b.hash());
    assert_eq!(b.cone.params.g, 3.0);
}
