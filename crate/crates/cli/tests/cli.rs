use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use kplane_core::pipeline::ExperimentConfig;

const SMALL_RADON: &str = r#"{
  "n": 2, "k": 1, "m": 0,
  "grid": {"half_width": 4.0, "points_per_axis": 64, "perp_points": 129, "padding": 4},
  "planes": {"mode": "fixed", "count": 180}
}"#;

const SMALL_VECTOR: &str = r#"{
  "n": 3, "k": 2, "m": 1,
  "grid": {"half_width": 2.0, "points_per_axis": 12, "perp_points": 25, "padding": 2},
  "planes": {"mode": "haar", "count": 12, "seed": 7},
  "current": {"kind": "circle", "segments": 32}
}"#;

fn kplane(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kplane"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("kplane runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn report(output: &Output) -> Value {
    let path = String::from_utf8(output.stdout.clone()).unwrap();
    serde_json::from_str(&fs::read_to_string(path.trim()).unwrap()).unwrap()
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let out = kplane(&["selftest"], &dir.path().join("runs"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["passed"], Value::Bool(true));
}

#[test]
fn missing_config_is_a_config_failure() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let out = kplane(&["invert", "--config", missing.to_str().unwrap()], &dir.path().join("runs"));
    assert_eq!(out.status.code(), Some(2));
    let out = kplane(&["invert"], &dir.path().join("runs"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("syntax.json", "{\"n\": 2,"),
        ("unknown.json", &SMALL_RADON.replace("\"m\": 0", "\"m\": 0, \"colour\": 1")),
        ("degree.json", &SMALL_RADON.replace("\"m\": 0", "\"m\": 3")),
        ("plane_dim.json", &SMALL_RADON.replace("\"k\": 1", "\"k\": 2")),
    ];
    for (name, text) in cases {
        let path = write_config(&dir, name, text);
        let out = kplane(&["invert", "--config", path.to_str().unwrap()], &dir.path().join("runs"));
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn radon_inversion_reports_its_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "radon.json", SMALL_RADON);
    let runs = dir.path().join("runs");
    let out = kplane(&["invert", "--config", cfg.to_str().unwrap(), "--emit-csv"], &runs);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let err = r["results"]["rel_l2_error"].as_f64().unwrap();
    assert!(err <= 0.03, "relative L2 error {err}");
    assert_eq!(r["passed"], Value::Bool(true));
    let run = runs.join("invert-001");
    for file in ["report.json", "reconstruction.bin", "sinogram.bin", "reconstruction.csv", "truth.csv"] {
        assert!(run.join(file).is_file(), "{file} missing");
    }
    // a second run gets its own directory
    let again = kplane(&["invert", "--config", cfg.to_str().unwrap()], &runs);
    assert_eq!(again.status.code(), Some(0));
    assert!(runs.join("invert-002/report.json").is_file());
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = kplane(&["selftest"], &blocker);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn check_commands_fail_on_tolerance() {
    let dir = TempDir::new().unwrap();
    let strict = SMALL_RADON.replace(
        "\"planes\"",
        "\"bounds\": {\"family\": 10, \"refined\": 1}, \"tolerances\": {\"bounds_refinement\": 0.0, \"bounds_dilation\": 0.0}, \"planes\"",
    );
    let cfg = write_config(&dir, "strict.json", &strict);
    let out = kplane(&["bounds", "--config", cfg.to_str().unwrap()], &dir.path().join("runs"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["passed"], Value::Bool(false));
}

#[test]
fn current_commands_write_their_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "vector.json", SMALL_VECTOR);
    let runs = dir.path().join("runs");
    let out = kplane(&["project-current", "--config", cfg.to_str().unwrap()], &runs);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(runs.join("project-current-001/projections.json")).unwrap()).unwrap();
    assert_eq!(doc["projections"].as_array().unwrap().len(), 12);
    let out = kplane(&["pair-via-projections", "--config", cfg.to_str().unwrap()], &runs);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["results"]["estimate"].as_f64().unwrap().is_finite());
    assert!(r["results"]["std_error"].as_f64().unwrap() >= 0.0);
}

fn strip_timestamps(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamps");
    v
}

#[test]
fn runs_are_reproducible_up_to_timestamps() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "vector.json", SMALL_VECTOR);
    let runs = dir.path().join("runs");
    let a = kplane(&["decompose", "--config", cfg.to_str().unwrap()], &runs);
    let b = kplane(&["decompose", "--config", cfg.to_str().unwrap(), "--threads", "2"], &runs);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(strip_timestamps(report(&a)), strip_timestamps(report(&b)));
    let bin = |i: u32| fs::read(runs.join(format!("decompose-{i:03}/plane_forms.bin"))).unwrap();
    assert_eq!(bin(1), bin(2));
    // the seed override changes the planes
    let c = kplane(&["decompose", "--config", cfg.to_str().unwrap(), "--seed", "8"], &runs);
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(bin(1), bin(3));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::from_json(&fs::read_to_string(&path).unwrap());
            assert!(cfg.is_ok(), "{}: {:?}", path.display(), cfg.err());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
