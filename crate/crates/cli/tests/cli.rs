use std::fs;
use std::process::{Command, Output};

fn smpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpc"))
        .args(args)
        .output()
        .expect("failed to start smpc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validates_bundled_scenarios() {
    let o = smpc(&["validate", "scenario1", "scenario2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("scenario1: ok (4 vehicles"));
    assert!(s.contains("scenario2: ok (8 vehicles"));
}

#[test]
fn broken_scenario_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nseed = 1\n").unwrap();
    let o = smpc(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let missing = dir.path().join("missing.toml");
    let o = smpc(&["run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exports_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpc(&["export-geometry", "scenario1", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let doc = fs::read_to_string(dir.path().join("geometry.toml")).unwrap();
    assert!(doc.contains("lane_width"));
    let csv = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("path"), "{header}");
    // twelve paths, sampled every metre
    assert!(lines.count() > 12 * 100);

    let o = smpc(&["export-geometry", "scenario2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("central_half_width"));
}

#[test]
fn run_writes_outputs_and_exits_0_when_safe() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpc(&["run", "scenario1", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    for f in ["vehicles.csv", "iterations.csv", "gaps.csv", "summary.toml", "report.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(dir.path().join("report.toml")).unwrap();
    assert!(report.contains("safe = true"));
}

#[test]
fn batches_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = smpc(&["batch", "scenario1", "--count", "3", "--seed", "11", "-o", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", stdout(&o));
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read_to_string(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "report.toml"), read(&b, "report.toml"));
    assert_eq!(read(&a, "gaps.csv"), read(&b, "gaps.csv"));
}

#[test]
fn sweep_rejects_out_of_range_horizons() {
    let o = smpc(&["sweep", "scenario1", "--horizons", "50"]);
    assert_eq!(o.status.code(), Some(1));
}
