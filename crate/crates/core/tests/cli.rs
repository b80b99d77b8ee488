//! End-to-end checks of the command-line tool and its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tubeswarm::output::svg::{parse_robot_discs, Viewport};
use tubeswarm::output::tables::{read_rows, MetricsRow, TraceRow};
use tubeswarm::scenario::{load_scenario, Rule};

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn tubeswarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tubeswarm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = tubeswarm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn snapshots(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("snapshot_t"))
        .collect();
    v.sort();
    v
}

#[test]
fn bundled_scenarios_load() {
    let narrow = load_scenario(manifest("scenarios/narrow_s_tube.json")).unwrap();
    assert_eq!(narrow.initial.len(), 25);
    assert_eq!(narrow.params().r_s, 0.5);
    let ring = load_scenario(manifest("scenarios/annular.json")).unwrap();
    assert_eq!(ring.initial.len(), 10);
    assert_eq!(ring.params().r_s, 0.075);
    assert!(ring.tube.is_closed());
    assert_eq!(ring.resolved.t_end_s, 150.0);
}

#[test]
fn zero_horizon_writes_single_record_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    simulate(&manifest("scenarios/narrow_s_tube.json"), dir.path(), &["--t-end", "0"]);
    let trace: Vec<TraceRow> = read_rows(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 25);
    assert!(trace.iter().all(|r| r.t == 0.0 && r.active == 1));
    let metrics: Vec<MetricsRow> = read_rows(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.len(), 1);
    assert!(metrics[0].min_pair_dist.unwrap() > 1.0);
    let shots = snapshots(dir.path());
    assert_eq!(shots.len(), 1);
    assert!(dir.path().join("distances.svg").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"], 1);
    assert_eq!(summary["step_count"], 0);
    assert_eq!(summary["termination"], "time-limit");
}

#[test]
fn snapshot_discs_match_trace() {
    let dir = tempfile::tempdir().unwrap();
    simulate(&manifest("scenarios/narrow_s_tube.json"), dir.path(), &["--t-end", "0.5"]);
    let scenario = load_scenario(manifest("scenarios/narrow_s_tube.json")).unwrap();
    let vp = Viewport::fit(&scenario.tube, 900.0);
    let trace: Vec<TraceRow> = read_rows(&dir.path().join("trace.csv")).unwrap();
    let shots = snapshots(dir.path());
    assert!(shots.len() > 1);
    let last = fs::read_to_string(shots.last().unwrap()).unwrap();
    let discs = parse_robot_discs(&last);
    assert_eq!(discs.len(), 25);
    let t_last = trace.last().unwrap().t;
    for (id, cx, cy, r) in discs {
        let row = trace.iter().find(|row| row.t == t_last && row.robot_id == id).unwrap();
        let p = vp.to_world(cx, cy);
        assert!((p.x - row.x).abs() < 1e-9 && (p.y - row.y).abs() < 1e-9, "robot {id}");
        assert!((r / vp.scale - 0.5).abs() < 1e-9);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scenario = manifest("scenarios/narrow_s_tube.json");
    simulate(&scenario, a.path(), &["--t-end", "1"]);
    simulate(&scenario, b.path(), &["--t-end", "1"]);
    for name in ["trace.csv", "metrics.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn zero_gain_full_mode_matches_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(manifest("scenarios/narrow_s_tube.json")).unwrap()).unwrap();
    spec["controller"]["alpha0_m2ps"] = 0.0.into();
    spec["t_end_s"] = 2.0.into();
    let path = dir.path().join("no_regulation.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let (full, base) = (dir.path().join("full"), dir.path().join("base"));
    simulate(&path, &full, &["--mode", "full"]);
    simulate(&path, &base, &["--mode", "baseline"]);
    assert_eq!(fs::read(full.join("trace.csv")).unwrap(), fs::read(base.join("trace.csv")).unwrap());
}

#[test]
fn compare_writes_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(manifest("scenarios/narrow_s_tube.json")).unwrap()).unwrap();
    spec["t_end_s"] = 1.0.into();
    let path = dir.path().join("short.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = dir.path().join("cmp");
    let o = tubeswarm(&["compare", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["full/trace.csv", "baseline/trace.csv", "compare.csv", "amd.svg", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["full"]["mode"], "full");
    assert_eq!(summary["baseline"]["mode"], "baseline");
}

#[test]
fn plot_rerenders_from_trace() {
    let dir = tempfile::tempdir().unwrap();
    simulate(&manifest("scenarios/narrow_s_tube.json"), dir.path(), &["--t-end", "0.2"]);
    let again = dir.path().join("again");
    let trace = dir.path().join("trace.csv");
    let o = tubeswarm(&["plot", trace.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let original = snapshots(dir.path());
    let redrawn = snapshots(&again);
    assert_eq!(original.len(), redrawn.len());
    for (a, b) in original.iter().zip(&redrawn) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}

#[test]
fn check_tube_reports_narrow_band() {
    let o = tubeswarm(&["check-tube", manifest("scenarios/narrow_s_tube.json").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("regular: true"));
    let band = text
        .lines()
        .skip_while(|l| !l.starts_with("narrow intervals"))
        .nth(1)
        .expect("one narrow interval");
    let nums: Vec<f64> = band
        .trim()
        .trim_matches(|c| c == '[' || c == ']')
        .split(", ")
        .map(|s| s.parse().unwrap())
        .collect();
    // σ ≤ 2 r_s = 1 only around the 0.75 m neck that spans l ∈ [14, 17.2]
    assert!(nums[0] < 14.0 && nums[0] > 12.0 && nums[1] > 17.2 && nums[1] < 19.2, "{band}");
}

#[test]
fn check_tube_lists_intersections_of_overwide_arc() {
    let o = tubeswarm(&["check-tube", manifest("tests/fixtures/overwide_arc.json").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("regular: false"));
    assert!(text.lines().filter(|l| l.contains("intersecting sections")).count() > 0);
}

#[test]
fn invalid_scenarios_fail_with_named_rule() {
    let close = manifest("tests/fixtures/two_robots_close.json");
    let err = load_scenario(&close).unwrap_err();
    assert_eq!(err.violated_rule(), Some(Rule::InitialCollision));
    let dir = tempfile::tempdir().unwrap();
    let o = tubeswarm(&["simulate", close.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("initial-collision"));
    assert!(!dir.path().join("trace.csv").exists());

    let arc = manifest("tests/fixtures/overwide_arc.json");
    assert_eq!(load_scenario(&arc).unwrap_err().violated_rule(), Some(Rule::Regularity));
}

#[test]
fn missing_file_is_an_error() {
    let o = tubeswarm(&["simulate", "does/not/exist.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}
