use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdf")).args(args).output().expect("spawn gdf")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("empty.txt");
    fs::write(&logs, "").unwrap();
    let out = gdf(&["analyze", "--logs", s(&logs), "--out", s(&dir.path().join("c.txt"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
    assert!(!dir.path().join("c.txt").exists());
}

#[test]
fn unknown_controller_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdf(&["run", "--scenario", &scenario("xsede-pipelining.scn"), "--controller", "bogus", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown controller"), "{}", stderr(&out));
}

#[test]
fn tuned_controller_without_cache_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdf(&["run", "--scenario", &scenario("xsede-fairness.scn"), "--controller", "typeT", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--cache"), "{}", stderr(&out));
}

#[test]
fn fairness_needs_two_contenders() {
    let out = gdf(&["fairness", "--scenario", &scenario("xsede-pipelining.scn"), "--controller", "single"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("at least 2 contenders"));
}

#[test]
fn fairness_prints_one_row() {
    let out = gdf(&["fairness", "--scenario", &scenario("xsede-fairness.scn"), "--controller", "single"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "controller,utilization,jain");
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols[0], "single");
    let jain: f64 = cols[2].parse().unwrap();
    assert!((0.25..=1.0).contains(&jain));
}

#[test]
fn static_run_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir: PathBuf = dir.path().join("run");
    let out = gdf(&["run", "--scenario", &scenario("xsede-pipelining.scn"), "--controller", "static", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("id,bytes,seconds,joules,mean_throughput,efficiency,violation_fraction\n"));
    assert_eq!(stdout.lines().count(), 2);
    assert!(fs::read_dir(&out_dir).unwrap().count() >= 2);
}

#[test]
fn gen_logs_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs.txt");
    let cache = dir.path().join("cache.txt");
    let out = gdf(&["gen-logs", "--preset", "ibm", "--seed", "2", "--ticks", "10", "--out", s(&logs)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("records "));
    let out = gdf(&["analyze", "--logs", s(&logs), "--out", s(&cache), "--amortization", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("amortization 4"), "{report}");
    assert!(fs::metadata(&cache).unwrap().len() > 0);
}

#[test]
fn bad_level_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c.txt");
    fs::write(&cache, "").unwrap();
    let out = gdf(&["sla-report", "--scenario", &scenario("xsede-sweep.scn"), "--kind", "T", "--levels", "5..2", "--cache", s(&cache)]);
    assert!(!out.status.success());
}
