use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_segnet");

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn segnet(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SEGNET_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn metric(csv: &str, key: &str) -> f64 {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {csv}"))
        .parse()
        .unwrap()
}

fn run_to(dir: &Path, scenario: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--scenario", scenario, "--out", out];
    args.extend_from_slice(extra);
    segnet(&args)
}

#[test]
fn case_study_seed_seven_detects_and_outlives() {
    let dir = tempfile::tempdir().unwrap();
    let on = run_to(&dir.path().join("on"), &fixture("case_study"), &["--seed", "7"]);
    assert!(on.status.success());
    let on = stdout(&on);
    assert!(on.contains("detection_rate,1.0\n"));
    let off = stdout(&run_to(&dir.path().join("off"), &fixture("case_study"), &["--seed", "7", "--no-detect"]));
    assert!(metric(&off, "network_lifetime") < metric(&on, "network_lifetime"));
    for f in ["trace.jsonl", "metrics.csv", "energy.csv"] {
        assert!(dir.path().join("on").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("on/metrics.csv")).unwrap(), on);
}

#[test]
fn casestudy_prints_every_step() {
    let o = segnet(&["casestudy"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("step ")).count(), 7);
    assert!(!text.contains("FAIL"));
}

#[test]
fn sweep_shapes() {
    let o = segnet(&[
        "sweep",
        "--scenario",
        &fixture("attack"),
        "--seeds",
        "1..20",
        "--vary",
        "detection_enabled=true,false",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 41);
}

#[test]
fn raising_token_threshold_never_raises_detection() {
    let o = segnet(&["sweep", "--scenario", &fixture("attack"), "--seeds", "1..5", "--vary", "th_token=1,3,5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "detection_rate").unwrap();
    let mut mean = std::collections::BTreeMap::<i64, Vec<f64>>::new();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        mean.entry(cells[2].parse().unwrap())
            .or_default()
            .push(cells[col].parse().unwrap());
    }
    let means: Vec<f64> = mean.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    assert_eq!(means.len(), 3);
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
}

#[test]
fn single_seed_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = stdout(&run_to(dir.path(), &fixture("clean"), &["--seed", "4"]));
    let sweep = stdout(&segnet(&["sweep", "--scenario", &fixture("clean"), "--seeds", "4..4"]));
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 2);
    let names: Vec<&str> = lines[0].split(',').skip(3).collect();
    let values: Vec<&str> = lines[1].split(',').skip(3).collect();
    let from_sweep: Vec<String> = names.iter().zip(&values).map(|(k, v)| format!("{k},{v}")).collect();
    let from_run: Vec<&str> = run.lines().skip(1).collect();
    assert_eq!(from_sweep, from_run);
    assert!(lines[1].starts_with("4,,,"));
}

#[test]
fn unknown_vary_key_exits_two() {
    let o = segnet(&["sweep", "--scenario", &fixture("clean"), "--seeds", "1..2", "--vary", "bogus=1,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_scenario_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[thresholds]\nth_token = \"three\"\n").unwrap();
    let o = run_to(&dir.path().join("o"), bad.to_str().unwrap(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn unelectable_topology_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("lonely.toml");
    fs::write(
        &s,
        "[sim]\nseed = 1\n\n[[nodes]]\nid = 1\nx = 0.0\ny = 0.0\ncategory = \"base\"\n\n\
         [[nodes]]\nid = 2\nx = 10.0\ny = 0.0\ncategory = \"simple\"\n",
    )
    .unwrap();
    let o = run_to(&dir.path().join("o"), s.to_str().unwrap(), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn replay_mismatches_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_to(dir.path(), &fixture("case_study"), &["--seed", "8"]).status.success());
    let trace = dir.path().join("trace.jsonl");
    let o = segnet(&["replay", "--trace", trace.to_str().unwrap(), "--scenario", &fixture("case_study")]);
    assert_eq!(o.status.code(), Some(4), "seed");

    assert!(run_to(dir.path(), &fixture("compromised_co"), &[]).status.success());
    let o = segnet(&["replay", "--trace", trace.to_str().unwrap(), "--scenario", &fixture("compromised_zo")]);
    assert_eq!(o.status.code(), Some(4), "node set");
}

#[test]
fn flipped_verdict_is_one_divergence() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_to(dir.path(), &fixture("case_study"), &[]).status.success());
    let path = dir.path().join("trace.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let flipped = text.replacen("\"ticketed\":true", "\"ticketed\":false", 1);
    assert_ne!(flipped, text);
    fs::write(&path, flipped).unwrap();
    let o = segnet(&["replay", "--trace", path.to_str().unwrap(), "--scenario", &fixture("case_study")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("divergences 1\n"));
}

#[test]
fn empty_trace_replays_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    fs::write(&path, "").unwrap();
    let o = Command::new(BIN)
        .args(["replay", "--trace", path.to_str().unwrap(), "--scenario", &fixture("clean")])
        .env("SEGNET_LOG", "info")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("divergences 0"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn log_level_controls_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = run_to(&dir.path().join("q"), &fixture("clean"), &[]);
    assert!(quiet.stderr.is_empty());
    let loud = Command::new(BIN)
        .args(["run", "--scenario", &fixture("clean"), "--out"])
        .arg(dir.path().join("l"))
        .env("SEGNET_LOG", "debug")
        .output()
        .unwrap();
    assert!(!loud.stderr.is_empty());
}
