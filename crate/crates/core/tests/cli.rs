use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use depthpose::io::{self, OutputIndex};
use depthpose::metrics::MetricReport;

fn depthpose(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_depthpose"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    out
}

fn ok(args: &[&str]) -> String {
    let out = depthpose(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = tmp.path().join("out");
    let ev = tmp.path().join("ev");
    ok(&[
        "synth",
        "-o",
        p(&ds),
        "--frames",
        "8",
        "--matched-offsets",
        "--orbit-rate",
        "0.02",
        "--seed",
        "4",
    ]);
    assert!(ds.join("dataset.json").exists());
    let run_stdout = ok(&["run", "-i", p(&ds), "-o", p(&out), "--eval"]);
    let eval_stdout = ok(&[
        "eval",
        "--pred",
        p(&out),
        "--gt",
        p(&ds.join("ground_truth.json")),
        "--out",
        p(&ev),
    ]);
    assert_eq!(run_stdout, eval_stdout);
    let a: MetricReport = io::read_json(&out.join("report.json")).unwrap();
    let b: MetricReport = io::read_json(&ev.join("report.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.f1, 100.0);
    assert!(a.mpjpe_mm.unwrap() < 5.0);
    assert!(a.fps.is_some());

    let index: OutputIndex = io::read_json(&out.join("index.json")).unwrap();
    assert_eq!(index.frames.len(), 8);
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 9);
}

#[test]
fn raw_depth_and_cloud_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&[
        "synth",
        "-o",
        p(&ds),
        "--frames",
        "3",
        "--matched-offsets",
        "--depth-format",
        "raw",
    ]);
    for mode in ["direct", "pc2dimg", "pc2vmap"] {
        let out = tmp.path().join(mode);
        let stdout = ok(&[
            "run",
            "-i",
            p(&ds),
            "-o",
            p(&out),
            "--depth-source",
            mode,
            "--eval",
        ]);
        let row = stdout.lines().nth(1).unwrap();
        let f1: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
        assert!(f1 > 90.0, "{mode}: {row}");
    }
}

#[test]
fn malformed_frame_is_skipped_and_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = tmp.path().join("out");
    ok(&["synth", "-o", p(&ds), "--frames", "4"]);
    fs::write(ds.join("keypoints/000002_v1.json"), "{ not json").unwrap();
    ok(&["run", "-i", p(&ds), "-o", p(&out)]);
    let index: OutputIndex = io::read_json(&out.join("index.json")).unwrap();
    assert_eq!(index.frames.len(), 3);
    assert_eq!(index.skipped.len(), 1);
    assert_eq!(index.skipped[0].frame_index, 2);
}

#[test]
fn missing_calibration_aborts_run() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["synth", "-o", p(&ds), "--frames", "2"]);
    let out = depthpose(&[
        "run",
        "-i",
        p(&ds),
        "-o",
        p(&tmp.path().join("out")),
        "--cameras",
        "0,9",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains('9'));
}

#[test]
fn eval_rejects_mismatched_skeleton() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = tmp.path().join("out");
    ok(&["synth", "-o", p(&ds), "--frames", "2"]);
    ok(&["run", "-i", p(&ds), "-o", p(&out)]);
    let skel = tmp.path().join("tiny.json");
    fs::write(
        &skel,
        r#"{"name":"tiny","joints":["a","b"],"neighbors":[[1],[0]],"depth_offsets":[0.0,0.0],"limbs":[[0,1]]}"#,
    )
    .unwrap();
    let res = depthpose(&[
        "eval",
        "--pred",
        p(&out),
        "--gt",
        p(&ds.join("ground_truth.json")),
        "--skeleton",
        p(&skel),
    ]);
    assert!(!res.status.success());
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "apply_offsets = false\n[fusion]\ntopk = 5\n").unwrap();
    let printed = ok(&[
        "run",
        "-c",
        p(&cfg),
        "--topk",
        "2",
        "--cameras",
        "1,3",
        "--print-config",
    ]);
    let parsed = depthpose::PipelineConfig::from_toml(&printed).unwrap();
    assert!(!parsed.apply_offsets);
    assert_eq!(parsed.fusion.topk, 2);
    assert_eq!(parsed.cameras, Some(vec![1, 3]));

    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert!(!depthpose(&["run", "-c", p(&cfg), "--print-config"])
        .status
        .success());
    assert!(!depthpose(&["run", "--arm-length", "4", "--print-config"])
        .status
        .success());
}

#[test]
fn bench_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("bench.json");
    let stdout = ok(&[
        "bench",
        "--frames",
        "3",
        "--repetitions",
        "2",
        "--views",
        "2",
        "--json",
        p(&json),
    ]);
    assert!(stdout.contains("depth_extraction") && stdout.contains("fusion"));
    let report: depthpose::pipeline::BenchReport = io::read_json(&json).unwrap();
    assert!(report.deterministic);
    assert_eq!(report.views, 2);

    let ds = tmp.path().join("ds");
    ok(&["synth", "-o", p(&ds), "--frames", "3"]);
    let dump = tmp.path().join("inspect.json");
    ok(&["inspect", "-i", p(&ds), "--frame", "2", "--dump", p(&dump)]);
    let report: depthpose::pipeline::InspectReport = io::read_json(&dump).unwrap();
    assert_eq!(report.frame_index, 2);
    assert_eq!(report.groups.len(), 3);
    assert!(report
        .groups
        .iter()
        .all(|g| g.kind == "track" && g.before.len() == g.after.len()));
    assert!(!depthpose(&["inspect", "-i", p(&ds), "--frame", "7"])
        .status
        .success());
}
