//! Command-line behaviour, exit codes and result files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use neurotrack::formats::{load_rows, load_truth};
use neurotrack::runner::{lint_plot_scripts, referenced_files, RunSummary};
use neurotrack_core::metrics::MetricsConfig;

fn neurotrack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurotrack")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn setup(frames: usize, run_json: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.json"), format!("{{\"frame_count\": {frames}}}")).unwrap();
    fs::write(dir.path().join("run.json"), run_json).unwrap();
    let o = neurotrack(&["synth", "--config", "scene.json", "--out", "data"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn synth_writes_frames_truth_and_scene() {
    let dir = setup(12, "{\"seed\": 0}");
    let d = dir.path().join("data");
    assert!(d.join("frames/frame_00011.pgm").is_file());
    assert!(!d.join("frames/frame_00012.pgm").exists());
    assert!(fs::read(d.join("frames/frame_00000.pgm")).unwrap().starts_with(b"P5\n128 128\n255\n"));
    assert_eq!(load_truth(&d.join("truth.json")).unwrap().frame_count(), 12);
    assert!(d.join("scene.json").is_file());
}

#[test]
fn synth_accepts_a_run_config_and_rejects_unknown_scene_keys() {
    let dir = setup(1, r#"{"seed": 0, "scene": {"frame_count": 4}}"#);
    let o = neurotrack(&["synth", "--config", "run.json", "--out", "from_run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_truth(&dir.path().join("from_run/truth.json")).unwrap().frame_count(), 4);
    fs::write(dir.path().join("typo.json"), r#"{"frame_cout": 4}"#).unwrap();
    assert_eq!(code(&neurotrack(&["synth", "--config", "typo.json", "--out", "o"], dir.path())), 2);
}

#[test]
fn single_frame_run_succeeds_with_empty_series() {
    let dir = setup(1, r#"{"seed": 1, "scene": "scene.json"}"#);
    let o = neurotrack(&["run", "--config", "run.json", "--data", "data", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert_eq!(fs::read_to_string(out.join("errors.csv")).unwrap(), "frame,object,track,error\n");
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.objects.is_empty() && summary.tracks.is_empty());
}

#[test]
fn dense_run_outputs_agree_with_independent_eval() {
    let dir = setup(60, r#"{"seed": 4, "scene": "scene.json", "validator": {"enabled": false}}"#);
    let o = neurotrack(&["run", "--config", "run.json", "--data", "data", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let header = fs::read_to_string(out.join("tracks.csv")).unwrap();
    assert!(header.starts_with("frame,id,label,status,x,y,vx,vy,theta,omega,r,verdict,confidence\n"));
    assert!(fs::read_to_string(out.join("detections.csv")).unwrap().starts_with("frame,window,x,y,mass\n"));

    let report = neurotrack::runner::eval(&out, &dir.path().join("data/truth.json"), &MetricsConfig::default()).unwrap();
    let rows: Vec<(usize, u32, u32, f64)> = load_rows(&out.join("errors.csv")).unwrap();
    let recomputed: Vec<(usize, u32, f64)> =
        report.objects.iter().flat_map(|o| o.frames.iter().zip(&o.error).map(move |(&k, &e)| (k, o.label, e))).collect();
    assert_eq!(rows.len(), recomputed.len());
    assert!(!rows.is_empty());
    for ((k, l, _, e), (k2, l2, e2)) in rows.iter().zip(&recomputed) {
        assert_eq!((k, l), (k2, l2));
        assert!((e - e2).abs() <= 1e-9);
        assert!(*e >= 0.0);
    }

    let o = neurotrack(&["eval", "--results", "out", "--truth", "data/truth.json"], dir.path());
    assert_eq!(code(&o), 0);
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["objects"].as_array().unwrap().len(), 3);
}

#[test]
fn plot_scripts_reference_only_written_files() {
    let dir = setup(20, r#"{"seed": 2, "scene": "scene.json", "validator": {"enabled": false}}"#);
    let o = neurotrack(&["run", "--config", "run.json", "--data", "data", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0);
    let out = dir.path().join("out");
    for (name, wanted) in [("plot_a.gp", "trajectories.csv"), ("plot_b.gp", "omega.csv"), ("plot_c.gp", "errors.csv")] {
        let refs = referenced_files(&fs::read_to_string(out.join(name)).unwrap());
        assert_eq!(refs, vec![wanted.to_string()]);
    }
    assert!(lint_plot_scripts(&out).is_ok());
    fs::remove_file(out.join("omega.csv")).unwrap();
    let err = lint_plot_scripts(&out).unwrap_err();
    assert!(err.contains("plot_b.gp") && err.contains("omega.csv"), "{err}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup(40, r#"{"seed": 8, "scene": "scene.json", "dump": {"events": true}}"#);
    for out in ["a", "b"] {
        let o = neurotrack(&["run", "--config", "run.json", "--data", "data", "--out", out], dir.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["tracks.csv", "omega.csv", "errors.csv", "trajectories.csv", "detections.csv", "events.csv", "events.evb", "summary.json", "model.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn filter_bench_writes_the_bench_table() {
    let dir = setup(1, r#"{"seed": 0, "scene": {"frame_count": 20}}"#);
    let o = neurotrack(&["filter-bench", "--config", "run.json", "--out", "bench"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("bench/bench.csv")).unwrap();
    assert!(text.starts_with("frame,object,theta_dense,theta_snn,omega_dense,omega_snn,r_dense,r_snn\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 20);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = setup(1, r#"{"scene": "scene.json"}"#);
    assert_eq!(code(&neurotrack(&["run", "--config", "run.json", "--out", "o"], dir.path())), 2);
    assert_eq!(code(&neurotrack(&["run", "--config", "absent.json", "--out", "o"], dir.path())), 2);
    fs::write(dir.path().join("bad_scene.json"), r#"{"seed": 1, "scene": {"frame_count": 0}}"#).unwrap();
    assert_eq!(code(&neurotrack(&["run", "--config", "bad_scene.json", "--out", "o"], dir.path())), 2);
    fs::write(dir.path().join("ok.json"), r#"{"seed": 1, "scene": "scene.json"}"#).unwrap();
    assert_eq!(code(&neurotrack(&["run", "--config", "ok.json", "--out", "o", "--backend", "fast"], dir.path())), 2);
    assert_eq!(code(&neurotrack(&["synth", "--config", "absent.json", "--out", "o"], dir.path())), 2);
    assert_eq!(code(&neurotrack(&["frobnicate"], dir.path())), 2);
}

#[test]
fn missing_frame_is_a_stage_error_with_exit_3() {
    let dir = setup(5, r#"{"seed": 1, "scene": "scene.json", "validator": {"enabled": false}}"#);
    fs::remove_file(dir.path().join("data/frames/frame_00003.pgm")).unwrap();
    let o = neurotrack(&["run", "--config", "run.json", "--data", "data", "--out", "o"], dir.path());
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("frames") && err.contains("frame 3"), "{err}");
}
