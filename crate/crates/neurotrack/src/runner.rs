//! Experiment drivers behind the CLI subcommands.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neurotrack_core::ann::train_for_scene;
use neurotrack_core::dvs::Event;
use neurotrack_core::emsif::{init_from_detection, predict, update, FilterConfig};
use neurotrack_core::math::wrap_angle;
use neurotrack_core::metrics::{bind_labels, compute_metrics, MetricsConfig, MetricsReport, ObjectSummary, VerdictStats};
use neurotrack_core::pipeline::{run_pipeline, EventSink, PipelineError, RunOutput};
use neurotrack_core::rng::derive_seed;
use neurotrack_core::scene::{ground_truth, render_frame, DiskScene, GroundTruth};
use neurotrack_core::snn_emsif::SpikingFilter;
use neurotrack_core::tracker::{Backend, TrackEstimate};

use crate::config::ResolvedRun;
use crate::error::AppError;
use crate::formats::{
    frame_path, load_pgm, load_tracks, load_truth, save_detections, save_events_csv, save_evb, save_json, save_pgm,
    save_rows, save_spikes, save_tracks, save_truth,
};

/// Renders every frame of `scene` to `out/frames/` and writes `truth.json`
/// and the validated `scene.json`.
pub fn synth(scene: &DiskScene, out: &Path) -> Result<usize, AppError> {
    for k in 0..scene.frame_count {
        let frame = render_frame(scene, k).map_err(|e| stage("scene", k, e))?;
        save_pgm(&frame_path(out, k), &frame)?;
    }
    save_truth(&out.join("truth.json"), &ground_truth(scene))?;
    save_json(&out.join("scene.json"), scene)?;
    Ok(scene.frame_count)
}

fn stage(stage: &'static str, frame: usize, e: impl std::fmt::Display) -> AppError {
    AppError::Stage(PipelineError { stage, frame, message: e.to_string() })
}

pub fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Dense => "dense",
        Backend::Spiking => "spiking",
    }
}

/// RMS spiking-vs-dense differences for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDelta {
    pub label: u32,
    pub frames: usize,
    pub theta_rms: f64,
    pub omega_rms: f64,
    pub r_rms: f64,
}

impl ObjectDelta {
    pub fn within(&self, theta: f64, omega: f64, r: f64) -> bool {
        self.frames > 0 && self.theta_rms <= theta && self.omega_rms <= omega && self.r_rms <= r
    }
}

#[derive(Default)]
struct DeltaAcc {
    frames: usize,
    th: f64,
    om: f64,
    r: f64,
}

impl DeltaAcc {
    fn push(&mut self, th: f64, om: f64, r: f64) {
        self.frames += 1;
        self.th += th * th;
        self.om += om * om;
        self.r += r * r;
    }

    fn finish(self, label: u32) -> ObjectDelta {
        let n = self.frames.max(1) as f64;
        let rms = |v: f64| if self.frames == 0 { f64::NAN } else { (v / n).sqrt() };
        ObjectDelta { label, frames: self.frames, theta_rms: rms(self.th), omega_rms: rms(self.om), r_rms: rms(self.r) }
    }
}

/// Compares the disk-polar estimates of two runs object by object over the
/// half-open frame `window`.
pub fn compare_backends(dense: &RunOutput, spiking: &RunOutput, window: [usize; 2]) -> Vec<ObjectDelta> {
    let index = |o: &RunOutput| -> HashMap<(usize, u32), TrackEstimate> {
        o.estimates.iter().map(|e| ((e.frame, e.id), e.clone())).collect()
    };
    let (di, si) = (index(dense), index(spiking));
    let mut out = Vec::new();
    for od in &dense.report.objects {
        let Some(os) = spiking.report.objects.iter().find(|o| o.label == od.label) else { continue };
        let spiking_rows: HashMap<usize, u32> = os.frames.iter().copied().zip(os.track_ids.iter().copied()).collect();
        let mut acc = DeltaAcc::default();
        for (&k, &id) in od.frames.iter().zip(&od.track_ids) {
            if k < window[0] || k >= window[1] {
                continue;
            }
            let Some(sid) = spiking_rows.get(&k) else { continue };
            let (Some(a), Some(b)) = (di.get(&(k, id)), si.get(&(k, *sid))) else { continue };
            if a.theta.is_finite() && b.theta.is_finite() {
                acc.push(wrap_angle(a.theta - b.theta), a.omega - b.omega, a.r - b.r);
            }
        }
        out.push(acc.finish(od.label));
    }
    out
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub backend: Backend,
    pub seed: u64,
    pub frames: usize,
    pub metrics: MetricsConfig,
    /// Track id → ground-truth label, fixed at confirmation.
    pub tracks: BTreeMap<u32, u32>,
    pub objects: Vec<ObjectSummary>,
    pub identity_swaps: usize,
    pub verdicts: Vec<VerdictStats>,
    pub events: usize,
    pub detections: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BackendRun {
    pub dir: PathBuf,
    pub output: RunOutput,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub runs: Vec<BackendRun>,
    pub comparison: Option<Vec<ObjectDelta>>,
    pub train_accuracy: Option<f64>,
}

/// Runs the pipeline for every selected backend and writes all outputs.
///
/// Frames come from `data/frames/` with truth from `data/truth.json` when
/// `data` is given, otherwise they are rendered from the scene in memory.
pub fn run(cfg: &ResolvedRun, data: Option<&Path>, out: &Path) -> Result<RunResult, AppError> {
    let scene = &cfg.scene;
    let truth = match data {
        Some(d) => {
            let t = load_truth(&d.join("truth.json")).map_err(|e| AppError::Config(e.to_string()))?;
            if t.frame_count() != scene.frame_count {
                return Err(AppError::Config(format!(
                    "{} holds {} frames, the scene has {}",
                    d.join("truth.json").display(),
                    t.frame_count(),
                    scene.frame_count
                )));
            }
            t
        }
        None => ground_truth(scene),
    };
    fs::create_dir_all(out).map_err(|e| AppError::Runtime(format!("{}: {e}", out.display())))?;

    let (model, train_accuracy) = match (&cfg.model, cfg.config.validator.enabled) {
        (Some(m), _) => (Some(m.clone()), None),
        (None, true) => {
            let mut train = cfg.config.validator.train.clone();
            train.seed = cfg.config.seed;
            let (net, acc) = train_for_scene(scene, &train).map_err(|e| stage("ann", 0, e))?;
            save_json(&out.join("model.json"), &net)?;
            (Some(net), Some(acc))
        }
        (None, false) => (None, None),
    };

    let backends = cfg.config.backend.backends();
    let mut runs = Vec::new();
    for (i, &backend) in backends.iter().enumerate() {
        let dir = if backends.len() > 1 { out.join(backend_name(backend)) } else { out.to_path_buf() };
        let mut events: Vec<Event> = Vec::new();
        let sink: Option<EventSink<'_>> =
            (cfg.config.dump.events && i == 0).then(|| Box::new(|_, ev: &[Event]| events.extend_from_slice(ev)) as EventSink<'_>);
        let mut frames = |k: usize| match data {
            Some(d) => load_pgm(&frame_path(d, k), k).map_err(|e| e.to_string()),
            None => render_frame(scene, k).map_err(|e| e.to_string()),
        };
        let output =
            run_pipeline(&cfg.pipeline, backend, truth.frame_count(), &mut frames, &truth, model.as_ref(), sink)?;
        if cfg.config.dump.events && i == 0 {
            save_events_csv(&out.join("events.csv"), &events)?;
            save_evb(&out.join("events.evb"), &events)?;
        }
        let summary = write_outputs(cfg, &dir, &output, &truth)?;
        runs.push(BackendRun { dir, output, summary });
    }

    let comparison = match runs.as_slice() {
        [d, s] => {
            let c = compare_backends(&d.output, &s.output, cfg.config.comparison_window);
            save_json(&out.join("comparison.json"), &c)?;
            Some(c)
        }
        _ => None,
    };
    Ok(RunResult { runs, comparison, train_accuracy })
}

#[derive(Serialize)]
struct OmegaRow {
    frame: usize,
    object: u32,
    track: u32,
    omega: f64,
    omega_true: f64,
}

#[derive(Serialize)]
struct ErrorRow {
    frame: usize,
    object: u32,
    track: u32,
    error: f64,
}

#[derive(Serialize)]
struct TrajectoryRow {
    frame: usize,
    object: u32,
    track: u32,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    x_true: f64,
    y_true: f64,
}

fn write_outputs(cfg: &ResolvedRun, dir: &Path, out: &RunOutput, truth: &GroundTruth) -> Result<RunSummary, AppError> {
    let rep = &out.report;
    let mut files = vec!["tracks.csv", "omega.csv", "errors.csv", "trajectories.csv"];
    save_tracks(&dir.join("tracks.csv"), &out.estimates)?;
    let omega = rep.objects.iter().flat_map(|o| {
        (0..o.frames.len()).map(move |i| OmegaRow {
            frame: o.frames[i],
            object: o.label,
            track: o.track_ids[i],
            omega: o.omega[i],
            omega_true: o.omega_true[i],
        })
    });
    save_rows(&dir.join("omega.csv"), &["frame", "object", "track", "omega", "omega_true"], omega)?;
    let errors = rep.objects.iter().flat_map(|o| {
        (0..o.frames.len()).map(move |i| ErrorRow { frame: o.frames[i], object: o.label, track: o.track_ids[i], error: o.error[i] })
    });
    save_rows(&dir.join("errors.csv"), &["frame", "object", "track", "error"], errors)?;
    let traj = rep.objects.iter().flat_map(|o| {
        (0..o.frames.len()).map(move |i| TrajectoryRow {
            frame: o.frames[i],
            object: o.label,
            track: o.track_ids[i],
            x: o.x[i],
            y: o.y[i],
            vx: o.vx[i],
            vy: o.vy[i],
            x_true: o.x_true[i],
            y_true: o.y_true[i],
        })
    });
    save_rows(
        &dir.join("trajectories.csv"),
        &["frame", "object", "track", "x", "y", "vx", "vy", "x_true", "y_true"],
        traj,
    )?;
    if cfg.config.dump.detections {
        save_detections(&dir.join("detections.csv"), &out.detections)?;
        files.push("detections.csv");
    }
    if cfg.config.dump.spikes && out.backend == Backend::Spiking {
        save_spikes(&dir.join("spikes.csv"), &out.spikes)?;
        files.push("spikes.csv");
    }

    let names: BTreeMap<u32, &str> = cfg.scene.objects.iter().map(|o| (o.label, o.shape.name())).collect();
    let labels: Vec<u32> = rep.objects.iter().map(|o| o.label).collect();
    for (name, text) in plot_scripts(&labels, &names) {
        fs::write(dir.join(name), text).map_err(|e| AppError::Runtime(format!("{}: {e}", dir.join(name).display())))?;
        files.push(name);
    }
    let mut files: Vec<String> = files.into_iter().map(String::from).collect();
    files.push(String::from("summary.json"));

    let summary = RunSummary {
        backend: out.backend,
        seed: cfg.config.seed,
        frames: truth.frame_count(),
        metrics: cfg.pipeline.metrics.clone(),
        tracks: out.assoc.clone(),
        objects: rep.summary.clone(),
        identity_swaps: rep.identity_swaps,
        verdicts: rep.verdicts.clone(),
        events: out.event_counts.iter().sum(),
        detections: out.detections.len(),
        files,
    };
    save_json(&dir.join("summary.json"), &summary)?;
    lint_plot_scripts(dir).map_err(AppError::Runtime)?;
    Ok(summary)
}

fn object_title(label: u32, names: &BTreeMap<u32, &str>) -> String {
    match names.get(&label) {
        Some(n) => format!("object {label} ({n})"),
        None => format!("object {label}"),
    }
}

/// Gnuplot scripts for the trajectory, angular-velocity and error panels.
pub fn plot_scripts(labels: &[u32], names: &BTreeMap<u32, &str>) -> [(&'static str, String); 3] {
    const HEAD: &str = "set datafile separator ','\nset key outside right\nset grid\n";
    let join = |clauses: Vec<String>| format!("plot {}\n", clauses.join(", \\\n     "));

    let mut a = String::from(HEAD);
    a.push_str("set title 'Estimated trajectories and velocity vectors'\nset xlabel 'x (px)'\nset ylabel 'y (px)'\n");
    a.push_str("set size ratio -1\nset yrange [*:*] reverse\n");
    let mut clauses = Vec::new();
    for &l in labels {
        let t = object_title(l, names);
        clauses.push(format!("'trajectories.csv' every ::1 using ($2=={l} ? $4 : 1/0):5 with lines lw 2 title '{t}'"));
        clauses.push(format!("'trajectories.csv' every ::1 using ($2=={l} ? $8 : 1/0):9 with lines dt 2 title 'truth {l}'"));
    }
    clauses.push(String::from(
        "'trajectories.csv' every 10::1 using 4:5:($6*5):($7*5) with vectors head filled title 'velocity x5'",
    ));
    a.push_str(&join(clauses));

    let mut b = String::from(HEAD);
    b.push_str("set title 'Estimated angular velocity'\nset xlabel 'frame'\nset ylabel 'omega (rad/frame)'\n");
    let mut clauses = Vec::new();
    for &l in labels {
        let t = object_title(l, names);
        clauses.push(format!("'omega.csv' every ::1 using 1:($2=={l} ? $4 : 1/0) with lines title '{t}'"));
    }
    clauses.push(String::from("'omega.csv' every ::1 using 1:5 with lines dt 2 lc rgb 'black' title 'true'"));
    b.push_str(&join(clauses));

    let mut c = String::from(HEAD);
    c.push_str("set title 'Position estimation error'\nset xlabel 'frame'\nset ylabel 'error (px)'\n");
    let mut clauses = Vec::new();
    for &l in labels {
        let t = object_title(l, names);
        clauses.push(format!("'errors.csv' every ::1 using 1:($2=={l} ? $4 : 1/0) with lines title '{t}'"));
    }
    if clauses.is_empty() {
        clauses.push(String::from("'errors.csv' every ::1 using 1:4 with lines title 'error'"));
    }
    c.push_str(&join(clauses));

    [("plot_a.gp", a), ("plot_b.gp", b), ("plot_c.gp", c)]
}

/// Data files named in a gnuplot script (quoted strings ending in `.csv`).
pub fn referenced_files(script: &str) -> Vec<String> {
    let mut out: Vec<String> = script
        .split('\'')
        .skip(1)
        .step_by(2)
        .filter(|s| s.ends_with(".csv"))
        .map(String::from)
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Checks that every `plot_*.gp` in `dir` references only existing files.
pub fn lint_plot_scripts(dir: &Path) -> Result<(), String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut scripts: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gp"))
        .collect();
    scripts.sort();
    let mut missing = String::new();
    for s in &scripts {
        let text = fs::read_to_string(s).map_err(|e| format!("{}: {e}", s.display()))?;
        for f in referenced_files(&text) {
            if !dir.join(&f).is_file() {
                let _ = writeln!(missing, "{} references missing file {f}", s.display());
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(missing)
    }
}

/// One row of `bench.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub frame: usize,
    pub object: u32,
    pub theta_dense: f64,
    pub theta_snn: f64,
    pub omega_dense: f64,
    pub omega_snn: f64,
    pub r_dense: f64,
    pub r_snn: f64,
}

/// Feeds the same measurement sequence (the ground-truth positions of every
/// orbiting object) to a dense and a spiking filter and writes `bench.csv`
/// and `bench.json`. The positions are instantaneous, so the disk model's
/// measurement lag is zeroed.
pub fn filter_bench(cfg: &ResolvedRun, out: &Path) -> Result<(Vec<BenchRow>, Vec<ObjectDelta>), AppError> {
    let scene = &cfg.scene;
    let truth = ground_truth(scene);
    let tracker = &cfg.pipeline.tracker;
    let disk = &FilterConfig { measurement_lag: 0.0, ..tracker.disk.clone() };
    let window = cfg.config.comparison_window;
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for obj in scene.objects.iter().filter(|o| o.is_orbiting()) {
        let label = obj.label;
        let Some(k0) = (0..truth.frame_count()).find(|&k| truth.record(k, label).is_some_and(|t| t.visible)) else {
            continue;
        };
        let t0 = truth.record(k0, label).expect("visible record");
        let mut dense = init_from_detection(disk, [t0.x, t0.y], k0).map_err(|e| stage("emsif", k0, e))?;
        let mut snn = SpikingFilter::new(disk, &tracker.neural, &dense, derive_seed(cfg.config.seed, u64::from(label)))
            .map_err(|e| stage("snn_emsif", k0, e))?;
        let mut acc = DeltaAcc::default();
        let mut push = |k: usize, d: &[f64], s: &[f64]| {
            rows.push(BenchRow {
                frame: k,
                object: label,
                theta_dense: d[0],
                theta_snn: s[0],
                omega_dense: d[1],
                omega_snn: s[1],
                r_dense: d[2],
                r_snn: s[2],
            });
            if k >= window[0] && k < window[1] {
                acc.push(wrap_angle(d[0] - s[0]), d[1] - s[1], d[2] - s[2]);
            }
        };
        push(k0, dense.s.as_slice(), snn.last.s.as_slice());
        for k in k0 + 1..truth.frame_count() {
            if tracker.silence_fraction > 0.0 && k == tracker.silence_after {
                snn.network.silence(tracker.silence_fraction, derive_seed(cfg.config.seed ^ 0x51, u64::from(label)));
            }
            let z = truth.record(k, label).filter(|t| t.visible).map(|t| [t.x, t.y]);
            let prior = predict(disk, &dense);
            dense = match z {
                Some(z) => update(disk, &prior, z).0,
                None => prior,
            };
            let s = snn.update(z).map_err(|e| stage("snn_emsif", k, e))?;
            push(k, dense.s.as_slice(), s.s.as_slice());
        }
        deltas.push(acc.finish(label));
    }
    save_rows(&out.join("bench.csv"), &["frame", "object", "theta_dense", "theta_snn", "omega_dense", "omega_snn", "r_dense", "r_snn"], &rows)?;
    save_json(&out.join("bench.json"), &deltas)?;
    Ok((rows, deltas))
}

/// Recomputes the metrics from a results directory's `tracks.csv`.
pub fn eval(results: &Path, truth: &Path, cfg: &MetricsConfig) -> Result<MetricsReport, AppError> {
    let estimates = load_tracks(&results.join("tracks.csv"))?;
    let truth = load_truth(truth)?;
    let assoc = bind_labels(&estimates, &truth);
    compute_metrics(&estimates, &truth, &assoc, cfg).map_err(|e| stage("metrics", 0, e))
}

/// Summary table of `eval` for printing.
#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub objects: Vec<ObjectSummary>,
    pub identity_swaps: usize,
    pub verdicts: Vec<VerdictStats>,
}

impl From<&MetricsReport> for EvalSummary {
    fn from(r: &MetricsReport) -> Self {
        Self {
            objects: r.summary.clone(),
            identity_swaps: r.identity_swaps,
            verdicts: r.verdicts.clone(),
        }
    }
}
