//! Per-frame orchestration: frames → events → detections → tracks.
//!
//! The loop is sequential and owns no IO; frames come from a caller-supplied
//! source so the same code runs on in-memory renders and on files.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ann::MlpNetwork;
use crate::detector::{Detection, Detector, DetectorConfig};
use crate::dvs::{emulate_step, init_reference, DvsConfig, Event};
use crate::metrics::{bind_labels, compute_metrics, MetricsConfig, MetricsReport};
use crate::scene::{DiskScene, Frame, GroundTruth};
use crate::tracker::{Backend, TrackEstimate, Tracker, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub dvs: DvsConfig,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    /// Defaults with the disk model centred on the scene's rotation center.
    pub fn for_scene(scene: &DiskScene) -> Self {
        let mut cfg = Self::default();
        cfg.tracker.disk.center = scene.center;
        cfg
    }
}

/// A failed stage and the frame it failed on.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub frame: usize,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed at frame {}: {}", self.stage, self.frame, self.message)
    }
}

impl core::error::Error for PipelineError {}

fn fail(stage: &'static str, frame: usize) -> impl FnOnce(String) -> PipelineError {
    move |message| PipelineError { stage, frame, message }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub backend: Backend,
    pub estimates: Vec<TrackEstimate>,
    pub detections: Vec<Detection>,
    pub event_counts: Vec<usize>,
    pub spikes: Vec<(u64, u32)>,
    pub assoc: BTreeMap<u32, u32>,
    pub report: MetricsReport,
}

/// Optional per-frame hook, e.g. for dumping events.
pub type EventSink<'a> = Box<dyn FnMut(usize, &[Event]) + 'a>;

/// Runs the full loop over `frame_count` frames.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    backend: Backend,
    frame_count: usize,
    frames: &mut dyn FnMut(usize) -> Result<Frame, String>,
    truth: &GroundTruth,
    validator: Option<&MlpNetwork>,
    mut events_out: Option<EventSink<'_>>,
) -> Result<RunOutput, PipelineError> {
    let mut tracker_cfg = cfg.tracker.clone();
    tracker_cfg.backend = backend;
    let mut tracker = Tracker::new(tracker_cfg);
    let mut estimates = Vec::new();
    let mut detections = Vec::new();
    let mut event_counts = Vec::new();

    if frame_count > 0 {
        let f0 = frames(0).map_err(fail("frames", 0))?;
        let mut cam = init_reference(&f0, &cfg.dvs).map_err(|e| fail("dvs", 0)(e.to_string()))?;
        let mut det = Detector::new(f0.width, f0.height, cfg.detector.clone(), cfg.dvs.frame_period);
        let rows = tracker.step(&[], 0, validator.map(|n| (n, &f0))).map_err(|e| fail("tracker", 0)(e.to_string()))?;
        estimates.extend(rows);
        event_counts.push(0);

        for k in 1..frame_count {
            let frame = frames(k).map_err(fail("frames", k))?;
            let events = emulate_step(&mut cam, &frame, k).map_err(|e| fail("dvs", k)(e.to_string()))?;
            if let Some(sink) = events_out.as_mut() {
                sink(k, &events);
            }
            event_counts.push(events.len());
            let windows = det.process_frame(&events, k).map_err(|e| fail("detector", k)(e.to_string()))?;
            let current = windows.last().cloned().unwrap_or_default();
            detections.extend(windows.into_iter().flatten());
            let rows = tracker
                .step(&current, k, validator.map(|n| (n, &frame)))
                .map_err(|e| fail("tracker", k)(e.to_string()))?;
            estimates.extend(rows);
        }
    }

    let assoc = bind_labels(&estimates, truth);
    for e in &mut estimates {
        e.label = assoc.get(&e.id).copied();
    }
    let report = compute_metrics(&estimates, truth, &assoc, &cfg.metrics).map_err(|e| fail("metrics", frame_count)(e.to_string()))?;
    Ok(RunOutput { backend, estimates, detections, event_counts, spikes: core::mem::take(&mut tracker.spikes), assoc, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ground_truth, render_frame};

    fn run(scene: &DiskScene, backend: Backend) -> RunOutput {
        let truth = ground_truth(scene);
        let mut src = |k: usize| render_frame(scene, k).map_err(|e| e.to_string());
        run_pipeline(&PipelineConfig::for_scene(scene), backend, scene.frame_count, &mut src, &truth, None, None).unwrap()
    }

    #[test]
    fn dense_run_recovers_angular_velocity() {
        let out = run(&DiskScene::default(), Backend::Dense);
        assert_eq!(out.report.summary.len(), 3);
        for s in &out.report.summary {
            assert!(s.mean_abs_omega_error.unwrap() <= 0.005, "{s:?}");
            assert!(s.mean_error.unwrap() <= 2.0, "{s:?}");
        }
        assert_eq!(out.report.identity_swaps, 0);
        assert!(out.event_counts[1..].iter().all(|&n| n > 0));
    }

    #[test]
    fn single_frame_run_is_empty() {
        let scene = DiskScene { frame_count: 1, ..DiskScene::default() };
        let out = run(&scene, Backend::Dense);
        assert!(out.estimates.is_empty());
        assert!(out.report.objects.is_empty());
    }

    #[test]
    fn frame_source_errors_name_the_stage() {
        let scene = DiskScene::default();
        let truth = ground_truth(&scene);
        let mut src = |k: usize| if k == 4 { Err(String::from("missing")) } else { render_frame(&scene, k).map_err(|e| e.to_string()) };
        let err = run_pipeline(&PipelineConfig::default(), Backend::Dense, 10, &mut src, &truth, None, None).unwrap_err();
        assert_eq!((err.stage, err.frame), ("frames", 4));
    }
}
