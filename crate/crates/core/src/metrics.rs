//! Error series and summaries against the synthetic ground truth.
//!
//! Each track is bound to the nearest visible truth object at the frame it is
//! confirmed, and that binding is never revised: a later identity swap shows
//! up as an error spike and in the swap count.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::GroundTruth;
use crate::tracker::{TrackEstimate, TrackStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Half-open frame window for the position RMSE and mean error.
    pub error_window: [usize; 2],
    /// Half-open frame window for the mean |ω̂ − ω|.
    pub omega_window: [usize; 2],
    /// Error level (px) the convergence frame refers to.
    pub convergence_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { error_window: [150, 200], omega_window: [100, 200], convergence_threshold: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no ground truth for frame {0}")]
    MissingFrame(usize),
    #[error("no ground truth for label {label} at frame {frame}")]
    MissingLabel { frame: usize, label: u32 },
}

/// Per-frame series of one truth object, one entry per tracked frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectSeries {
    pub label: u32,
    pub frames: Vec<usize>,
    pub track_ids: Vec<u32>,
    pub error: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_true: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub x_true: Vec<f64>,
    pub y_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub label: u32,
    pub frames_tracked: usize,
    pub rmse: Option<f64>,
    pub mean_error: Option<f64>,
    pub mean_abs_omega_error: Option<f64>,
    /// First frame after which the error stays below the threshold.
    pub convergence_frame: Option<usize>,
    pub initial_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictStats {
    pub track: u32,
    pub label: Option<u32>,
    pub confirmed_frames: usize,
    pub unmodeled_frames: usize,
    /// Most frequent verdict among the confirmed frames.
    pub majority: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub objects: Vec<ObjectSeries>,
    pub summary: Vec<ObjectSummary>,
    pub identity_swaps: usize,
    pub verdicts: Vec<VerdictStats>,
}

/// Nearest visible truth object to `(x, y)` at frame `k`.
pub fn nearest_label(truth: &GroundTruth, k: usize, x: f64, y: f64) -> Option<u32> {
    truth.frames.get(k)?.iter().filter(|t| t.visible).min_by(|a, b| {
        libm::hypot(a.x - x, a.y - y).total_cmp(&libm::hypot(b.x - x, b.y - y)).then(a.label.cmp(&b.label))
    }).map(|t| t.label)
}

/// Binds every track to the nearest truth object at its first confirmed row.
pub fn bind_labels(estimates: &[TrackEstimate], truth: &GroundTruth) -> BTreeMap<u32, u32> {
    let mut out = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.status == TrackStatus::Confirmed) {
        if out.contains_key(&e.id) {
            continue;
        }
        if let Some(l) = nearest_label(truth, e.frame, e.x, e.y) {
            out.insert(e.id, l);
        }
    }
    out
}

/// Confirmed rows whose nearest truth object differs from the bound one.
pub fn identity_swaps(estimates: &[TrackEstimate], truth: &GroundTruth, assoc: &BTreeMap<u32, u32>) -> usize {
    estimates
        .iter()
        .filter(|e| e.status == TrackStatus::Confirmed)
        .filter(|e| match (assoc.get(&e.id), nearest_label(truth, e.frame, e.x, e.y)) {
            (Some(bound), Some(now)) => *bound != now,
            _ => false,
        })
        .count()
}

fn window_mean(frames: &[usize], values: &[f64], w: [usize; 2]) -> Option<f64> {
    let v: Vec<f64> = frames.iter().zip(values).filter(|(f, v)| **f >= w[0] && **f < w[1] && v.is_finite()).map(|(_, v)| *v).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn compute_metrics(
    estimates: &[TrackEstimate],
    truth: &GroundTruth,
    assoc: &BTreeMap<u32, u32>,
    cfg: &MetricsConfig,
) -> Result<MetricsReport, MetricsError> {
    let mut labels: Vec<u32> = assoc.values().copied().collect();
    labels.sort_unstable();
    labels.dedup();

    let mut objects = Vec::new();
    for &label in &labels {
        let mut by_frame: BTreeMap<usize, &TrackEstimate> = BTreeMap::new();
        for e in estimates.iter().filter(|e| assoc.get(&e.id) == Some(&label) && e.status != TrackStatus::Dead) {
            // lowest id wins when two tracks cover the same object
            by_frame.entry(e.frame).and_modify(|cur| if e.id < cur.id { *cur = e }).or_insert(e);
        }
        let mut s = ObjectSeries { label, ..ObjectSeries::default() };
        for (&k, e) in &by_frame {
            let rec = truth.frames.get(k).ok_or(MetricsError::MissingFrame(k))?;
            let t = rec.iter().find(|t| t.label == label).ok_or(MetricsError::MissingLabel { frame: k, label })?;
            s.frames.push(k);
            s.track_ids.push(e.id);
            s.error.push(libm::hypot(e.x - t.x, e.y - t.y));
            s.omega.push(e.omega);
            s.omega_true.push(t.omega);
            s.x.push(e.x);
            s.y.push(e.y);
            s.vx.push(e.vx);
            s.vy.push(e.vy);
            s.x_true.push(t.x);
            s.y_true.push(t.y);
        }
        objects.push(s);
    }

    let summary = objects
        .iter()
        .map(|s| {
            let sq: Vec<f64> = s.error.iter().map(|e| e * e).collect();
            let omega_err: Vec<f64> = s.omega.iter().zip(&s.omega_true).map(|(a, b)| libm::fabs(a - b)).collect();
            let last_bad = s.error.iter().rposition(|&e| !(e < cfg.convergence_threshold));
            let convergence_frame = match last_bad {
                None => s.frames.first().copied(),
                Some(i) => s.frames.get(i + 1).copied(),
            };
            ObjectSummary {
                label: s.label,
                frames_tracked: s.frames.len(),
                rmse: window_mean(&s.frames, &sq, cfg.error_window).map(libm::sqrt),
                mean_error: window_mean(&s.frames, &s.error, cfg.error_window),
                mean_abs_omega_error: window_mean(&s.frames, &omega_err, cfg.omega_window),
                convergence_frame,
                initial_error: s.error.first().copied(),
            }
        })
        .collect();

    let mut verdicts: BTreeMap<u32, (usize, usize, BTreeMap<String, usize>)> = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.status == TrackStatus::Confirmed && !e.verdict.is_empty()) {
        let v = verdicts.entry(e.id).or_default();
        v.0 += 1;
        if e.verdict == "unmodeled" {
            v.1 += 1;
        }
        *v.2.entry(e.verdict.clone()).or_default() += 1;
    }
    let verdicts = verdicts
        .into_iter()
        .map(|(track, (confirmed_frames, unmodeled_frames, counts))| VerdictStats {
            track,
            label: assoc.get(&track).copied(),
            confirmed_frames,
            unmodeled_frames,
            majority: counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(k, _)| k).unwrap_or_default(),
        })
        .collect();

    Ok(MetricsReport { objects, summary, identity_swaps: identity_swaps(estimates, truth, assoc), verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ground_truth, DiskScene};

    fn rows_from_truth(truth: &GroundTruth, offset: (f64, f64)) -> Vec<TrackEstimate> {
        let mut out = Vec::new();
        for (k, frame) in truth.frames.iter().enumerate() {
            for t in frame.iter().filter(|t| t.visible) {
                out.push(TrackEstimate {
                    frame: k,
                    id: t.label + 10,
                    label: None,
                    status: if k < 2 { TrackStatus::Tentative } else { TrackStatus::Confirmed },
                    x: t.x + offset.0,
                    y: t.y + offset.1,
                    vx: 0.0,
                    vy: 0.0,
                    theta: t.theta,
                    omega: t.omega,
                    r: 0.0,
                    verdict: String::from("circle"),
                    confidence: 1.0,
                    matched: true,
                });
            }
        }
        out
    }

    #[test]
    fn exact_estimates_give_zero_error() {
        let truth = ground_truth(&DiskScene::default());
        let rows = rows_from_truth(&truth, (0.0, 0.0));
        let assoc = bind_labels(&rows, &truth);
        assert_eq!(assoc.len(), 3);
        assert!(assoc.iter().all(|(id, l)| *id == l + 10));
        let rep = compute_metrics(&rows, &truth, &assoc, &MetricsConfig::default()).unwrap();
        assert!(rep.objects.iter().all(|o| o.error.iter().all(|&e| e == 0.0)));
        assert!(rep.summary.iter().all(|s| s.mean_abs_omega_error == Some(0.0) && s.convergence_frame == Some(0)));
        assert_eq!(rep.identity_swaps, 0);
        assert_eq!(rep.objects.iter().map(|o| o.label).collect::<Vec<_>>(), alloc::vec![1, 2, 3]);
    }

    #[test]
    fn constant_offset_gives_constant_error() {
        let truth = ground_truth(&DiskScene::default());
        let rows = rows_from_truth(&truth, (3.0, 4.0));
        let assoc = bind_labels(&rows, &truth);
        let rep = compute_metrics(&rows, &truth, &assoc, &MetricsConfig::default()).unwrap();
        for o in &rep.objects {
            assert!(o.error.iter().all(|&e| (e - 5.0).abs() < 1e-12));
        }
        assert!(rep.summary.iter().all(|s| s.convergence_frame.is_none()));
        assert!(rep.summary.iter().all(|s| (s.rmse.unwrap() - 5.0).abs() < 1e-12));
    }

    #[test]
    fn missing_truth_frame_is_reported() {
        let truth = ground_truth(&DiskScene::default());
        let mut rows = rows_from_truth(&truth, (0.0, 0.0));
        let assoc = bind_labels(&rows, &truth);
        rows[5].frame = 10_000;
        assert_eq!(compute_metrics(&rows, &truth, &assoc, &MetricsConfig::default()), Err(MetricsError::MissingFrame(10_000)));
    }

    #[test]
    fn swapped_rows_are_counted() {
        let truth = ground_truth(&DiskScene::default());
        let mut rows = rows_from_truth(&truth, (0.0, 0.0));
        let assoc = bind_labels(&rows, &truth);
        let moved = rows.iter().position(|r| r.frame == 50 && r.id == 11).unwrap();
        let other = truth.record(50, 3).unwrap();
        rows[moved].x = other.x;
        rows[moved].y = other.y;
        assert_eq!(identity_swaps(&rows, &truth, &assoc), 1);
    }
}
