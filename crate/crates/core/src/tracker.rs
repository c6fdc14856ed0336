//! Multi-object tracking: gating, greedy association, filter cycling, frame
//! validation and the tentative → confirmed → dead lifecycle.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{validate_detection, AnnError, MlpNetwork, ValidationVerdict};
use crate::detector::Detection;
use crate::emsif::{
    h_jacobian, h_measure, init_from_detection, position, predict, update, velocity, FilterConfig, FilterError, FilterState,
    ModelKind,
};
use crate::rng::derive_seed;
use crate::scene::Frame;
use crate::snn_emsif::{NeuralConfig, NeuralError, SpikingFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Dense,
    Spiking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

impl TrackStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Dead => "dead",
        }
    }
}

/// Event-surface centroids describe the middle of the frame interval.
pub const CENTROID_LAG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Squared Mahalanobis gate (99% χ², 2 dof).
    pub gate: f64,
    pub confirm_hits: usize,
    pub confirm_window: usize,
    pub max_misses: usize,
    /// Distance band around the disk center that selects the disk model.
    pub disk_band: [f64; 2],
    pub disk: FilterConfig,
    pub constant_velocity: FilterConfig,
    pub neural: NeuralConfig,
    pub backend: Backend,
    pub seed: u64,
    /// Fraction of neurons silenced in every spiking population at
    /// `silence_after` (0 disables).
    pub silence_fraction: f64,
    pub silence_after: usize,
    /// Keep a spike raster of the lowest-id spiking track.
    pub record_spikes: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate: 9.21,
            confirm_hits: 3,
            confirm_window: 5,
            max_misses: 5,
            disk_band: [10.0, 60.0],
            disk: FilterConfig { measurement_lag: CENTROID_LAG, ..FilterConfig::default() },
            constant_velocity: FilterConfig { measurement_lag: CENTROID_LAG, ..FilterConfig::constant_velocity() },
            neural: NeuralConfig::default(),
            backend: Backend::Dense,
            seed: 0,
            silence_fraction: 0.0,
            silence_after: 100,
            record_spikes: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("track {id}: {source}")]
    Neural { id: u32, source: NeuralError },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Ann(#[from] AnnError),
}

#[derive(Debug, Clone)]
pub enum TrackFilter {
    Dense,
    Spiking(Box<SpikingFilter>),
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub model: ModelKind,
    pub filter: TrackFilter,
    /// Latest posterior (or coasted prior after a miss).
    pub state: FilterState,
    /// Prior for the frame being processed.
    pub prior: Option<FilterState>,
    pub status: TrackStatus,
    pub hits: usize,
    pub misses: usize,
    /// Hit flags of the most recent frames, newest last.
    pub recent: VecDeque<bool>,
    pub verdict: Option<ValidationVerdict>,
    pub birth_frame: usize,
    pub confirmed_frame: Option<usize>,
    /// Spiking was requested but the state could not be embedded.
    pub dense_fallback: bool,
}

impl Track {
    pub fn backend(&self) -> Backend {
        match self.filter {
            TrackFilter::Dense => Backend::Dense,
            TrackFilter::Spiking(_) => Backend::Spiking,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Dead
    }
}

/// One row of `tracks.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEstimate {
    pub frame: usize,
    pub id: u32,
    /// Ground-truth label bound at confirmation; filled in by the pipeline.
    pub label: Option<u32>,
    pub status: TrackStatus,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Disk-polar components; `NaN` for constant-velocity tracks.
    pub theta: f64,
    pub omega: f64,
    pub r: f64,
    pub verdict: String,
    pub confidence: f64,
    pub matched: bool,
}

/// Predicted measurement and innovation covariance of one live track.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub id: u32,
    pub z: [f64; 2],
    pub s: Matrix2<f64>,
}

pub fn gate_for(cfg: &FilterConfig, id: u32, prior: &FilterState) -> Gate {
    let h = h_jacobian(cfg, &prior.s);
    let hph: DMatrix<f64> = &h * &prior.p * h.transpose();
    let r = cfg.r();
    let s = Matrix2::new(hph[(0, 0)], hph[(0, 1)], hph[(1, 0)], hph[(1, 1)]) + r;
    Gate { id, z: h_measure(cfg, &prior.s), s }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(gate index, detection index)`.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
    /// Some innovation covariance was singular and got `+1e−6·I`.
    pub singular: bool,
}

/// Squared Mahalanobis distance; the flag reports a regularized `S`.
pub fn mahalanobis2(gate: &Gate, z: [f64; 2]) -> (f64, bool) {
    let d = Vector2::new(z[0] - gate.z[0], z[1] - gate.z[1]);
    match gate.s.try_inverse().filter(|_| gate.s.determinant().abs() > 1e-12) {
        Some(inv) => ((d.transpose() * inv * d)[0], false),
        None => {
            let reg = gate.s + Matrix2::identity() * 1e-6;
            let inv = reg.try_inverse().unwrap_or_else(Matrix2::identity);
            ((d.transpose() * inv * d)[0], true)
        }
    }
}

/// Greedy gating in detection order: each detection takes the closest unused
/// track inside the gate, ties going to the lower track id.
pub fn associate(gates: &[Gate], detections: &[[f64; 2]], gate_limit: f64) -> Association {
    let mut used = alloc::vec![false; gates.len()];
    let mut out = Association::default();
    for (j, &z) in detections.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in gates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let (d2, singular) = mahalanobis2(g, z);
            out.singular |= singular;
            if d2 > gate_limit {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, bd)) => d2 < bd || (d2 == bd && g.id < gates[b].id),
            };
            if better {
                best = Some((i, d2));
            }
        }
        match best {
            Some((i, _)) => {
                used[i] = true;
                out.pairs.push((i, j));
            }
            None => out.unmatched_detections.push(j),
        }
    }
    out.unmatched_tracks = (0..gates.len()).filter(|&i| !used[i]).collect();
    out
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub tracks: Vec<Track>,
    next_id: u32,
    /// Spike raster `(step, neuron)` of the recorded track.
    pub spikes: Vec<(u64, u32)>,
    recorded: Option<u32>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self { config, tracks: Vec::new(), next_id: 1, spikes: Vec::new(), recorded: None }
    }

    pub fn filter_config(&self, model: ModelKind) -> &FilterConfig {
        match model {
            ModelKind::DiskPolar => &self.config.disk,
            ModelKind::ConstantVelocity => &self.config.constant_velocity,
        }
    }

    pub fn live(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_alive())
    }

    fn model_for(&self, z: [f64; 2]) -> ModelKind {
        let c = self.config.disk.center;
        let d = libm::hypot(z[0] - c[0], z[1] - c[1]);
        if d >= self.config.disk_band[0] && d <= self.config.disk_band[1] {
            ModelKind::DiskPolar
        } else {
            ModelKind::ConstantVelocity
        }
    }

    /// Processes one frame of detections. `net` and `image` drive validation
    /// of confirmed tracks; pass `None` to skip it.
    pub fn step(
        &mut self,
        detections: &[Detection],
        frame: usize,
        validator: Option<(&MlpNetwork, &Frame)>,
    ) -> Result<Vec<TrackEstimate>, TrackerError> {
        // predict
        let mut gates = Vec::new();
        let mut live_idx = Vec::new();
        for (i, t) in self.tracks.iter_mut().enumerate().filter(|(_, t)| t.is_alive()) {
            let cfg = match t.model {
                ModelKind::DiskPolar => &self.config.disk,
                ModelKind::ConstantVelocity => &self.config.constant_velocity,
            };
            let prior = match &t.filter {
                TrackFilter::Dense => predict(cfg, &t.state),
                TrackFilter::Spiking(sf) => sf.predict(),
            };
            gates.push(gate_for(cfg, t.id, &prior));
            t.prior = Some(prior);
            live_idx.push(i);
        }

        let zs: Vec<[f64; 2]> = detections.iter().map(|d| [d.x, d.y]).collect();
        let assoc = associate(&gates, &zs, self.config.gate);
        let mut matched: Vec<Option<usize>> = alloc::vec![None; live_idx.len()];
        for &(g, d) in &assoc.pairs {
            matched[g] = Some(d);
        }

        // update or coast, in track-id order
        let silence_now = self.config.silence_fraction > 0.0 && frame == self.config.silence_after;
        for (g, &i) in live_idx.iter().enumerate() {
            let z = matched[g].map(|d| zs[d]);
            let track = &mut self.tracks[i];
            let cfg = match track.model {
                ModelKind::DiskPolar => &self.config.disk,
                ModelKind::ConstantVelocity => &self.config.constant_velocity,
            };
            let prior = track.prior.take().expect("predicted above");
            track.state = match &mut track.filter {
                TrackFilter::Dense => match z {
                    Some(z) => update(cfg, &prior, z).0,
                    None => prior,
                },
                TrackFilter::Spiking(sf) => {
                    if silence_now {
                        sf.network.silence(self.config.silence_fraction, derive_seed(self.config.seed ^ 0x51, track.id as u64));
                    }
                    let out = sf.update(z).map_err(|source| TrackerError::Neural { id: track.id, source })?;
                    if self.recorded == Some(track.id) {
                        if let Some(log) = sf.network.spike_log.as_mut() {
                            self.spikes.append(log);
                        }
                    }
                    out
                }
            };
            track.recent.push_back(z.is_some());
            if track.recent.len() > self.config.confirm_window {
                track.recent.pop_front();
            }
            if z.is_some() {
                track.hits += 1;
                track.misses = 0;
            } else {
                track.misses += 1;
            }
            if track.misses >= self.config.max_misses {
                track.status = TrackStatus::Dead;
            } else if track.status == TrackStatus::Tentative
                && track.recent.iter().filter(|&&h| h).count() >= self.config.confirm_hits
            {
                track.status = TrackStatus::Confirmed;
                track.confirmed_frame = Some(frame);
            }
        }

        // births
        let mut born = Vec::new();
        for &d in &assoc.unmatched_detections {
            let z = zs[d];
            let model = self.model_for(z);
            let cfg = self.filter_config(model).clone();
            let state = match init_from_detection(&cfg, z, frame) {
                Ok(s) => s,
                Err(FilterError::AtCenter(..)) => continue,
                Err(e) => return Err(e.into()),
            };
            let id = self.next_id;
            self.next_id += 1;
            let mut dense_fallback = false;
            let filter = if self.config.backend == Backend::Spiking && model == ModelKind::DiskPolar {
                match SpikingFilter::new(&cfg, &self.config.neural, &state, derive_seed(self.config.seed, id as u64)) {
                    Ok(mut sf) => {
                        if self.config.record_spikes && self.recorded.is_none() {
                            self.recorded = Some(id);
                            sf.network.spike_log = Some(Vec::new());
                        }
                        TrackFilter::Spiking(Box::new(sf))
                    }
                    Err(NeuralError::OutOfDomain { .. }) => {
                        dense_fallback = true;
                        TrackFilter::Dense
                    }
                    Err(source) => return Err(TrackerError::Neural { id, source }),
                }
            } else {
                TrackFilter::Dense
            };
            let mut recent = VecDeque::with_capacity(self.config.confirm_window);
            recent.push_back(true);
            born.push(Track {
                id,
                model,
                filter,
                state,
                prior: None,
                status: TrackStatus::Tentative,
                hits: 1,
                misses: 0,
                recent,
                verdict: None,
                birth_frame: frame,
                confirmed_frame: None,
                dense_fallback,
            });
        }
        let first_new = self.tracks.len();
        self.tracks.extend(born);

        // validation and records
        let mut det_of_track: Vec<Option<usize>> = alloc::vec![None; self.tracks.len()];
        for &(g, d) in &assoc.pairs {
            det_of_track[live_idx[g]] = Some(d);
        }
        let mut out = Vec::new();
        for (i, track) in self.tracks.iter_mut().enumerate() {
            let touched = live_idx.contains(&i) || i >= first_new;
            if !touched {
                continue;
            }
            let cfg = match track.model {
                ModelKind::DiskPolar => &self.config.disk,
                ModelKind::ConstantVelocity => &self.config.constant_velocity,
            };
            let pos = position(cfg, &track.state.s);
            if track.status == TrackStatus::Confirmed {
                if let Some((net, image)) = validator {
                    let at = det_of_track[i].map_or((pos[0], pos[1]), |d| (zs[d][0], zs[d][1]));
                    track.verdict = Some(validate_detection(net, image, at)?);
                }
            }
            out.push(estimate(track, cfg, frame, det_of_track[i].is_some() || i >= first_new));
        }
        Ok(out)
    }
}

fn estimate(track: &Track, cfg: &FilterConfig, frame: usize, matched: bool) -> TrackEstimate {
    let s = &track.state.s;
    let pos = position(cfg, s);
    let v = velocity(cfg, s);
    let (theta, omega, r) = match track.model {
        ModelKind::DiskPolar => (s[0], s[1], s[2]),
        ModelKind::ConstantVelocity => (f64::NAN, f64::NAN, f64::NAN),
    };
    let (verdict, confidence) = match &track.verdict {
        Some(v) => (String::from(v.name()), v.confidence),
        None => (String::new(), f64::NAN),
    };
    TrackEstimate {
        frame,
        id: track.id,
        label: None,
        status: track.status,
        x: pos[0],
        y: pos[1],
        vx: v[0],
        vy: v[1],
        theta,
        omega,
        r,
        verdict,
        confidence,
        matched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::BBox;

    fn det(x: f64, y: f64, mass: f64) -> Detection {
        Detection { x, y, mass, bbox: BBox { x0: 0, y0: 0, x1: 0, y1: 0 }, pixels: 9, frame: 0, window: 0 }
    }

    fn gate(id: u32, z: [f64; 2]) -> Gate {
        Gate { id, z, s: Matrix2::identity() * 2.0 }
    }

    #[test]
    fn no_tracks_leaves_all_detections_unmatched() {
        let a = associate(&[], &[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], 9.21);
        assert_eq!(a.unmatched_detections, alloc::vec![0, 1, 2]);
        assert!(a.pairs.is_empty());
    }

    #[test]
    fn gate_rejects_far_detection() {
        let g = Gate { id: 1, z: [114.0, 64.0], s: Matrix2::identity() * 1.01 };
        let a = associate(&[g], &[[115.0, 64.0], [30.0, 30.0]], 9.21);
        assert_eq!(a.pairs, alloc::vec![(0, 0)]);
        assert_eq!(a.unmatched_detections, alloc::vec![1]);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let a = associate(&[gate(7, [10.0, 10.0]), gate(3, [12.0, 10.0])], &[[11.0, 10.0]], 9.21);
        assert_eq!(a.pairs, alloc::vec![(1, 0)]);
    }

    #[test]
    fn singular_covariance_is_regularized() {
        let g = Gate { id: 1, z: [0.0, 0.0], s: Matrix2::zeros() };
        let (d2, flag) = mahalanobis2(&g, [1e-3, 0.0]);
        assert!(flag && d2.is_finite());
    }

    #[test]
    fn greedy_matches_exhaustive_optimum_when_separated() {
        let gates = [gate(1, [20.0, 20.0]), gate(2, [80.0, 30.0]), gate(3, [50.0, 100.0])];
        let dets = [[51.0, 99.2], [19.4, 21.0], [80.9, 30.5]];
        let a = associate(&gates, &dets, 9.21);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let cost = |p: &[usize; 3]| (0..3).map(|j| mahalanobis2(&gates[p[j]], dets[j]).0).sum::<f64>();
        let best = perms.iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
        let mut greedy = [0; 3];
        for &(g, d) in &a.pairs {
            greedy[d] = g;
        }
        assert_eq!(&greedy, best);
    }

    fn orbit(k: usize) -> Vec<Detection> {
        let c = [64.0, 64.0];
        [(25.0, 0.0), (38.0, 2.1), (50.0, 4.2)]
            .iter()
            .map(|&(r, a)| {
                let th = a + 0.05 * k as f64;
                det(c[0] + r * libm::cos(th), c[1] + r * libm::sin(th), 20.0)
            })
            .collect()
    }

    #[test]
    fn tracks_confirm_then_die_under_occlusion() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for k in 0..20 {
            tr.step(&orbit(k), k, None).unwrap();
        }
        assert_eq!(tr.live().filter(|t| t.status == TrackStatus::Confirmed).count(), 3);
        assert!(tr.tracks.iter().all(|t| t.confirmed_frame == Some(2)));
        for k in 20..24 {
            tr.step(&[], k, None).unwrap();
            assert_eq!(tr.live().count(), 3, "coasting at frame {k}");
        }
        let rows = tr.step(&[], 24, None).unwrap();
        assert!(rows.iter().all(|r| r.status == TrackStatus::Dead));
        assert_eq!(tr.live().count(), 0);
        // dead tracks stay dead; new detections open new ids
        tr.step(&orbit(25), 25, None).unwrap();
        let ids: Vec<u32> = tr.live().map(|t| t.id).collect();
        assert_eq!(ids, alloc::vec![4, 5, 6]);
    }

    #[test]
    fn model_follows_geometry_band() {
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(&[det(114.0, 64.0, 5.0), det(5.0, 5.0, 5.0), det(64.5, 64.0, 5.0)], 0, None).unwrap();
        let models: Vec<ModelKind> = tr.tracks.iter().map(|t| t.model).collect();
        assert_eq!(models, alloc::vec![ModelKind::DiskPolar, ModelKind::ConstantVelocity, ModelKind::ConstantVelocity]);
    }

    #[test]
    fn omega_velocity_record() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let mut rows = Vec::new();
        for k in 0..150 {
            rows = tr.step(&orbit(k), k, None).unwrap();
        }
        for r in &rows {
            assert!((r.omega - 0.05).abs() < 0.005);
            let speed = libm::hypot(r.vx, r.vy);
            assert!((speed - r.r * r.omega).abs() < 1e-9);
            assert!((r.vx * (r.x - 64.0) + r.vy * (r.y - 64.0)).abs() < 1e-6, "velocity is tangential");
        }
    }
}
