//! Log-intensity event camera emulation.
//!
//! Each pixel keeps a reference log-luminance. When a new frame arrives the
//! change since the reference is quantized by the contrast threshold `C`
//! (rounding toward zero); that many signed events are emitted and the
//! reference advances by the emitted amount, so the residual carries over.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::scene::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds of simulated time.
    pub t: f64,
    pub x: u16,
    pub y: u16,
    /// +1 (ON) or −1 (OFF).
    pub polarity: i8,
}

pub type EventStream = Vec<Event>;

/// Total order used for every stream: time, then row, then column.
pub fn event_order(a: &Event, b: &Event) -> core::cmp::Ordering {
    a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)).then(a.polarity.cmp(&b.polarity))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DvsConfig {
    /// Log-luminance units.
    pub contrast_threshold: f64,
    pub eps: f64,
    /// Seconds per video frame.
    pub frame_period: f64,
    /// Random timestamp jitter, as a fraction of the intra-frame spacing.
    /// Zero keeps timestamps evenly spaced.
    pub jitter: f64,
    /// Per-pixel refractory period in seconds; events inside it are dropped
    /// and the reference is not advanced for them.
    pub refractory: f64,
    /// Spurious events per pixel per second.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for DvsConfig {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.15,
            eps: 1e-3,
            frame_period: 0.1,
            jitter: 0.0,
            refractory: 0.0,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DvsError {
    #[error("contrast threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("luminance floor eps must be positive and finite, got {0}")]
    Eps(f64),
    #[error("frame period must be positive, got {0}")]
    FramePeriod(f64),
    #[error("frame is {got:?}, camera is {expected:?}")]
    Dimensions { expected: (usize, usize), got: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvsState {
    pub width: usize,
    pub height: usize,
    pub ref_log: Vec<f64>,
    pub config: DvsConfig,
    last_event: Vec<f64>,
}

/// Sets the per-pixel reference from the first frame. No events.
pub fn init_reference(frame0: &Frame, config: &DvsConfig) -> Result<DvsState, DvsError> {
    let c = config.contrast_threshold;
    if !(c > 0.0 && c.is_finite()) {
        return Err(DvsError::Threshold(c));
    }
    if !(config.eps > 0.0 && config.eps.is_finite()) {
        return Err(DvsError::Eps(config.eps));
    }
    if !(config.frame_period > 0.0) {
        return Err(DvsError::FramePeriod(config.frame_period));
    }
    let eps = config.eps;
    Ok(DvsState {
        width: frame0.width,
        height: frame0.height,
        ref_log: frame0.data.iter().map(|&i| libm::log(i + eps)).collect(),
        config: config.clone(),
        last_event: vec![f64::NEG_INFINITY; frame0.width * frame0.height],
    })
}

/// Converts frame `k` into events stamped inside `(k·T, (k+1)·T)`.
pub fn emulate_step(state: &mut DvsState, frame: &Frame, k: usize) -> Result<EventStream, DvsError> {
    if frame.width != state.width || frame.height != state.height {
        return Err(DvsError::Dimensions {
            expected: (state.width, state.height),
            got: (frame.width, frame.height),
        });
    }
    let cfg = &state.config;
    let (c, eps, period) = (cfg.contrast_threshold, cfg.eps, cfg.frame_period);
    let t0 = k as f64 * period;
    let needs_rng = cfg.jitter > 0.0 || cfg.noise_rate > 0.0;
    let mut rng = stream_rng(cfg.seed, k as u64);
    let mut events = Vec::new();

    for (p, &lum) in frame.data.iter().enumerate() {
        let delta = libm::log(lum + eps) - state.ref_log[p];
        let n = libm::trunc(delta / c);
        if n == 0.0 {
            continue;
        }
        let count = n.abs() as usize;
        let polarity: i8 = if n > 0.0 { 1 } else { -1 };
        let spacing = period / (count + 1) as f64;
        let (x, y) = ((p % state.width) as u16, (p / state.width) as u16);
        let mut emitted = 0usize;
        for j in 0..count {
            let mut t = t0 + (j + 1) as f64 * spacing;
            if cfg.jitter > 0.0 {
                t += (rng.random::<f64>() - 0.5) * cfg.jitter * spacing;
            }
            if cfg.refractory > 0.0 {
                if t - state.last_event[p] < cfg.refractory {
                    continue;
                }
                state.last_event[p] = t;
            }
            events.push(Event { t, x, y, polarity });
            emitted += 1;
        }
        state.ref_log[p] += f64::from(polarity) * emitted as f64 * c;
    }

    if needs_rng && cfg.noise_rate > 0.0 {
        let p_noise = (cfg.noise_rate * period).min(1.0);
        for p in 0..frame.data.len() {
            if rng.random::<f64>() < p_noise {
                let t = t0 + rng.random::<f64>() * period;
                let polarity = if rng.random::<bool>() { 1 } else { -1 };
                let (x, y) = ((p % state.width) as u16, (p / state.width) as u16);
                events.push(Event { t, x, y, polarity });
            }
        }
    }
    events.sort_by(event_order);
    Ok(events)
}
