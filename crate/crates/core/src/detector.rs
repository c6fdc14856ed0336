//! Pre-attentive detection on the event side.
//!
//! Events land on a per-pixel leaky accumulator (a non-spiking LIF sheet,
//! one unit per pixel). Thresholding the surface and grouping nearby
//! above-threshold pixels yields mass-weighted sub-pixel detections.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dvs::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Surface decay constant in frames.
    pub tau_det: f64,
    pub a_min: f64,
    pub min_pixels: usize,
    /// Above-threshold pixels closer than this (Euclidean, pixels) join the
    /// same detection.
    pub merge_radius: usize,
    pub windows_per_frame: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { tau_det: 0.5, a_min: 1.5, min_pixels: 3, merge_radius: 6, windows_per_frame: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("events are not sorted by time at index {0}")]
    Unsorted(usize),
    #[error("event at t={t} is later than the accumulation horizon {until}")]
    Future { t: f64, until: f64 },
    #[error("event at t={t} predates the last surface update {last}")]
    Stale { t: f64, last: f64 },
    #[error("event pixel ({0}, {1}) outside the surface")]
    OutOfBounds(u16, u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSurface {
    pub width: usize,
    pub height: usize,
    pub mass: Vec<f64>,
    /// Decay constant in frames.
    pub tau_det: f64,
    /// Seconds per frame, converts event time to frames.
    pub frame_period: f64,
    /// Simulated time (s) the surface is valid for.
    pub last_update: f64,
}

impl EventSurface {
    pub fn new(width: usize, height: usize, tau_det: f64, frame_period: f64) -> Self {
        Self { width, height, mass: vec![0.0; width * height], tau_det, frame_period, last_update: 0.0 }
    }

    fn weight(&self, age_seconds: f64) -> f64 {
        libm::exp(-age_seconds / (self.tau_det * self.frame_period))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.mass[y * self.width + x]
    }
}

/// Decays the surface to `until` and adds every event with weight
/// `exp(−(until − t)/τ)`. Polarity is ignored.
pub fn accumulate(surface: &mut EventSurface, events: &[Event], until: f64) -> Result<(), DetectorError> {
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(DetectorError::Unsorted(i + 1));
        }
    }
    if let Some(e) = events.last() {
        if e.t > until {
            return Err(DetectorError::Future { t: e.t, until });
        }
    }
    if let Some(e) = events.first() {
        if e.t < surface.last_update {
            return Err(DetectorError::Stale { t: e.t, last: surface.last_update });
        }
    }
    if let Some(e) = events.iter().find(|e| e.x as usize >= surface.width || e.y as usize >= surface.height) {
        return Err(DetectorError::OutOfBounds(e.x, e.y));
    }
    let decay = surface.weight(until - surface.last_update);
    surface.mass.iter_mut().for_each(|a| *a *= decay);
    for e in events {
        let w = surface.weight(until - e.t);
        surface.mass[e.y as usize * surface.width + e.x as usize] += w;
    }
    surface.last_update = until;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
    pub bbox: BBox,
    pub pixels: usize,
    pub frame: usize,
    pub window: usize,
}

/// Components of the thresholded surface, largest mass first (ties by x then
/// y), which is also the association order used by the tracker.
pub fn extract_detections(surface: &EventSurface, a_min: f64, min_pixels: usize, merge_radius: usize) -> Vec<Detection> {
    let (w, h) = (surface.width, surface.height);
    let mask: Vec<bool> = surface.mass.iter().map(|&a| a >= a_min && a > 0.0).collect();
    let grown = if merge_radius > 0 { dilate(&mask, w, h, merge_radius) } else { mask.clone() };

    let mut label = vec![usize::MAX; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !grown[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        label[start] = id;
        queue.push_back(start);
        let (mut sx, mut sy, mut sm, mut count) = (0.0, 0.0, 0.0, 0usize);
        let mut bbox = BBox { x0: usize::MAX, y0: usize::MAX, x1: 0, y1: 0 };
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            if mask[p] {
                let a = surface.mass[p];
                sx += a * x as f64;
                sy += a * y as f64;
                sm += a;
                count += 1;
                bbox.x0 = bbox.x0.min(x);
                bbox.y0 = bbox.y0.min(y);
                bbox.x1 = bbox.x1.max(x);
                bbox.y1 = bbox.y1.max(y);
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if grown[q] && label[q] == usize::MAX {
                        label[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push((count, sm, sx, sy, bbox));
    }
    let mut dets: Vec<Detection> = out
        .into_iter()
        .filter(|&(count, sm, ..)| count >= min_pixels.max(1) && sm > 0.0)
        .map(|(count, sm, sx, sy, bbox)| Detection {
            x: sx / sm,
            y: sy / sm,
            mass: sm,
            bbox,
            pixels: count,
            frame: 0,
            window: 0,
        })
        .collect();
    dets.sort_by(detection_order);
    dets
}

pub fn detection_order(a: &Detection, b: &Detection) -> core::cmp::Ordering {
    b.mass.total_cmp(&a.mass).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y))
}

fn dilate(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = vec![false; w * h];
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = ((p % w) as i64, (p / w) as i64);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                out[ny as usize * w + nx as usize] = true;
            }
        }
    }
    out
}

/// Stateful wrapper: one surface, extraction at the end of every window.
#[derive(Debug, Clone)]
pub struct Detector {
    pub surface: EventSurface,
    pub config: DetectorConfig,
}

impl Detector {
    pub fn new(width: usize, height: usize, config: DetectorConfig, frame_period: f64) -> Self {
        Self { surface: EventSurface::new(width, height, config.tau_det, frame_period), config }
    }

    /// Consumes the events of frame `k` (stamped in `(k·T, (k+1)·T)`) and
    /// returns the detections of every window, last window last.
    pub fn process_frame(&mut self, events: &[Event], k: usize) -> Result<Vec<Vec<Detection>>, DetectorError> {
        let period = self.surface.frame_period;
        let windows = self.config.windows_per_frame.max(1);
        let mut out = Vec::with_capacity(windows);
        let mut start = 0;
        for win in 0..windows {
            let until = (k as f64 + (win + 1) as f64 / windows as f64) * period;
            let end = if win + 1 == windows { events.len() } else { start + events[start..].partition_point(|e| e.t <= until) };
            accumulate(&mut self.surface, &events[start..end], until)?;
            start = end;
            let mut dets =
                extract_detections(&self.surface, self.config.a_min, self.config.min_pixels, self.config.merge_radius);
            for d in &mut dets {
                d.frame = k;
                d.window = win;
            }
            out.push(dets);
        }
        Ok(out)
    }
}
