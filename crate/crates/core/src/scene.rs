//! Synthetic rotating-disk video.
//!
//! Objects either orbit the disk center at a constant angular rate or, for
//! intruders, translate along a straight line after a spawn frame. Frames are
//! rasterized with 4×4 supersampling so sub-pixel motion still changes pixel
//! values. Pixel `(i, j)` is centered on the continuous coordinate `(i, j)`.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{PI, TAU};
use crate::rng::stream_rng;

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cross,
    Triangle,
    Circle,
    Square,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Cross => "cross",
            Shape::Triangle => "triangle",
            Shape::Circle => "circle",
            Shape::Square => "square",
        }
    }

    /// Whether the offset `(dx, dy)` from the object position lies inside a
    /// shape of full extent `size`.
    ///
    /// Circle: diameter. Square: side. Cross: arm span with 2 px thick bars.
    /// Triangle: equilateral with side `size`, apex towards −y, centroid at
    /// the object position.
    pub fn contains(self, dx: f64, dy: f64, size: f64) -> bool {
        let h = 0.5 * size;
        match self {
            Shape::Circle => dx * dx + dy * dy <= h * h,
            Shape::Square => dx.abs() <= h && dy.abs() <= h,
            Shape::Cross => {
                (dx.abs() <= h && dy.abs() <= 1.0) || (dy.abs() <= h && dx.abs() <= 1.0)
            }
            Shape::Triangle => {
                let r = size / libm::sqrt(3.0);
                let verts = triangle_vertices(r);
                (0..3).all(|i| {
                    let (x1, y1) = verts[i];
                    let (x2, y2) = verts[(i + 1) % 3];
                    (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1) >= 0.0
                })
            }
        }
    }

    /// Radius of a disk that encloses the shape.
    pub fn bounding_radius(self, size: f64) -> f64 {
        let h = 0.5 * size;
        match self {
            Shape::Circle => h,
            Shape::Square => h * core::f64::consts::SQRT_2,
            Shape::Cross => libm::hypot(h, 1.0),
            Shape::Triangle => size / libm::sqrt(3.0),
        }
    }
}

fn triangle_vertices(r: f64) -> [(f64, f64); 3] {
    let mut out = [(0.0, 0.0); 3];
    for (i, v) in out.iter_mut().enumerate() {
        let a = -PI / 2.0 + i as f64 * TAU / 3.0;
        *v = (r * libm::cos(a), r * libm::sin(a));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub size: f64,
    /// 0 for linear intruders.
    #[serde(default)]
    pub orbit_radius: f64,
    #[serde(default)]
    pub initial_angle: f64,
    #[serde(default)]
    pub spawn_frame: u32,
    /// Pixels per frame; zero for orbiting objects.
    #[serde(default)]
    pub linear_velocity: [f64; 2],
    /// Position at `spawn_frame` for linear intruders.
    #[serde(default)]
    pub start: [f64; 2],
    pub label: u32,
}

impl SceneObject {
    pub fn orbiting(shape: Shape, size: f64, orbit_radius: f64, initial_angle: f64, label: u32) -> Self {
        Self {
            shape,
            size,
            orbit_radius,
            initial_angle,
            spawn_frame: 0,
            linear_velocity: [0.0, 0.0],
            start: [0.0, 0.0],
            label,
        }
    }

    pub fn intruder(shape: Shape, size: f64, start: [f64; 2], velocity: [f64; 2], spawn_frame: u32, label: u32) -> Self {
        Self {
            shape,
            size,
            orbit_radius: 0.0,
            initial_angle: 0.0,
            spawn_frame,
            linear_velocity: velocity,
            start,
            label,
        }
    }

    pub fn is_orbiting(&self) -> bool {
        self.orbit_radius > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiskScene {
    pub width: usize,
    pub height: usize,
    pub background_intensity: f64,
    pub object_intensity: f64,
    pub center: [f64; 2],
    /// rad/frame
    pub omega: f64,
    pub frame_count: usize,
    pub pixel_noise_sigma: f64,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

impl Default for DiskScene {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            background_intensity: 0.2,
            object_intensity: 0.9,
            center: [64.0, 64.0],
            omega: 0.05,
            frame_count: 200,
            pixel_noise_sigma: 0.0,
            objects: vec![
                SceneObject::orbiting(Shape::Cross, 11.0, 25.0, 0.0, 1),
                SceneObject::orbiting(Shape::Triangle, 9.0, 38.0, TAU / 3.0, 2),
                SceneObject::orbiting(Shape::Circle, 8.0, 50.0, 2.0 * TAU / 3.0, 3),
            ],
            seed: 0,
        }
    }
}

impl DiskScene {
    /// The default three orbiting objects on a 192×192 canvas plus a 12 px
    /// square entering at frame 80 along `y = 20`, outside the orbit band.
    pub fn with_intruder() -> Self {
        let mut scene = Self {
            width: 192,
            height: 192,
            center: [96.0, 96.0],
            ..Self::default()
        };
        scene.objects.push(SceneObject::intruder(
            Shape::Square,
            12.0,
            [20.0, 20.0],
            [1.0, 0.0],
            80,
            4,
        ));
        scene
    }

    /// Position of `obj` at (possibly fractional) frame time `k`.
    pub fn position(&self, obj: &SceneObject, k: f64) -> (f64, f64) {
        if obj.is_orbiting() {
            let theta = obj.initial_angle + self.omega * k;
            (
                self.center[0] + obj.orbit_radius * libm::cos(theta),
                self.center[1] + obj.orbit_radius * libm::sin(theta),
            )
        } else {
            let dt = (k - f64::from(obj.spawn_frame)).max(0.0);
            (
                obj.start[0] + obj.linear_velocity[0] * dt,
                obj.start[1] + obj.linear_velocity[1] * dt,
            )
        }
    }

    fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    pub fn is_visible(&self, obj: &SceneObject, k: usize) -> bool {
        if k < obj.spawn_frame as usize {
            return false;
        }
        if obj.is_orbiting() {
            return true;
        }
        let (x, y) = self.position(obj, k as f64);
        self.in_bounds(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("image must be at least 32x32, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("intensities must satisfy 0 <= background < object <= 1")]
    Intensity,
    #[error("frame_count must be at least 1")]
    NoFrames,
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("object {label}: {reason}")]
    Object { label: u32, reason: &'static str },
    #[error("object {label}: orbit leaves the image")]
    OutOfBounds { label: u32 },
    #[error("objects {0} and {1} share orbit radius {2}")]
    SharedOrbit(u32, u32, f64),
    #[error("duplicate label {0}")]
    DuplicateLabel(u32),
    #[error("frame index {index} out of range (frame_count {count})")]
    FrameIndex { index: usize, count: usize },
}

/// Checks every scene invariant and returns the accepted configuration.
pub fn validate_scene(cfg: &DiskScene) -> Result<DiskScene, SceneError> {
    if cfg.width < 32 || cfg.height < 32 {
        return Err(SceneError::TooSmall(cfg.width, cfg.height));
    }
    for (name, v) in [
        ("background_intensity", cfg.background_intensity),
        ("object_intensity", cfg.object_intensity),
        ("center", cfg.center[0]),
        ("center", cfg.center[1]),
        ("omega", cfg.omega),
        ("pixel_noise_sigma", cfg.pixel_noise_sigma),
    ] {
        if !v.is_finite() {
            return Err(SceneError::NonFinite(name));
        }
    }
    if !(0.0 <= cfg.background_intensity
        && cfg.background_intensity < cfg.object_intensity
        && cfg.object_intensity <= 1.0)
    {
        return Err(SceneError::Intensity);
    }
    if cfg.frame_count == 0 {
        return Err(SceneError::NoFrames);
    }
    if cfg.pixel_noise_sigma < 0.0 {
        return Err(SceneError::NonFinite("pixel_noise_sigma"));
    }
    for (i, obj) in cfg.objects.iter().enumerate() {
        let label = obj.label;
        let finite = [obj.size, obj.orbit_radius, obj.initial_angle]
            .iter()
            .chain(obj.linear_velocity.iter())
            .chain(obj.start.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(SceneError::NonFinite("objects"));
        }
        if obj.size <= 0.0 {
            return Err(SceneError::Object { label, reason: "size must be positive" });
        }
        let moving = obj.linear_velocity[0] != 0.0 || obj.linear_velocity[1] != 0.0;
        if obj.orbit_radius < 0.0 || (obj.orbit_radius > 0.0) == moving {
            return Err(SceneError::Object {
                label,
                reason: "exactly one of orbit_radius > 0 or a nonzero linear velocity is required",
            });
        }
        if obj.is_orbiting() {
            let reach = obj.orbit_radius + 0.5 * obj.size;
            let (cx, cy) = (cfg.center[0], cfg.center[1]);
            if cx - reach < 0.0
                || cy - reach < 0.0
                || cx + reach > (cfg.width - 1) as f64
                || cy + reach > (cfg.height - 1) as f64
            {
                return Err(SceneError::OutOfBounds { label });
            }
        } else if !cfg.in_bounds(obj.start[0], obj.start[1]) {
            return Err(SceneError::OutOfBounds { label });
        }
        for other in &cfg.objects[..i] {
            if other.label == label {
                return Err(SceneError::DuplicateLabel(label));
            }
            if obj.is_orbiting() && other.is_orbiting() && other.orbit_radius == obj.orbit_radius {
                return Err(SceneError::SharedOrbit(other.label, label, obj.orbit_radius));
            }
        }
    }
    Ok(cfg.clone())
}

/// Grayscale raster, row-major, luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub index: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn uniform(width: usize, height: usize, index: usize, value: f64) -> Self {
        Self { width, height, index, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel value, or `None` outside the raster.
    pub fn get_signed(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Renders frame `k`.
pub fn render_frame(scene: &DiskScene, k: usize) -> Result<Frame, SceneError> {
    if k >= scene.frame_count {
        return Err(SceneError::FrameIndex { index: k, count: scene.frame_count });
    }
    Ok(render_at(scene, k))
}

fn render_at(scene: &DiskScene, k: usize) -> Frame {
    let (w, h) = (scene.width, scene.height);
    // one bit per supersample, union over objects
    let mut cover = vec![0u16; w * h];
    let step = 1.0 / SUPERSAMPLE as f64;
    for obj in &scene.objects {
        if k < obj.spawn_frame as usize {
            continue;
        }
        let (px, py) = scene.position(obj, k as f64);
        let reach = obj.shape.bounding_radius(obj.size) + 1.0;
        let x0 = libm::floor(px - reach).max(0.0) as usize;
        let y0 = libm::floor(py - reach).max(0.0) as usize;
        let x1 = (libm::ceil(px + reach) as i64).min(w as i64 - 1);
        let y1 = (libm::ceil(py + reach) as i64).min(h as i64 - 1);
        if x1 < 0 || y1 < 0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let mut bits = 0u16;
                for sy in 0..SUPERSAMPLE {
                    let fy = y as f64 - 0.5 + (sy as f64 + 0.5) * step;
                    for sx in 0..SUPERSAMPLE {
                        let fx = x as f64 - 0.5 + (sx as f64 + 0.5) * step;
                        if obj.shape.contains(fx - px, fy - py, obj.size) {
                            bits |= 1 << (sy * SUPERSAMPLE + sx);
                        }
                    }
                }
                cover[y * w + x] |= bits;
            }
        }
    }
    let bg = scene.background_intensity;
    let contrast = scene.object_intensity - bg;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut data: Vec<f64> = cover
        .iter()
        .map(|c| bg + contrast * f64::from(c.count_ones()) / total)
        .collect();
    if scene.pixel_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, scene.pixel_noise_sigma).expect("sigma validated");
        let mut rng = stream_rng(scene.seed, k as u64);
        for v in &mut data {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Frame { width: w, height: h, index: k, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub label: u32,
    pub x: f64,
    pub y: f64,
    /// Unwrapped polar angle about the disk center.
    pub theta: f64,
    /// rad/frame; 0 for linear intruders.
    pub omega: f64,
    pub visible: bool,
}

/// Per-frame, per-object analytic truth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<Vec<TruthRecord>>,
}

impl GroundTruth {
    pub fn record(&self, k: usize, label: u32) -> Option<&TruthRecord> {
        self.frames.get(k)?.iter().find(|r| r.label == label)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

pub fn ground_truth(scene: &DiskScene) -> GroundTruth {
    let frames = (0..scene.frame_count)
        .map(|k| {
            scene
                .objects
                .iter()
                .map(|obj| {
                    let (x, y) = scene.position(obj, k as f64);
                    let (theta, omega) = if obj.is_orbiting() {
                        (obj.initial_angle + scene.omega * k as f64, scene.omega)
                    } else {
                        (libm::atan2(y - scene.center[1], x - scene.center[0]), 0.0)
                    };
                    TruthRecord { label: obj.label, x, y, theta, omega, visible: scene.is_visible(obj, k) }
                })
                .collect()
        })
        .collect();
    GroundTruth { frames }
}
