//! Extended sliding innovation filter (dense reference implementation).
//!
//! Two motion models are supported: `DiskPolar`, state `[θ, ω, r]` with the
//! object on a circle around a known center, and `ConstantVelocity`, state
//! `[x, y, vx, vy]`. Time is measured in frames. The gain is a right inverse
//! of the measurement Jacobian scaled per channel by the saturated innovation
//! `min(1, |z̃ᵢ|/δᵢ)`, and the covariance uses the Joseph form.
//!
//! A measurement may describe the object `measurement_lag` frames before the
//! frame instant (event centroids integrate over the preceding interval), so
//! `h` evaluates the motion model that far back.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{min_symmetric_eigenvalue, symmetrize, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DiskPolar,
    ConstantVelocity,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::DiskPolar => 3,
            ModelKind::ConstantVelocity => 4,
        }
    }
}

/// Which right inverse of `H` forms the full-saturation gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainRule {
    /// `P⁻Hᵀ(HP⁻Hᵀ)⁻¹`. Also reaches state components that do not appear in
    /// `h` (ω, velocity) through their prior correlation.
    #[default]
    CovarianceWeighted,
    /// `Hᵀ(HHᵀ)⁻¹`, the minimum-norm correction.
    PseudoInverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub model: ModelKind,
    pub q_diag: Vec<f64>,
    pub r_diag: [f64; 2],
    /// Boundary-layer widths in pixels.
    pub delta: [f64; 2],
    pub p0_diag: Vec<f64>,
    pub center: [f64; 2],
    pub r_min: f64,
    pub gain_rule: GainRule,
    /// Frames between the instant a measurement describes and the frame
    /// instant; 0 for instantaneous measurements.
    pub measurement_lag: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::disk_polar([64.0, 64.0])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    Config(&'static str),
    #[error("detection at ({0}, {1}) is within r_min of the disk center")]
    AtCenter(f64, f64),
}

impl FilterConfig {
    pub fn disk_polar(center: [f64; 2]) -> Self {
        Self {
            model: ModelKind::DiskPolar,
            q_diag: vec![1e-5, 1e-6, 1e-3],
            r_diag: [1.0, 1.0],
            delta: [2.0, 2.0],
            p0_diag: vec![0.1, 0.01, 25.0],
            center,
            r_min: 1.0,
            gain_rule: GainRule::default(),
            measurement_lag: 0.0,
        }
    }

    pub fn constant_velocity() -> Self {
        Self {
            model: ModelKind::ConstantVelocity,
            q_diag: vec![1e-3; 4],
            r_diag: [1.0, 1.0],
            delta: [2.0, 2.0],
            p0_diag: vec![25.0, 25.0, 1.0, 1.0],
            center: [0.0, 0.0],
            r_min: 1.0,
            gain_rule: GainRule::default(),
            measurement_lag: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let n = self.model.dim();
        if self.q_diag.len() != n || self.p0_diag.len() != n {
            return Err(FilterError::Config("q_diag and p0_diag must match the state dimension"));
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.q_diag.iter().all(finite_nonneg) || !self.p0_diag.iter().all(finite_nonneg) {
            return Err(FilterError::Config("q_diag and p0_diag must be finite and non-negative"));
        }
        if !self.r_diag.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(FilterError::Config("r_diag must be positive"));
        }
        if !self.delta.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(FilterError::Config("delta must be positive"));
        }
        if !(self.r_min > 0.0) || !self.center.iter().all(|v| v.is_finite()) {
            return Err(FilterError::Config("r_min must be positive and the center finite"));
        }
        if !(self.measurement_lag.is_finite() && self.measurement_lag >= 0.0) {
            return Err(FilterError::Config("measurement_lag must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn transition(&self) -> DMatrix<f64> {
        match self.model {
            ModelKind::DiskPolar => DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            ModelKind::ConstantVelocity => {
                let mut f = DMatrix::identity(4, 4);
                f[(0, 2)] = 1.0;
                f[(1, 3)] = 1.0;
                f
            }
        }
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.q_diag))
    }

    pub fn r(&self) -> Matrix2<f64> {
        Matrix2::new(self.r_diag[0], 0.0, 0.0, self.r_diag[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub s: DVector<f64>,
    pub p: DMatrix<f64>,
    pub frame: usize,
    /// Innovation of the last update, pixels.
    pub innovation: [f64; 2],
    /// Set when the last update had to clamp `r`.
    pub degenerate: bool,
}

/// Image position at the frame instant.
pub fn position(cfg: &FilterConfig, s: &DVector<f64>) -> [f64; 2] {
    position_at(cfg, s, 0.0)
}

/// Image position `lag` frames before the frame instant.
fn position_at(cfg: &FilterConfig, s: &DVector<f64>, lag: f64) -> [f64; 2] {
    match cfg.model {
        ModelKind::DiskPolar => {
            let (phi, r) = (s[0] - lag * s[1], s[2]);
            [cfg.center[0] + r * libm::cos(phi), cfg.center[1] + r * libm::sin(phi)]
        }
        ModelKind::ConstantVelocity => [s[0] - lag * s[2], s[1] - lag * s[3]],
    }
}

/// Predicted measurement, `measurement_lag` frames before the frame instant.
pub fn h_measure(cfg: &FilterConfig, s: &DVector<f64>) -> [f64; 2] {
    position_at(cfg, s, cfg.measurement_lag)
}

pub fn h_jacobian(cfg: &FilterConfig, s: &DVector<f64>) -> DMatrix<f64> {
    let lag = cfg.measurement_lag;
    match cfg.model {
        ModelKind::DiskPolar => {
            let phi = s[0] - lag * s[1];
            let (sin, cos) = (libm::sin(phi), libm::cos(phi));
            let r = s[2];
            DMatrix::from_row_slice(2, 3, &[-r * sin, lag * r * sin, cos, r * cos, -lag * r * cos, sin])
        }
        ModelKind::ConstantVelocity => DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -lag, 0.0, 0.0, 1.0, 0.0, -lag]),
    }
}

/// Image-plane velocity in pixels per frame.
pub fn velocity(cfg: &FilterConfig, s: &DVector<f64>) -> [f64; 2] {
    match cfg.model {
        ModelKind::DiskPolar => {
            let v = s[2] * s[1];
            [-v * libm::sin(s[0]), v * libm::cos(s[0])]
        }
        ModelKind::ConstantVelocity => [s[2], s[3]],
    }
}

const COND_FLOOR: f64 = 1e-10;
const TIKHONOV: f64 = 1e-8;

/// Right pseudo-inverse `Hᵀ(HHᵀ)⁻¹`. Falls back to `Hᵀ(HHᵀ + 1e−8·I)⁻¹`
/// when the smallest singular value of `HHᵀ` is at most 1e−10; the flag
/// reports the fallback.
pub fn pseudo_inverse(h: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let hht = h * h.transpose();
    let ill = min_symmetric_eigenvalue(&hht) <= COND_FLOOR;
    let mut m = hht;
    if ill {
        for i in 0..m.nrows() {
            m[(i, i)] += TIKHONOV;
        }
    }
    let inv = m.try_inverse().unwrap_or_else(|| DMatrix::zeros(h.nrows(), h.nrows()));
    (h.transpose() * inv, ill)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInfo {
    pub innovation: [f64; 2],
    pub saturation: [f64; 2],
    /// Full-saturation right inverse of `H`.
    pub full_gain: DMatrix<f64>,
    /// Applied gain `full_gain · diag(saturation)`.
    pub gain: DMatrix<f64>,
    pub ill_conditioned: bool,
}

/// State increment and posterior covariance for one measurement, without
/// applying either. Shared by the dense filter and the spiking variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub delta_s: DVector<f64>,
    pub p_post: DMatrix<f64>,
    pub info: UpdateInfo,
}

pub fn sif_correction(cfg: &FilterConfig, s_prior: &DVector<f64>, p_prior: &DMatrix<f64>, z: [f64; 2]) -> Correction {
    let hz = h_measure(cfg, s_prior);
    let innovation = [z[0] - hz[0], z[1] - hz[1]];
    let h = h_jacobian(cfg, s_prior);
    let saturation = [
        (libm::fabs(innovation[0]) / cfg.delta[0]).min(1.0),
        (libm::fabs(innovation[1]) / cfg.delta[1]).min(1.0),
    ];

    let (full_gain, ill_conditioned) = match cfg.gain_rule {
        GainRule::PseudoInverse => pseudo_inverse(&h),
        GainRule::CovarianceWeighted => {
            let pht = p_prior * h.transpose();
            let s = &h * &pht;
            match (min_symmetric_eigenvalue(&s) > COND_FLOOR).then(|| s.try_inverse()).flatten() {
                Some(inv) => (pht * inv, false),
                None => (pseudo_inverse(&h).0, true),
            }
        }
    };
    let sat = DMatrix::from_diagonal(&DVector::from_column_slice(&saturation));
    let gain = &full_gain * sat;
    let delta_s = &gain * DVector::from_column_slice(&innovation);

    let n = cfg.dim();
    let ikh = DMatrix::identity(n, n) - &gain * &h;
    let r = cfg.r();
    let r = DMatrix::from_row_slice(2, 2, &[r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]]);
    let mut p_post = &ikh * p_prior * ikh.transpose() + &gain * r * gain.transpose();
    symmetrize(&mut p_post);

    Correction { delta_s, p_post, info: UpdateInfo { innovation, saturation, full_gain, gain, ill_conditioned } }
}

pub fn predict(cfg: &FilterConfig, state: &FilterState) -> FilterState {
    let f = cfg.transition();
    let mut s = &f * &state.s;
    if cfg.model == ModelKind::DiskPolar {
        s[0] = wrap_angle(s[0]);
    }
    let mut p = &f * &state.p * f.transpose() + cfg.q();
    symmetrize(&mut p);
    FilterState { s, p, frame: state.frame + 1, innovation: state.innovation, degenerate: state.degenerate }
}

/// Applies a state increment, re-wrapping θ and clamping `r` to `r_min`.
/// Returns whether the clamp fired.
pub fn apply_increment(cfg: &FilterConfig, s: &mut DVector<f64>, delta_s: &DVector<f64>) -> bool {
    *s += delta_s;
    if cfg.model == ModelKind::DiskPolar {
        s[0] = wrap_angle(s[0]);
        if !(s[2] >= cfg.r_min) {
            s[2] = cfg.r_min;
            return true;
        }
    }
    false
}

pub fn update(cfg: &FilterConfig, state: &FilterState, z: [f64; 2]) -> (FilterState, UpdateInfo) {
    let c = sif_correction(cfg, &state.s, &state.p, z);
    let mut s = state.s.clone();
    let degenerate = apply_increment(cfg, &mut s, &c.delta_s);
    let next = FilterState { s, p: c.p_post, frame: state.frame, innovation: c.info.innovation, degenerate };
    (next, c.info)
}

pub fn init_from_detection(cfg: &FilterConfig, z: [f64; 2], frame: usize) -> Result<FilterState, FilterError> {
    cfg.validate()?;
    let s = match cfg.model {
        ModelKind::DiskPolar => {
            let (dx, dy) = (z[0] - cfg.center[0], z[1] - cfg.center[1]);
            let r = libm::hypot(dx, dy);
            if !(r >= cfg.r_min) {
                return Err(FilterError::AtCenter(z[0], z[1]));
            }
            DVector::from_column_slice(&[libm::atan2(dy, dx), 0.0, r])
        }
        ModelKind::ConstantVelocity => DVector::from_column_slice(&[z[0], z[1], 0.0, 0.0]),
    };
    Ok(FilterState {
        s,
        p: DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.p0_diag)),
        frame,
        innovation: [0.0, 0.0],
        degenerate: false,
    })
}
