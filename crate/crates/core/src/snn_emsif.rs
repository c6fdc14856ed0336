//! Sliding innovation filter whose state lives in a recurrent LIF population.
//!
//! The disk-polar state `[θ, ω, r]` is embedded as the bounded vector
//! `x = [cos θ, sin θ, ω/ω_s, (r − r_ref)/r_s]`. A population with random
//! encoders represents `x` in its synaptic traces; the recurrent weights are
//! decoders of `x + τ_syn·f(x)`, so the network rotates `(cos θ, sin θ)` at
//! the encoded angular rate without any external input. Weights are solved
//! once, offline, and never change.
//!
//! Measurement corrections are computed densely from the decoded state (gain
//! and covariance bookkeeping follow [`crate::emsif`]) and injected as a
//! constant input current for the first `t_inj` seconds of the next cycle.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emsif::{apply_increment, h_measure, sif_correction, FilterConfig, FilterState, ModelKind, UpdateInfo};
use crate::lif::{lif_rate_discrete, lif_step, LifError, LifParams, LifPopulation, Recurrent};
use crate::math::{fingerprint, ridge_solve, symmetrize, wrap_angle, FNV_OFFSET};
use crate::rng::stream_rng;

pub const DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSpec {
    /// rad/frame represented by `ω̄ = 1`.
    pub omega_scale: f64,
    pub r_scale: f64,
    pub r_ref: f64,
    /// Radius of the represented ball.
    pub rho: f64,
    /// Seconds per frame; turns rad/frame into rad/s for the dynamics.
    pub frame_period: f64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self { omega_scale: 0.1, r_scale: 30.0, r_ref: 37.5, rho: 1.3, frame_period: 0.1 }
    }
}

impl EmbeddingSpec {
    pub fn embed(&self, s: &[f64]) -> [f64; DIM] {
        [libm::cos(s[0]), libm::sin(s[0]), s[1] / self.omega_scale, (s[2] - self.r_ref) / self.r_scale]
    }

    pub fn unembed(&self, x: &[f64; DIM]) -> [f64; 3] {
        [libm::atan2(x[1], x[0]), x[2] * self.omega_scale, self.r_ref + x[3] * self.r_scale]
    }

    /// `∂T/∂s`, 4×3.
    pub fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(DIM, 3);
        j[(0, 0)] = -libm::sin(s[0]);
        j[(1, 0)] = libm::cos(s[0]);
        j[(2, 1)] = 1.0 / self.omega_scale;
        j[(3, 2)] = 1.0 / self.r_scale;
        j
    }

    /// Continuous-time dynamics in embedding space (per second).
    pub fn dynamics(&self, x: &[f64; DIM]) -> [f64; DIM] {
        let w = x[2] * self.omega_scale / self.frame_period;
        [-w * x[1], w * x[0], 0.0, 0.0]
    }

    pub fn in_domain(&self, x: &[f64; DIM]) -> bool {
        norm(x) <= self.rho
    }
}

fn norm(x: &[f64; DIM]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    pub neurons: usize,
    pub embedding: EmbeddingSpec,
    pub lif: LifParams,
    pub tau_syn: f64,
    /// Decoder fit points.
    pub samples: usize,
    /// Noise-style ridge factor; the penalty is `(reg·max_rate_high)²·samples`.
    pub reg: f64,
    pub max_rate: (f64, f64),
    pub intercept_limit: f64,
    pub t_inj: f64,
    pub t_init: f64,
    /// Micro-steps averaged by the decoder.
    pub decode_window: usize,
    /// Accepted RMS decode error, as a fraction of `rho`.
    pub decode_tolerance: f64,
    pub settle_tolerance: f64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            neurons: 800,
            embedding: EmbeddingSpec::default(),
            lif: LifParams::default(),
            tau_syn: 0.1,
            samples: 2000,
            reg: 0.05,
            max_rate: (100.0, 200.0),
            intercept_limit: 0.95,
            t_inj: 0.02,
            t_init: 0.1,
            decode_window: 10,
            decode_tolerance: 0.02,
            settle_tolerance: 0.05,
        }
    }
}

impl NeuralConfig {
    pub fn steps_per_frame(&self) -> usize {
        libm::round(self.embedding.frame_period / self.lif.dt) as usize
    }

    pub fn injection_steps(&self) -> usize {
        libm::round(self.t_inj / self.lif.dt) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("population needs at least 100 neurons, got {0}")]
    TooSmall(usize),
    #[error("decode error {error:.4} exceeds {limit:.4}")]
    DecodeError { error: f64, limit: f64 },
    #[error("decoder normal equations are singular")]
    Singular,
    #[error("state embeds at norm {norm:.3}, outside the represented ball of radius {rho}")]
    OutOfDomain { norm: f64, rho: f64 },
    #[error("settling reached error {achieved:.4}, tolerance {limit:.4}")]
    Settle { achieved: f64, limit: f64 },
    #[error("spiking filter supports the disk-polar model only")]
    Model,
    #[error(transparent)]
    Lif(#[from] LifError),
}

/// Constant embedding-space input applied for the first `steps` micro-steps
/// of a cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSchedule {
    pub input: [f64; DIM],
    pub steps: usize,
}

impl CorrectionSchedule {
    pub fn zero(steps: usize) -> Self {
        Self { input: [0.0; DIM], steps }
    }

    pub fn is_zero(&self) -> bool {
        self.input.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub s: [f64; 3],
    pub x: [f64; DIM],
    /// `(cos θ, sin θ)` too short to define a phase; θ is the previous one.
    pub phase_lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralCorrection {
    pub schedule: CorrectionSchedule,
    pub p_post: DMatrix<f64>,
    pub info: UpdateInfo,
    /// The decoded prior was outside the represented ball and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct NeuralFilter {
    pub config: NeuralConfig,
    /// Rows are unit encoders.
    pub encoders: DMatrix<f64>,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub d_out: DMatrix<f64>,
    pub d_rec: DMatrix<f64>,
    pub population: LifPopulation,
    /// Micro-steps since the last frame instant.
    pub phase: usize,
    /// Global micro-step counter; used by the spike log.
    pub step: u64,
    /// When set, every spike is appended as `(step, neuron)`.
    pub spike_log: Option<Vec<(u64, u32)>>,
    history: VecDeque<[f64; DIM]>,
    last_theta: f64,
}

fn sample_ball(rng: &mut impl Rng, rho: f64) -> [f64; DIM] {
    let normal = rand_distr::StandardNormal;
    loop {
        let mut v = [0.0; DIM];
        for c in &mut v {
            *c = rng.sample::<f64, _>(normal);
        }
        let n = norm(&v);
        if n > 1e-12 {
            let radius = rho * libm::pow(rng.random::<f64>(), 1.0 / DIM as f64);
            return v.map(|c| c * radius / n);
        }
    }
}

fn rate_matrix(enc: &DMatrix<f64>, gain: &[f64], bias: &[f64], points: &[[f64; DIM]], lif: &LifParams) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), gain.len(), |m, i| {
        let dot: f64 = (0..DIM).map(|d| enc[(i, d)] * points[m][d]).sum();
        lif_rate_discrete(gain[i] * dot + bias[i], lif)
    })
}

/// Draws tuning curves, solves identity and recurrent decoders and checks the
/// decode error on a fresh sample.
pub fn build_population(config: &NeuralConfig, seed: u64) -> Result<NeuralFilter, NeuralError> {
    let n = config.neurons;
    if n < 100 {
        return Err(NeuralError::TooSmall(n));
    }
    config.lif.validate()?;
    let lif = &config.lif;
    let spec = &config.embedding;
    let mut rng = stream_rng(seed, 0x5EED);

    let mut encoders = DMatrix::zeros(n, DIM);
    let mut gain = Vec::with_capacity(n);
    let mut bias = Vec::with_capacity(n);
    for i in 0..n {
        let e = sample_ball(&mut rng, 1.0);
        let len = norm(&e);
        for d in 0..DIM {
            encoders[(i, d)] = e[d] / len;
        }
        let intercept = rng.random_range(-config.intercept_limit..config.intercept_limit);
        let max_rate = rng.random_range(config.max_rate.0..config.max_rate.1);
        let j_max = 1.0 / (1.0 - libm::exp(-(1.0 / max_rate - lif.t_ref) / lif.tau_m));
        let alpha = (j_max - 1.0) / (1.0 - intercept);
        gain.push(alpha);
        bias.push(1.0 - alpha * intercept);
    }

    let points: Vec<[f64; DIM]> = (0..config.samples).map(|_| sample_ball(&mut rng, spec.rho)).collect();
    let a = rate_matrix(&encoders, &gain, &bias, &points, lif);
    let targets = DMatrix::from_fn(points.len(), 2 * DIM, |m, c| {
        if c < DIM {
            points[m][c]
        } else {
            points[m][c - DIM] + config.tau_syn * spec.dynamics(&points[m])[c - DIM]
        }
    });
    let penalty = libm::pow(config.reg * config.max_rate.1, 2.0) * config.samples as f64;
    let d = ridge_solve(&a, &targets, penalty).ok_or(NeuralError::Singular)?;
    let d_out = d.columns(0, DIM).into_owned();
    let d_rec = d.columns(DIM, DIM).into_owned();

    let fresh: Vec<[f64; DIM]> = (0..500).map(|_| sample_ball(&mut rng, spec.rho)).collect();
    let error = decode_rms(&encoders, &gain, &bias, &d_out, &fresh, lif);
    let limit = config.decode_tolerance * spec.rho;
    if !(error <= limit) {
        return Err(NeuralError::DecodeError { error, limit });
    }

    let left = DMatrix::from_fn(n, DIM, |i, d| gain[i] * encoders[(i, d)]);
    let mut population = LifPopulation::new(n, config.tau_syn);
    population.w_in = Some(&left * config.tau_syn);
    population.recurrent = Recurrent::LowRank { left, right: d_rec.clone() };
    population.bias = bias.clone();
    population.reset_state(lif.v_reset);

    Ok(NeuralFilter {
        config: config.clone(),
        encoders,
        gain,
        bias,
        d_out,
        d_rec,
        population,
        phase: 0,
        step: 0,
        spike_log: None,
        history: VecDeque::with_capacity(config.decode_window),
        last_theta: 0.0,
    })
}

fn decode_rms(
    enc: &DMatrix<f64>,
    gain: &[f64],
    bias: &[f64],
    d_out: &DMatrix<f64>,
    points: &[[f64; DIM]],
    lif: &LifParams,
) -> f64 {
    let a = rate_matrix(enc, gain, bias, points, lif);
    let xhat = a * d_out;
    let sq: f64 = points
        .iter()
        .enumerate()
        .map(|(m, p)| (0..DIM).map(|d| (xhat[(m, d)] - p[d]) * (xhat[(m, d)] - p[d])).sum::<f64>())
        .sum();
    libm::sqrt(sq / points.len() as f64)
}

impl NeuralFilter {
    /// RMS decode error of the static rate curves on a fresh sample.
    pub fn static_decode_error(&self, points: usize, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, 0xDEC0);
        let pts: Vec<[f64; DIM]> = (0..points).map(|_| sample_ball(&mut rng, self.config.embedding.rho)).collect();
        decode_rms(&self.encoders, &self.gain, &self.bias, &self.d_out, &pts, &self.config.lif)
    }

    /// Instantaneous decode of the synaptic traces.
    pub fn decode_now(&self) -> [f64; DIM] {
        let mut x = [0.0; DIM];
        for (i, &a) in self.population.trace.iter().enumerate() {
            if a != 0.0 {
                for (d, xd) in x.iter_mut().enumerate() {
                    *xd += self.d_out[(i, d)] * a;
                }
            }
        }
        x
    }

    /// Embedding decoded over the last `decode_window` micro-steps.
    pub fn decode_embedding(&self) -> [f64; DIM] {
        if self.history.is_empty() {
            return self.decode_now();
        }
        let mut x = [0.0; DIM];
        for h in &self.history {
            for d in 0..DIM {
                x[d] += h[d];
            }
        }
        x.map(|v| v / self.history.len() as f64)
    }

    /// Decoded state; θ is held when the phase vector is too short.
    pub fn decode_state(&self) -> Decoded {
        let x = self.decode_embedding();
        let mut s = self.config.embedding.unembed(&x);
        let phase_lost = libm::hypot(x[0], x[1]) < 0.1;
        if phase_lost {
            s[0] = self.last_theta;
        }
        s[0] = wrap_angle(s[0]);
        Decoded { s, x, phase_lost }
    }

    /// Decoded state referred to the nearest frame instant. The averaging
    /// window is centred `(w−1)/2` steps in the past, and the population may
    /// be part-way into a cycle; θ is shifted back along the decoded ω.
    pub fn decode_at_instant(&self) -> Decoded {
        let mut d = self.decode_state();
        let spf = self.config.steps_per_frame() as f64;
        let mut phase = self.phase as f64;
        if phase > spf / 2.0 {
            phase -= spf;
        }
        let lag = phase - (self.history.len().max(1) - 1) as f64 / 2.0;
        d.s[0] = wrap_angle(d.s[0] - d.s[1] * lag / spf);
        d
    }

    /// Runs `steps` micro-steps with a constant embedding-space input.
    pub fn advance(&mut self, input: [f64; DIM], steps: usize) -> Result<(), NeuralError> {
        let current = self.population.drive(&input);
        let zero = vec![0.0; self.population.len()];
        let drive = if input.iter().all(|&v| v == 0.0) { &zero } else { &current };
        for _ in 0..steps {
            let spikes = lif_step(&mut self.population, &self.config.lif, drive)?;
            self.record(spikes.fired());
        }
        Ok(())
    }

    fn record(&mut self, fired: impl Iterator<Item = usize>) {
        if let Some(log) = self.spike_log.as_mut() {
            log.extend(fired.map(|i| (self.step, i as u32)));
        }
        self.step += 1;
        self.phase = (self.phase + 1) % self.config.steps_per_frame().max(1);
        if self.history.len() == self.config.decode_window.max(1) {
            self.history.pop_front();
        }
        let x = self.decode_now();
        self.history.push_back(x);
        let q = libm::hypot(x[0], x[1]);
        if q >= 0.1 {
            self.last_theta = libm::atan2(x[1], x[0]);
        }
    }

    /// Applies the schedule for its steps, then free-runs to the end of the
    /// frame.
    pub fn step_frame(&mut self, schedule: &CorrectionSchedule) -> Result<(), NeuralError> {
        let total = self.config.steps_per_frame();
        let inj = schedule.steps.min(total);
        self.advance(schedule.input, inj)?;
        self.advance([0.0; DIM], total - inj)
    }

    /// Drives the population to represent `s0` by closed-loop settling.
    pub fn init_state(&mut self, s0: &[f64]) -> Result<(), NeuralError> {
        let spec = self.config.embedding;
        let target = spec.embed(s0);
        if !spec.in_domain(&target) {
            return Err(NeuralError::OutOfDomain { norm: norm(&target), rho: spec.rho });
        }
        self.population.reset_state(self.config.lif.v_reset);
        self.history.clear();
        let kp = 5.0 / self.config.tau_syn;
        let steps = libm::round(self.config.t_init / self.config.lif.dt) as usize;
        for _ in 0..steps {
            let x = self.decode_now();
            let u: [f64; DIM] = core::array::from_fn(|d| kp * (target[d] - x[d]));
            let current = self.population.drive(&u);
            let spikes = lif_step(&mut self.population, &self.config.lif, &current)?;
            self.record(spikes.fired());
        }
        self.phase = 0;
        self.last_theta = wrap_angle(s0[0]);
        let got = self.decode_embedding();
        let achieved = norm(&core::array::from_fn(|d| got[d] - target[d]));
        let limit = self.config.settle_tolerance * spec.rho;
        if achieved > limit {
            return Err(NeuralError::Settle { achieved, limit });
        }
        Ok(())
    }

    /// Sliding-innovation correction from the decoded prior. `p_prior` is the
    /// dense predicted covariance.
    pub fn correct(&self, cfg: &FilterConfig, p_prior: &DMatrix<f64>, z: [f64; 2]) -> NeuralCorrection {
        let spec = self.config.embedding;
        let decoded = self.decode_at_instant();
        let mut x = spec.embed(&decoded.s);
        x[2] = decoded.x[2];
        x[3] = decoded.x[3];
        let n = norm(&x);
        let clamped = n > spec.rho;
        let s = if clamped { spec.unembed(&x.map(|v| v * spec.rho / n)) } else { decoded.s };
        let s = DVector::from_column_slice(&s);
        let c = sif_correction(cfg, &s, p_prior, z);
        let dx = spec.jacobian(s.as_slice()) * &c.delta_s;
        let inj = self.config.injection_steps().max(1);
        let t_inj = inj as f64 * self.config.lif.dt;
        let input = if c.delta_s.iter().all(|&v| v == 0.0) {
            [0.0; DIM]
        } else {
            core::array::from_fn(|d| dx[d] / t_inj)
        };
        NeuralCorrection { schedule: CorrectionSchedule { input, steps: inj }, p_post: c.p_post, info: c.info, clamped }
    }

    /// Permanently silences `round(fraction·n)` random neurons.
    pub fn silence(&mut self, fraction: f64, seed: u64) -> Vec<usize> {
        let n = self.population.len();
        let k = (libm::round(fraction.clamp(0.0, 1.0) * n as f64) as usize).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, 0x511);
        let (chosen, _) = idx.partial_shuffle(&mut rng, k);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            self.population.silenced[i] = true;
        }
        chosen
    }

    /// Hash of every weight the network uses.
    pub fn weights_fingerprint(&self) -> u64 {
        let mut h = fingerprint(self.d_out.as_slice(), FNV_OFFSET);
        h = fingerprint(self.d_rec.as_slice(), h);
        if let Recurrent::LowRank { left, right } = &self.population.recurrent {
            h = fingerprint(left.as_slice(), h);
            h = fingerprint(right.as_slice(), h);
        }
        if let Some(w) = &self.population.w_in {
            h = fingerprint(w.as_slice(), h);
        }
        fingerprint(&self.population.bias, h)
    }
}

/// Frame-level spiking filter for one track: the population carries state
/// and prediction, the covariance is propagated densely.
#[derive(Debug, Clone)]
pub struct SpikingFilter {
    pub network: NeuralFilter,
    pub filter: FilterConfig,
    pub p: DMatrix<f64>,
    pub frame: usize,
    pub last: FilterState,
    pub clamped: bool,
}

impl SpikingFilter {
    /// Builds and settles a population at `init`, then free-runs one frame so
    /// the next [`SpikingFilter::predict`] lands on `init.frame + 1`.
    pub fn new(filter: &FilterConfig, config: &NeuralConfig, init: &FilterState, seed: u64) -> Result<Self, NeuralError> {
        if filter.model != ModelKind::DiskPolar {
            return Err(NeuralError::Model);
        }
        let mut network = build_population(config, seed)?;
        network.init_state(init.s.as_slice())?;
        let steps = network.config.steps_per_frame();
        network.advance([0.0; DIM], steps)?;
        Ok(Self { network, filter: filter.clone(), p: init.p.clone(), frame: init.frame, last: init.clone(), clamped: false })
    }

    /// Decoded prior for the next frame and the dense predicted covariance.
    /// Does not advance the population.
    pub fn predict(&self) -> FilterState {
        let f = self.filter.transition();
        let mut p = &f * &self.p * f.transpose() + self.filter.q();
        symmetrize(&mut p);
        let d = self.network.decode_at_instant();
        FilterState {
            s: DVector::from_column_slice(&d.s),
            p,
            frame: self.frame + 1,
            innovation: self.last.innovation,
            degenerate: false,
        }
    }

    /// Completes the cycle for the next frame: injects the correction (if a
    /// measurement is given), decodes the posterior at the end of the
    /// injection window and free-runs to the following frame instant.
    pub fn update(&mut self, z: Option<[f64; 2]>) -> Result<FilterState, NeuralError> {
        let prior = self.predict();
        let inj = self.network.config.injection_steps();
        let total = self.network.config.steps_per_frame();
        let (schedule, p_post, innovation) = match z {
            Some(z) => {
                let c = self.network.correct(&self.filter, &prior.p, z);
                self.clamped = c.clamped;
                (c.schedule, c.p_post, c.info.innovation)
            }
            None => (CorrectionSchedule::zero(inj), prior.p.clone(), [0.0; 2]),
        };
        self.network.advance(schedule.input, inj)?;
        let d = self.network.decode_at_instant();
        let mut s = DVector::from_column_slice(&d.s);
        let degenerate = apply_increment(&self.filter, &mut s, &DVector::zeros(3));
        self.network.advance([0.0; DIM], total - inj.min(total))?;
        self.p = p_post;
        self.frame = prior.frame;
        self.last = FilterState { s, p: self.p.clone(), frame: self.frame, innovation, degenerate };
        Ok(self.last.clone())
    }

    pub fn predicted_measurement(&self) -> [f64; 2] {
        h_measure(&self.filter, &self.predict().s)
    }
}
