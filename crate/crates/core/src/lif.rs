//! Leaky integrate-and-fire population engine.
//!
//! Membrane dynamics `τ_m du/dt = −(u − v_reset) + J` are integrated with
//! forward Euler. A neuron at or above `v_th` spikes, resets to `v_reset` and
//! is clamped there for `t_ref`. Each population carries an exponential
//! synaptic trace per neuron; every spike adds `1/τ_syn`, so the trace tracks
//! the firing rate in Hz.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    pub tau_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { tau_m: 0.02, v_th: 1.0, v_reset: 0.0, t_ref: 0.002, dt: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LifError {
    #[error("invalid LIF parameters: {0}")]
    Params(&'static str),
    #[error("input current has length {got}, population has {expected} neurons")]
    Length { expected: usize, got: usize },
    #[error("non-finite input current at neuron {0}")]
    NonFinite(usize),
    #[error("schedule has {got} rows, {needed} steps requested")]
    ScheduleTooShort { needed: usize, got: usize },
}

impl LifParams {
    pub fn validate(&self) -> Result<(), LifError> {
        if !(self.tau_m > 0.0) {
            return Err(LifError::Params("tau_m must be positive"));
        }
        if !(self.v_th > self.v_reset) {
            return Err(LifError::Params("v_th must exceed v_reset"));
        }
        if !(self.dt > 0.0) {
            return Err(LifError::Params("dt must be positive"));
        }
        if !(self.t_ref >= 0.0) {
            return Err(LifError::Params("t_ref must be non-negative"));
        }
        if self.dt > self.tau_m / 5.0 + 1e-15 {
            return Err(LifError::Params("dt must not exceed tau_m / 5"));
        }
        Ok(())
    }

    /// Clamped steps after a spike.
    pub fn refractory_steps(&self) -> usize {
        libm::round(self.t_ref / self.dt) as usize
    }
}

/// Continuous-time steady-state firing rate (Hz) for a constant current.
pub fn lif_rate(current: f64, params: &LifParams) -> f64 {
    let gap = params.v_th - params.v_reset;
    if current <= gap {
        return 0.0;
    }
    1.0 / (params.t_ref + params.tau_m * libm::log(current / (current - gap)))
}

/// Exact steady-state rate of the discrete simulator in [`lif_step`].
///
/// From reset the Euler recursion gives `u_m − v_reset = J(1 − (1 − dt/τ)^m)`;
/// the spike lands on the first `m` reaching the threshold, after which the
/// neuron sits out `t_ref/dt` clamped steps.
pub fn lif_rate_discrete(current: f64, params: &LifParams) -> f64 {
    let gap = params.v_th - params.v_reset;
    if current <= gap {
        return 0.0;
    }
    let decay = 1.0 - params.dt / params.tau_m;
    let steps = if decay <= 0.0 {
        1.0
    } else {
        libm::ceil(libm::log(1.0 - gap / current) / libm::log(decay) - 1e-9).max(1.0)
    };
    1.0 / ((steps + params.refractory_steps() as f64) * params.dt)
}

/// Recurrent coupling. `LowRank` stores `W = left · rightᵀ` without forming it.
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    None,
    Dense(DMatrix<f64>),
    LowRank { left: DMatrix<f64>, right: DMatrix<f64> },
}

impl Recurrent {
    /// `W · a`
    pub fn apply(&self, a: &[f64], out: &mut [f64]) {
        match self {
            Recurrent::None => out.iter_mut().for_each(|o| *o = 0.0),
            Recurrent::Dense(w) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..w.ncols()).map(|j| w[(i, j)] * a[j]).sum();
                }
            }
            Recurrent::LowRank { left, right } => {
                let rank = right.ncols();
                let mut mid = vec![0.0; rank];
                for (j, &aj) in a.iter().enumerate() {
                    if aj != 0.0 {
                        for (r, m) in mid.iter_mut().enumerate() {
                            *m += right[(j, r)] * aj;
                        }
                    }
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..rank).map(|r| left[(i, r)] * mid[r]).sum();
                }
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            Recurrent::None => DMatrix::zeros(n, n),
            Recurrent::Dense(w) => w.clone(),
            Recurrent::LowRank { left, right } => left * right.transpose(),
        }
    }
}

/// Binary spike vector for one micro-step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeVector(pub Vec<bool>);

impl SpikeVector {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }

    pub fn fired(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifPopulation {
    /// Membrane potentials.
    pub u: Vec<f64>,
    /// Seconds of refractory time left per neuron.
    pub refrac_remaining: Vec<f64>,
    /// Filtered spike trains (1/s).
    pub trace: Vec<f64>,
    pub tau_syn: f64,
    /// Optional input weights; see [`LifPopulation::drive`].
    pub w_in: Option<DMatrix<f64>>,
    pub recurrent: Recurrent,
    /// Constant per-neuron current added every step.
    pub bias: Vec<f64>,
    /// Silenced neurons never integrate or fire.
    pub silenced: Vec<bool>,
    scratch: Vec<f64>,
}

impl LifPopulation {
    pub fn new(n: usize, tau_syn: f64) -> Self {
        Self {
            u: vec![0.0; n],
            refrac_remaining: vec![0.0; n],
            trace: vec![0.0; n],
            tau_syn,
            w_in: None,
            recurrent: Recurrent::None,
            bias: vec![0.0; n],
            silenced: vec![false; n],
            scratch: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Weighted input current `w_in · signal`; the signal is passed through
    /// when no input matrix is set.
    pub fn drive(&self, signal: &[f64]) -> Vec<f64> {
        match &self.w_in {
            None => signal.to_vec(),
            Some(w) => (0..w.nrows())
                .map(|i| (0..w.ncols()).map(|j| w[(i, j)] * signal[j]).sum())
                .collect(),
        }
    }

    /// Resets membranes, refractory timers and traces.
    pub fn reset_state(&mut self, v_reset: f64) {
        self.u.iter_mut().for_each(|u| *u = v_reset);
        self.refrac_remaining.iter_mut().for_each(|r| *r = 0.0);
        self.trace.iter_mut().for_each(|a| *a = 0.0);
    }
}

/// Advances the population by one micro-step.
pub fn lif_step(
    pop: &mut LifPopulation,
    params: &LifParams,
    input_current: &[f64],
) -> Result<SpikeVector, LifError> {
    let n = pop.len();
    if input_current.len() != n {
        return Err(LifError::Length { expected: n, got: input_current.len() });
    }
    if let Some(i) = input_current.iter().position(|j| !j.is_finite()) {
        return Err(LifError::NonFinite(i));
    }
    let mut rec = core::mem::take(&mut pop.scratch);
    rec.resize(n, 0.0);
    pop.recurrent.apply(&pop.trace, &mut rec);

    let leak = params.dt / params.tau_m;
    let half_dt = 0.5 * params.dt;
    let mut spikes = vec![false; n];
    for i in 0..n {
        if pop.silenced[i] {
            pop.u[i] = params.v_reset;
            continue;
        }
        if pop.refrac_remaining[i] > half_dt {
            pop.refrac_remaining[i] = (pop.refrac_remaining[i] - params.dt).max(0.0);
            pop.u[i] = params.v_reset;
            continue;
        }
        let u = pop.u[i];
        let fire = if u >= params.v_th {
            true
        } else {
            let j = input_current[i] + pop.bias[i] + rec[i];
            let next = u + leak * (-(u - params.v_reset) + j);
            pop.u[i] = next;
            next >= params.v_th
        };
        if fire {
            spikes[i] = true;
            pop.u[i] = params.v_reset;
            pop.refrac_remaining[i] = params.t_ref;
        }
    }
    let decay = libm::exp(-params.dt / pop.tau_syn);
    let kick = 1.0 / pop.tau_syn;
    for (a, &s) in pop.trace.iter_mut().zip(&spikes) {
        *a = *a * decay + if s { kick } else { 0.0 };
    }
    pop.scratch = rec;
    Ok(SpikeVector(spikes))
}

/// Applies `steps` micro-steps, row `k` of the schedule feeding step `k`.
pub fn run_window(
    pop: &mut LifPopulation,
    params: &LifParams,
    schedule: &[Vec<f64>],
    steps: usize,
) -> Result<Vec<SpikeVector>, LifError> {
    if schedule.len() < steps {
        return Err(LifError::ScheduleTooShort { needed: steps, got: schedule.len() });
    }
    schedule[..steps].iter().map(|row| lif_step(pop, params, row)).collect()
}
