//! Hybrid frame/event perception with a spiking sliding-innovation filter.
//!
//! The crate is `no_std` and needs only `alloc`. It covers the whole numeric
//! pipeline:
//!
//! - [`scene`]: synthetic rotating-disk video plus analytic ground truth,
//! - [`dvs`]: log-intensity event-camera emulation,
//! - [`detector`]: decaying event surface and connected-component detections,
//! - [`ann`]: feedforward patch validator (random hidden layer + ridge readout),
//! - [`lif`]: leaky integrate-and-fire population engine,
//! - [`emsif`]: dense extended sliding innovation filter,
//! - [`snn_emsif`]: the same filter with state memory and prediction carried by
//!   a recurrent LIF population,
//! - [`tracker`]: association, filter cycling and track lifecycle,
//! - [`metrics`] and [`pipeline`]: per-frame orchestration and error series.
//!
//! File formats, configuration files and the command line live in the
//! companion `neurotrack` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ann;
pub mod detector;
pub mod dvs;
pub mod emsif;
pub mod lif;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod snn_emsif;
pub mod tracker;

pub use dvs::{Event, EventStream};
pub use scene::{DiskScene, Frame, GroundTruth, SceneObject, Shape};
