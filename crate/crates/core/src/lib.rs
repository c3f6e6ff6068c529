//! Training engine for spiking neural networks.
//!
//! Networks of leaky integrate-and-fire neurons run unrolled over a discrete
//! time window; gradients flow backward through both the layer stack and the
//! time axis, with a configurable surrogate curve standing in for the spike
//! gate's derivative. The crate bundles everything a training run needs:
//!
//! - [`lif`] — the iterative neuron update (forget gate, spike gate)
//! - [`surrogate`] — the four gate-derivative approximations and their
//!   antiderivatives
//! - [`topology`] — architecture parsing, initialization, checkpoints
//! - [`forward`] — the unrolled forward pass with full trace retention
//! - [`engine`] — the loss and the spatio-temporal backward pass
//! - [`optim`] — SGD and Adam
//! - [`encode`] — Bernoulli rate coding and event-stream binning
//! - [`data`] — IDX and address-event loaders, synthetic generators
//! - [`gradcheck`] — finite-difference certification of the backward pass
//! - [`trainer`] — the epoch loop with deterministic shuffling and metrics
//!
//! Batch work is data-parallel over samples (rayon, `parallel` feature,
//! enabled by default) with a fixed chunked reduction order, so results are
//! bit-identical for any worker count. Disabling the feature leaves a purely
//! sequential build.

pub mod batch;
pub mod config;
pub mod conv;
pub mod data;
pub mod encode;
pub mod engine;
pub mod error;
pub mod forward;
pub mod gradcheck;
pub mod lif;
pub mod math;
pub mod optim;
pub mod raster;
pub mod spike;
pub mod surrogate;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
