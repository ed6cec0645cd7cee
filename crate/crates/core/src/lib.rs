//! Simulator for sparsity-aware Bayesian binary neural network inference on
//! phase-change-memory crossbars.
//!
//! The crate models the full path from a Bernoulli weight posterior to
//! hardware figures of merit: ensemble sampling, probability clamping and
//! first-ensembling-layer selection, the deterministic/stochastic plane
//! split with row squeezing and subarray packing, a differential PCM cell
//! model with programming noise, read noise and conductance drift,
//! bit-streamed matrix-vector multiplication, uncertainty decomposition,
//! and an analytical latency/energy/area cost model.

pub mod cost;
pub mod device;
pub mod engine;
pub mod error;
pub mod lower;
pub mod model;
pub mod rng;
pub mod sparsity;
pub mod split;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
