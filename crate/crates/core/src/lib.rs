//! Post-hoc reliability classification for machine-learned interatomic
//! potentials.
//!
//! A small attention network reads the frozen per-atom embeddings a backbone
//! potential already computes (plus partial charges, the predicted energy and
//! the atom count) and outputs, per molecule, the probability that the
//! backbone's energy error exceeds a percentile boundary of its training
//! error distribution.
//!
//! Modules, bottom-up:
//! - [`nn`]: tensors, layers with hand-written backward passes, AdamW,
//!   gradient clipping and a finite-difference checker.
//! - [`dataset`]: the embedding container format, labels, splits, batching
//!   and a synthetic generator.
//! - [`model`]: the classifier network, attention importance and embedding
//!   export.
//! - [`training`]: the size-normalized weighted loss, the training loop and
//!   checkpoints.
//! - [`evaluation`]: confusion metrics, selective-prediction curves,
//!   calibration and ensemble baselines.
//! - [`active_learning`]: a retrospective acquisition harness over a
//!   synthetic surrogate backbone.

pub mod active_learning;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{ErrorKind, ProbeError, Result};

/// Version string embedded in every emitted artifact.
pub const TOOL_VERSION: &str = concat!("probe ", env!("CARGO_PKG_VERSION"));
