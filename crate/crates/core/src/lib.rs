//! Continuous posture and gesture spotting on a streaming multi-channel hand
//! signal.
//!
//! The crate covers the full pipeline:
//!
//! - [`signal`]: frame ingestion, sliding windows, resampling and padding.
//! - [`synth`]: a seeded synthetic hand-signal generator used for training
//!   and evaluation when no sensor is attached.
//! - [`dictionary`]: labeled training matrices and their precomputed ridge
//!   projectors.
//! - [`classify`]: collaborative (ridge) and sparse (l1) representation
//!   classifiers that label by minimum class reconstruction residual.
//! - [`osc`] and [`cluster`]: ordered subspace clustering, affinity
//!   construction and normalized-cut spectral clustering used to build the
//!   gesture dictionaries without hand-labelled boundaries.
//! - [`recognizer`] and [`train`]: the posture/transition decision tree,
//!   steering command mapping and command filter, plus model training.
//! - [`eval`], [`persist`], [`service`] and [`cli`]: evaluation reports,
//!   model storage, the WebSocket service and the command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod cli;
pub mod cluster;
pub mod dictionary;
pub mod error;
pub mod labels;
pub mod eval;
pub mod osc;
pub mod persist;
pub mod recognizer;
pub mod service;
pub mod signal;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
