//! Offline toolkit for probing tool-call dependency structure in agent
//! residual streams.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`trajlog`] loads JSON-lines trajectory logs and binary activation dumps.
//! 2. [`oracle`] derives the ground-truth dependency DAG of every trajectory
//!    (substring value-reuse oracle and a schema-typed value-equality oracle).
//! 3. [`features`] and [`probe`] turn call pairs into feature vectors and fit
//!    L2-regularised logistic edge probes.
//! 4. [`eval`] runs leave-one-group-out evaluation and the control battery,
//!    using the primitives in [`stats`].
//!
//! [`synth`] generates corpora with planted, known structure in the exact
//! on-disk formats, which is what the test suites run against.
//!
//! Numerical code is generic over the scalar type through [`Scalar`]; the
//! aliases below pin the common `f64` instantiations.

pub mod error;
pub mod eval;
pub mod features;
pub mod oracle;
pub mod probe;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod tensorfile;
pub mod trajlog;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for analysis.
pub type Real = f64;

pub type ProbeModel64 = probe::ProbeModel<f64>;
pub type ProbeModel32 = probe::ProbeModel<f32>;
pub type Standardizer64 = probe::Standardizer<f64>;
pub type Standardizer32 = probe::Standardizer<f32>;
pub type FittedProbe64 = probe::FittedProbe<f64>;
pub type PairExample64 = features::PairExample<f64>;
pub type PairDataset64 = eval::PairDataset<f64>;
pub type PairDataset32 = eval::PairDataset<f32>;

/// Layer set pooled by the canonical probe configuration.
pub const DEFAULT_LAYERS: [u32; 7] = [0, 14, 28, 41, 50, 57, 64];

/// Seed used when a command is not given one.
pub const DEFAULT_SEED: u64 = 42;
