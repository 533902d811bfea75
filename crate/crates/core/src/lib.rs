//! Multilevel spoofing detection laboratory for limit-order-book streams.
//!
//! The crate is organised along the pipeline stages:
//!
//! * [`lob`] — order-book domain types and LOBSTER-format IO.
//! * [`synth`] — seeded synthetic order-book generator.
//! * [`inject`] — multilevel spoofing injection with ground-truth labels.
//! * [`features`] — manual features, normalisation, windowing and splits.
//! * [`repr`] — autoencoder representation models, hybrid reconstruction +
//!   supervised-contrastive training, and the cascaded LOB embedder.
//! * [`detect`] — one-class SVM and isolation forest detectors, score
//!   aggregation and thresholding.
//! * [`eval`] — ranking metrics and the experiment harness.
//!
//! Data-parallel loops go through [`par`]; with the `parallel` feature
//! (default) they run on rayon, otherwise sequentially. Results are identical
//! either way because every reduction happens in a fixed order.

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod inject;
pub mod lob;
pub mod par;
pub mod pipeline;
pub mod repr;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
