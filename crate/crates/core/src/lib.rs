//! Pairwise preference evaluation harness.
//!
//! Prompts are ordered by how dissimilar two models' completions are
//! (KL divergence or cross-entropy over per-token probabilities), annotator
//! votes are merged with soft voting, and the resulting outcomes feed
//! tie-rate and Elo analyses. A seeded annotator simulator drives the whole
//! pipeline without human data.

pub mod aggregation;
pub mod analysis;
pub mod elo;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod ranking;
pub mod rng;
pub mod simulator;
pub mod storage;

pub use error::{Error, Result};
