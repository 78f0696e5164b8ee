//! Longitudinal cohort analysis: visit ingestion, progression-space
//! factorization, Gaussian-mixture subtype discovery and random-forest
//! subtype prediction from baseline assessments.

pub mod cohort;
pub mod config;
pub mod dimred;
pub mod error;
pub mod eval;
pub mod forest;
pub mod mixture;
pub mod pipeline;
pub(crate) mod matrix_serde;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
