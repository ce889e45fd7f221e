//! Ranking of report segments against a catalog of disclosure requirements.
//!
//! The pipeline: [`ingest`] turns raw reports into [`corpus::Document`]s,
//! [`features`] maps segments to vectors, a [`models::Classifier`] scores
//! every (segment, requirement) pair, and [`ranking`] produces top-K lists
//! which [`metrics`] evaluates against annotations.

pub mod checkpoint;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod ranking;
pub mod sampler;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};
