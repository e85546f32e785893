//! Fair training under shifts of the label/group correlation.
//!
//! The pipeline estimates (or takes) a range for the deployment correlation constant, solves a
//! small class-ratio program through an SDP relaxation, resamples the training data to the new
//! ratios, and trains fairness-aware linear classifiers on the result.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ratio;
pub mod resample;
pub mod shift;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
