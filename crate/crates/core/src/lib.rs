//! Headline incongruence detection.
//!
//! The crate is organized bottom-up:
//!
//! - [`autograd`]: dense `f64` tensors with reverse-mode differentiation
//! - [`nn`]: embeddings, GRU cells, convolutional encoders, attention, scorers
//! - [`models`]: the RDE, CDE, AHDE and HRE article scorers and the
//!   independent-paragraph wrapper
//! - [`corpus`]: corpus ingestion, cleansing, tokenization and synthetic
//!   incongruent-label generation
//! - [`baseline`]: similarity features with a logistic classifier
//! - [`train`]: Adam, gradient clipping and the training loop
//! - [`metrics`]: accuracy, AUROC, precision@N and breakdown tables

pub mod autograd;
pub mod baseline;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
