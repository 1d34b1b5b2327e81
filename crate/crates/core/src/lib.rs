//! Imbalanced semi-supervised intrusion detection.
//!
//! The crate is organised along the training pipeline:
//!
//! - [`data`]: CSV ingestion, encoding/standardisation, stratified splits and
//!   the on-disk dataset container.
//! - [`synthetic`]: a long-tailed Gaussian-mixture generator used for
//!   benchmarks that must run without downloads.
//! - [`model`]: the residual 1-D CNN backbone with exact reverse-mode
//!   gradients, MC-dropout inference, Adam and checkpoints.
//! - [`loss`]: supervised contrastive loss, smooth class weights, reset
//!   weights, weighted cross-entropy and their scheduled combination.
//! - [`pseudolabel`]: uncertainty/confidence gating, imbalance capping and
//!   Borderline-SMOTE.
//! - [`trainer`]: supervised warm-up and the self-training rounds.
//! - [`metrics`]: confusion matrices, macro metrics and report tables.
//! - [`experiment`]: run configuration and run-directory layout shared by the
//!   command-line front end.

pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pseudolabel;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
