//! Cross-domain anomaly detection for multivariate time series.
//!
//! The pipeline trains a temporal-convolutional encoder on a labelled (or
//! label-free) source domain together with an unlabelled target domain,
//! aligning the two with an adversarial domain discriminator while
//! contrastive losses shape the representation. A centre-based one-class
//! classifier head turns representations into anomaly scores. Synthetic
//! anomaly injection supplies negatives wherever real labels are missing.

pub mod ablation;
pub mod cli;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod inject;
pub mod loss;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod train;
pub mod triplet;

pub use error::{Error, Result};
