//! Gaussian-weighted apex frames for video condensation, multi-length
//! unlabeled apex pools, pseudo-label semi-supervised live/spoof training
//! with an optional LSTM sequence head, and biometric error metrics.
//!
//! The pipeline, bottom up:
//!
//! - [`tensor_io`]: `AFV1` video container, PGM/PPM previews, dataset manifests.
//! - [`apex`]: Gaussian weights around the central frame and the apex frame.
//! - [`segment`]: fixed-length segmentation, per-segment apexes, unlabeled pools.
//! - [`model`]: grid features, MLP and LSTM with analytic gradients, Adam, checkpoints.
//! - [`train`]: supervised, semi-supervised and LSTM-head training plus scoring.
//! - [`metrics`]: ROC, AUC, EER threshold and HTER threshold transfer.
//! - [`synth`]: deterministic synthetic live/spoof videos across domains.

pub mod apex;
pub mod error;
pub mod metrics;
pub mod model;
pub mod segment;
pub mod synth;
pub mod tensor_io;
pub mod train;

pub use error::{Error, Result};
