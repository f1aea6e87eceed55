//! Failure prediction on multivariate radio-link telemetry, with model-agnostic
//! Shapley attribution, channel pruning, and fidelity evaluation.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`data`]: dataset containers, CSV loading, windowing, rolling-origin folds,
//!   and per-fold normalization.
//! - [`synth`]: synthetic radio-link + weather-station generator with a planted
//!   failure mechanism and known ground-truth relevance.
//! - [`nn`]: a minimal neural toolkit (dense, LSTM, multi-head self-attention)
//!   and the four predictor architectures with training and checkpointing.
//! - [`explain`]: exact and Monte Carlo Shapley attribution with background
//!   masking.
//! - [`attribution`]: local/global channel importance, true-positive selection,
//!   coverage pruning, and refined model derivation.
//! - [`eval`]: precision/recall/F1, insertion/deletion fidelity curves, and
//!   report emission.
//! - [`tensor_io`]: the binary tensor file format shared by checkpoints and
//!   bulk exports.

pub mod attribution;
pub mod data;
pub mod eval;
pub mod explain;
pub mod nn;
pub mod synth;
pub mod tensor_io;
