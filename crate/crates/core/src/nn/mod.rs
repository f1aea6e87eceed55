//! Minimal neural toolkit and the four failure-prediction architectures.
//!
//! Everything runs in `f64` on single instances; batching is a deterministic
//! chunked loop so results never depend on worker count. The four variants:
//!
//! - `Gentrap`: per-station GNN transform of WS channels, a shared per-pair
//!   transformer encoder with global average pooling, elementwise max over
//!   the K pair embeddings, and a static-feature dense branch.
//! - `Ltrans`: the transformer branch alone over the selected channels.
//! - `LstmPlus`: stacked LSTM encoder (default sizes 128/64/32/16) with a
//!   static branch.
//! - `LlstmPlus`: two-layer LSTM without the static branch.

mod attention;
mod checkpoint;
mod gnn;
mod gradcheck;
mod lstm;
mod network;
mod params;
mod spec;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gnn::gnn_max_aggregate;
pub use gradcheck::gradient_check;
pub use network::TrainedModel;
pub use params::NetParams;
pub use spec::{ClassWeighting, ModelSpec, TrainConfig, Variant};
pub use train::{train, EpochRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("training diverged (loss is not finite) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("class weighting needs at least one positive training label")]
    NoPositiveLabels,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    TensorIo(#[from] crate::tensor_io::TensorIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
