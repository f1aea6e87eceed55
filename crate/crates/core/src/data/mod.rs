//! Dataset containers, CSV ingestion, windowing, rolling-origin folds, and
//! per-fold normalization.

mod dataset;
mod folds;
mod loader;
mod normalize;
mod windows;

pub use dataset::{
    ChannelKind, ChannelMeta, DailyDataset, InstanceMeta, LinkDaily, TimeSeriesDataset,
};
pub use folds::{fold_split, rolling_origin_folds, FoldId, FoldSpec, SplitIndices};
pub use loader::{load_dataset, SchemaConfig};
pub use normalize::{apply as apply_normalization, denormalize, normalize, NormStats};
pub use windows::{make_windows, WindowReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("schema mismatch in {path}: missing or mistyped column \"{column}\"")]
    SchemaMismatch { path: String, column: String },
    #[error("empty file: {path}")]
    EmptyFile { path: String },
    #[error("cannot parse {what} \"{value}\" in {path}")]
    Parse { path: String, what: String, value: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
