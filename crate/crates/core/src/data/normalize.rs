use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::folds::{fold_split, FoldSpec};
use super::{Result, TimeSeriesDataset};

/// Per-channel z-score statistics, computed on a fold's training instances
/// only and persisted for inference-time reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Z-scores every channel using mean/std from the fold's training split.
/// Channels with zero training variance are mapped to all-zero.
pub fn normalize(
    dataset: &TimeSeriesDataset,
    fold: &FoldSpec,
) -> Result<(TimeSeriesDataset, NormStats)> {
    let split = fold_split(dataset, fold);
    let c = dataset.n_channels();
    let t = dataset.t_len();
    let values = dataset.values();

    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    let count = (split.train.len() * t) as f64;
    for ch in 0..c {
        let mut sum = 0.0;
        for &n in &split.train {
            for ti in 0..t {
                sum += values[[n, ch, ti]];
            }
        }
        let m = if count > 0.0 { sum / count } else { 0.0 };
        let mut sq = 0.0;
        for &n in &split.train {
            for ti in 0..t {
                let d = values[[n, ch, ti]] - m;
                sq += d * d;
            }
        }
        mean[ch] = m;
        std[ch] = if count > 0.0 { (sq / count).sqrt() } else { 0.0 };
    }

    let stats = NormStats { mean, std };
    let normalized = apply(dataset, &stats)?;
    Ok((normalized, stats))
}

/// Applies existing statistics to a dataset (inference path).
pub fn apply(dataset: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    let (n, c, t) = dataset.values().dim();
    let mut out = Array3::zeros((n, c, t));
    for ni in 0..n {
        for ch in 0..c {
            for ti in 0..t {
                out[[ni, ch, ti]] = if stats.std[ch] == 0.0 {
                    0.0
                } else {
                    (dataset.values()[[ni, ch, ti]] - stats.mean[ch]) / stats.std[ch]
                };
            }
        }
    }
    dataset.with_values(out)
}

/// Inverse of [`apply`]. Degenerate (std = 0) channels come back as the
/// training mean, since their original values are not recoverable.
pub fn denormalize(dataset: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    let (n, c, t) = dataset.values().dim();
    let mut out = Array3::zeros((n, c, t));
    for ni in 0..n {
        for ch in 0..c {
            for ti in 0..t {
                out[[ni, ch, ti]] =
                    dataset.values()[[ni, ch, ti]] * stats.std[ch] + stats.mean[ch];
            }
        }
    }
    dataset.with_values(out)
}
