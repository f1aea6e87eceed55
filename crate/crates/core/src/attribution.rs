//! Local and global channel importance, true-positive selection, coverage
//! pruning, and derivation of refined model specs.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ChannelKind, ChannelMeta};
use crate::explain::SaliencyMap;
use crate::nn::{ModelSpec, Variant};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no signal to rank: all channel importances are zero")]
    NoSignal,
}

pub type Result<T> = std::result::Result<T, AttributionError>;

fn check_alpha(alpha: u8) -> Result<()> {
    if alpha > 1 {
        return Err(AttributionError::InvalidArgument(format!(
            "alpha must be 0 or 1, got {alpha}"
        )));
    }
    Ok(())
}

/// Local per-instance channel importances and their global mean.
/// `alpha = 0` sums signed attributions over time, `alpha = 1` sums absolute
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelImportance {
    /// N_selected x C matrix of per-instance channel importances.
    pub local: Array2<f64>,
    /// Per-channel mean over the selected instances.
    pub global: Array1<f64>,
    pub alpha: u8,
    pub n_instances: usize,
}

/// Indices where the model predicts failure and the label confirms it.
pub fn select_tp(probabilities: &[f64], labels: &[u8], threshold: f64) -> Result<Vec<usize>> {
    if probabilities.len() != labels.len() {
        return Err(AttributionError::InvalidArgument(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    Ok(probabilities
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (&p, &l))| p >= threshold && l == 1)
        .map(|(i, _)| i)
        .collect())
}

/// Sums one saliency map over time per channel:
/// `psi_c = sum_t ((1 - alpha) * phi_ct + alpha * |phi_ct|)`.
pub fn local_aggregate(map: &SaliencyMap, alpha: u8) -> Result<Array1<f64>> {
    check_alpha(alpha)?;
    let (c, _) = map.phi.dim();
    let mut out = Array1::zeros(c);
    for (ci, row) in map.phi.rows().into_iter().enumerate() {
        out[ci] = row
            .iter()
            .map(|&v| if alpha == 1 { v.abs() } else { v })
            .sum();
    }
    Ok(out)
}

/// Averages local aggregates across instances into global channel
/// importance.
pub fn global_aggregate(maps: &[SaliencyMap], alpha: u8) -> Result<ChannelImportance> {
    check_alpha(alpha)?;
    if maps.is_empty() {
        return Err(AttributionError::InvalidArgument("no saliency maps given".into()));
    }
    let dims = maps[0].phi.dim();
    let c = dims.0;
    let mut local = Array2::zeros((maps.len(), c));
    for (n, map) in maps.iter().enumerate() {
        if map.phi.dim() != dims {
            return Err(AttributionError::Shape(format!(
                "map {n} has shape {:?}, expected {dims:?}",
                map.phi.dim()
            )));
        }
        local.row_mut(n).assign(&local_aggregate(map, alpha)?);
    }
    let global = local.sum_axis(ndarray::Axis(0)) / maps.len() as f64;
    Ok(ChannelImportance { local, global, alpha, n_instances: maps.len() })
}

/// Channels retained by coverage pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedFeatureSet {
    /// Retained channel indices in ascending order.
    pub kept_channels: Vec<usize>,
    /// Realized magnitude cutoff: the |psi| of the weakest kept prunable
    /// channel.
    pub tau: f64,
    /// Achieved fraction of total |psi| covered by the kept set.
    pub coverage: f64,
    /// Non-prunable channels (always retained).
    pub exempt_channels: Vec<usize>,
}

/// Keeps the shortest prefix of channels, ranked by |psi| descending (ties
/// toward the lower index), whose cumulative share reaches `coverage`; the
/// channel crossing the threshold is included. Channels marked non-prunable
/// are always retained on top of that.
pub fn prune(
    importance: &ChannelImportance,
    coverage: f64,
    channel_meta: &[ChannelMeta],
) -> Result<PrunedFeatureSet> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(AttributionError::InvalidArgument(format!(
            "coverage must be in (0, 1], got {coverage}"
        )));
    }
    let c = importance.global.len();
    if channel_meta.len() != c {
        return Err(AttributionError::Shape(format!(
            "{} channel_meta entries for {c} channels",
            channel_meta.len()
        )));
    }
    let magnitudes: Vec<f64> = importance.global.iter().map(|v| v.abs()).collect();
    let total: f64 = magnitudes.iter().sum();
    if total == 0.0 {
        return Err(AttributionError::NoSignal);
    }

    let mut ranked: Vec<usize> = (0..c).collect();
    ranked.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]).then(a.cmp(&b)));

    let target = coverage * total;
    let mut kept: Vec<usize> = Vec::new();
    let mut cumulative = 0.0;
    for &ch in &ranked {
        kept.push(ch);
        cumulative += magnitudes[ch];
        // Relative tolerance so coverage = 1.0 stops at the last nonzero
        // channel despite summation rounding.
        if cumulative >= target - 1e-12 * total {
            break;
        }
    }

    let exempt_channels: Vec<usize> =
        (0..c).filter(|&ch| !channel_meta[ch].prunable).collect();
    for &ch in &exempt_channels {
        if !kept.contains(&ch) {
            kept.push(ch);
        }
    }
    kept.sort_unstable();

    let tau = kept
        .iter()
        .filter(|&&ch| channel_meta[ch].prunable)
        .map(|&ch| magnitudes[ch])
        .fold(f64::INFINITY, f64::min);
    let tau = if tau.is_finite() { tau } else { 0.0 };
    let achieved = kept.iter().map(|&ch| magnitudes[ch]).sum::<f64>() / total;

    Ok(PrunedFeatureSet { kept_channels: kept, tau, coverage: achieved, exempt_channels })
}

/// Maps a spec onto the pruned feature set:
///
/// - Gentrap loses all WS channels -> Ltrans at half the embedding width,
///   GNN aggregation and static branch dropped;
/// - LSTM+ with at least half the channels pruned -> LLSTM+ (the two
///   smallest layers, static branch dropped);
/// - otherwise the original architecture with `input_channels` filtered.
///   A Gentrap that keeps some WS channels keeps them congruently: a WS
///   channel survives for every station rank if it survived for any.
pub fn derive_pruned_spec(
    original: &ModelSpec,
    pruned: &PrunedFeatureSet,
    channel_meta: &[ChannelMeta],
) -> Result<ModelSpec> {
    if pruned.kept_channels.is_empty() {
        return Err(AttributionError::InvalidArgument("kept channel set is empty".into()));
    }
    for &ch in &pruned.kept_channels {
        if !original.input_channels.contains(&ch) {
            return Err(AttributionError::InvalidArgument(format!(
                "kept channel {ch} is not an input of the original spec"
            )));
        }
    }

    let is_ws = |ch: usize| {
        matches!(channel_meta[ch].kind, ChannelKind::Ws | ChannelKind::DerivedWs)
    };
    let keep: Vec<usize> = original
        .input_channels
        .iter()
        .copied()
        .filter(|ch| pruned.kept_channels.contains(ch))
        .collect();
    let kept_ws: Vec<usize> = keep.iter().copied().filter(|&ch| is_ws(ch)).collect();

    let filtered_spec = |channels: Vec<usize>, mut spec: ModelSpec| -> ModelSpec {
        spec.channel_kinds = channels
            .iter()
            .map(|&ch| {
                let pos = original.input_channels.iter().position(|&c| c == ch).expect("subset");
                original.channel_kinds[pos]
            })
            .collect();
        spec.input_channels = channels;
        spec
    };

    let spec = match original.variant {
        Variant::Gentrap if kept_ws.is_empty() => {
            let d_model = (original.d_model / 2).max(4);
            let mut n_heads = original.n_heads.min(d_model);
            while d_model % n_heads != 0 {
                n_heads -= 1;
            }
            let base = ModelSpec {
                variant: Variant::Ltrans,
                d_model,
                n_heads,
                n_encoder_blocks: original.n_encoder_blocks,
                lstm_layer_sizes: vec![],
                k_stations: 1,
                use_static_branch: false,
                input_channels: vec![],
                channel_kinds: vec![],
                static_dim: 0,
                t_len: original.t_len,
            };
            filtered_spec(keep, base)
        }
        Variant::Gentrap => {
            // Congruent WS retention: a block offset survives for all ranks
            // if it survived for any rank.
            let ws_all: Vec<usize> =
                original.input_channels.iter().copied().filter(|&ch| is_ws(ch)).collect();
            let block = original.ws_block_size();
            let mut kept_offsets: Vec<usize> = kept_ws
                .iter()
                .map(|ch| ws_all.iter().position(|c| c == ch).expect("ws subset") % block)
                .collect();
            kept_offsets.sort_unstable();
            kept_offsets.dedup();
            let channels: Vec<usize> = original
                .input_channels
                .iter()
                .copied()
                .filter(|&ch| {
                    if !is_ws(ch) {
                        return pruned.kept_channels.contains(&ch);
                    }
                    let offset =
                        ws_all.iter().position(|&c| c == ch).expect("ws subset") % block;
                    kept_offsets.contains(&offset)
                })
                .collect();
            filtered_spec(channels, original.clone())
        }
        Variant::LstmPlus if keep.len() * 2 <= original.input_channels.len() => {
            let n = original.lstm_layer_sizes.len();
            let layers = original.lstm_layer_sizes[n.saturating_sub(2)..].to_vec();
            let base = ModelSpec {
                variant: Variant::LlstmPlus,
                lstm_layer_sizes: layers,
                use_static_branch: false,
                static_dim: 0,
                input_channels: vec![],
                channel_kinds: vec![],
                ..original.clone()
            };
            filtered_spec(keep, base)
        }
        _ => filtered_spec(keep, original.clone()),
    };

    spec.validate().map_err(|e| AttributionError::InvalidArgument(e.to_string()))?;
    Ok(spec)
}
