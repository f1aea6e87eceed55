use serde::{Deserialize, Serialize};

use crate::data::{ChannelKind, TimeSeriesDataset};

use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gentrap,
    Ltrans,
    LstmPlus,
    LlstmPlus,
}

impl Variant {
    pub fn is_transformer(self) -> bool {
        matches!(self, Variant::Gentrap | Variant::Ltrans)
    }
}

/// Architecture description. `input_channels` indexes into the dataset's
/// channel axis; `channel_kinds` is parallel to it so the network can split
/// RL, WS, and positional blocks without consulting the dataset again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub lstm_layer_sizes: Vec<usize>,
    /// Number of attached weather stations (Gentrap pair count).
    pub k_stations: usize,
    pub use_static_branch: bool,
    pub input_channels: Vec<usize>,
    pub channel_kinds: Vec<ChannelKind>,
    /// Width of the one-hot static feature vector (0 = none available).
    pub static_dim: usize,
    pub t_len: usize,
}

pub const LSTM_PLUS_DEFAULT_LAYERS: [usize; 4] = [128, 64, 32, 16];
pub const LLSTM_PLUS_DEFAULT_LAYERS: [usize; 2] = [32, 16];

impl ModelSpec {
    fn all_channels(dataset: &TimeSeriesDataset) -> (Vec<usize>, Vec<ChannelKind>) {
        let idx: Vec<usize> = (0..dataset.n_channels()).collect();
        let kinds = dataset.channel_meta().iter().map(|m| m.kind).collect();
        (idx, kinds)
    }

    /// Desk-scale transformer over every dataset channel.
    pub fn ltrans_desk(dataset: &TimeSeriesDataset) -> Self {
        let (input_channels, channel_kinds) = Self::all_channels(dataset);
        ModelSpec {
            variant: Variant::Ltrans,
            d_model: 8,
            n_heads: 2,
            n_encoder_blocks: 1,
            lstm_layer_sizes: vec![],
            k_stations: 1,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: dataset.t_len(),
        }
    }

    /// Desk-scale GNN-transformer with the static branch.
    pub fn gentrap_desk(dataset: &TimeSeriesDataset, k_stations: usize) -> Self {
        let (input_channels, channel_kinds) = Self::all_channels(dataset);
        let static_dim = dataset.static_features().map_or(0, |s| s.ncols());
        ModelSpec {
            variant: Variant::Gentrap,
            d_model: 16,
            n_heads: 2,
            n_encoder_blocks: 1,
            lstm_layer_sizes: vec![],
            k_stations,
            use_static_branch: static_dim > 0,
            input_channels,
            channel_kinds,
            static_dim,
            t_len: dataset.t_len(),
        }
    }

    pub fn lstm_plus_desk(dataset: &TimeSeriesDataset) -> Self {
        let (input_channels, channel_kinds) = Self::all_channels(dataset);
        let static_dim = dataset.static_features().map_or(0, |s| s.ncols());
        ModelSpec {
            variant: Variant::LstmPlus,
            d_model: 0,
            n_heads: 0,
            n_encoder_blocks: 0,
            lstm_layer_sizes: LSTM_PLUS_DEFAULT_LAYERS.to_vec(),
            k_stations: 1,
            use_static_branch: static_dim > 0,
            input_channels,
            channel_kinds,
            static_dim,
            t_len: dataset.t_len(),
        }
    }

    pub fn llstm_plus_desk(dataset: &TimeSeriesDataset) -> Self {
        let (input_channels, channel_kinds) = Self::all_channels(dataset);
        ModelSpec {
            variant: Variant::LlstmPlus,
            d_model: 0,
            n_heads: 0,
            n_encoder_blocks: 0,
            lstm_layer_sizes: LLSTM_PLUS_DEFAULT_LAYERS.to_vec(),
            k_stations: 1,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: dataset.t_len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels.is_empty() {
            return Err(NnError::InvalidSpec("input_channels is empty".into()));
        }
        if self.channel_kinds.len() != self.input_channels.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} channel kinds for {} input channels",
                self.channel_kinds.len(),
                self.input_channels.len()
            )));
        }
        if self.t_len == 0 {
            return Err(NnError::InvalidSpec("t_len must be >= 1".into()));
        }
        match self.variant {
            Variant::Gentrap | Variant::Ltrans => {
                if self.d_model == 0 || self.n_heads == 0 || self.n_encoder_blocks == 0 {
                    return Err(NnError::InvalidSpec(
                        "transformer variants need d_model, n_heads, n_encoder_blocks".into(),
                    ));
                }
                if self.d_model % self.n_heads != 0 {
                    return Err(NnError::InvalidSpec(format!(
                        "d_model {} not divisible by n_heads {}",
                        self.d_model, self.n_heads
                    )));
                }
            }
            Variant::LstmPlus | Variant::LlstmPlus => {
                if self.lstm_layer_sizes.is_empty() || self.lstm_layer_sizes.contains(&0) {
                    return Err(NnError::InvalidSpec("lstm_layer_sizes must be nonzero".into()));
                }
            }
        }
        if self.variant == Variant::LlstmPlus && self.lstm_layer_sizes.len() != 2 {
            return Err(NnError::InvalidSpec(format!(
                "LLSTM+ has exactly 2 layers, got {}",
                self.lstm_layer_sizes.len()
            )));
        }
        if matches!(self.variant, Variant::Ltrans | Variant::LlstmPlus) && self.use_static_branch
        {
            return Err(NnError::InvalidSpec(
                "Ltrans and LLSTM+ do not use the static branch".into(),
            ));
        }
        if self.use_static_branch && self.static_dim == 0 {
            return Err(NnError::InvalidSpec(
                "static branch enabled but static_dim is 0".into(),
            ));
        }
        if self.variant == Variant::Gentrap {
            let ws = self.ws_channel_count();
            if self.k_stations == 0 {
                return Err(NnError::InvalidSpec("Gentrap needs k_stations >= 1".into()));
            }
            if ws == 0 || ws % self.k_stations != 0 {
                return Err(NnError::InvalidSpec(format!(
                    "Gentrap needs WS channels divisible into {} station blocks, got {ws}",
                    self.k_stations
                )));
            }
        }
        Ok(())
    }

    pub fn ws_channel_count(&self) -> usize {
        self.channel_kinds
            .iter()
            .filter(|k| matches!(k, ChannelKind::Ws | ChannelKind::DerivedWs))
            .count()
    }

    /// WS channels per station block (Gentrap).
    pub fn ws_block_size(&self) -> usize {
        if self.k_stations == 0 {
            0
        } else {
            self.ws_channel_count() / self.k_stations
        }
    }

    /// Channels of one transformer sequence: all selected channels for
    /// Ltrans, RL + one transformed WS block + positional for Gentrap.
    pub fn sequence_channels(&self) -> usize {
        match self.variant {
            Variant::Gentrap => {
                self.input_channels.len() - self.ws_channel_count() + self.ws_block_size()
            }
            _ => self.input_channels.len(),
        }
    }

    pub fn feed_forward_dim(&self) -> usize {
        2 * self.d_model
    }

    /// Static branch width: half the temporal representation, floored at 2.
    pub fn static_hidden(&self) -> usize {
        let repr = match self.variant {
            Variant::Gentrap | Variant::Ltrans => self.d_model,
            _ => *self.lstm_layer_sizes.last().expect("validated non-empty"),
        };
        (repr / 2).max(2)
    }

    /// Width of the temporal representation entering the head.
    pub fn repr_dim(&self) -> usize {
        match self.variant {
            Variant::Gentrap | Variant::Ltrans => self.d_model,
            _ => *self.lstm_layer_sizes.last().expect("validated non-empty"),
        }
    }

    /// Closed-form trainable parameter count. Dense layers count
    /// `in*out + out`; an LSTM layer counts `4*(in*h + h^2 + h)`; an encoder
    /// block counts `4*d^2 + 4*d` for attention plus feed-forward and
    /// layer-norm terms; the Gentrap GNN transform is a bias-free square
    /// matrix over one WS block.
    pub fn param_count(&self) -> usize {
        let head_in = self.repr_dim()
            + if self.use_static_branch && self.static_dim > 0 { self.static_hidden() } else { 0 };
        let head = head_in * 2 + 2;
        let static_branch = if self.use_static_branch && self.static_dim > 0 {
            self.static_dim * self.static_hidden() + self.static_hidden()
        } else {
            0
        };
        match self.variant {
            Variant::Gentrap | Variant::Ltrans => {
                let d = self.d_model;
                let dff = self.feed_forward_dim();
                let embed = self.sequence_channels() * d + d;
                let attention = 4 * d * d + 4 * d;
                let layer_norm = 4 * d;
                let feed_forward = 2 * d * dff + dff + d;
                let blocks = self.n_encoder_blocks * (attention + layer_norm + feed_forward);
                let gnn = if self.variant == Variant::Gentrap {
                    self.ws_block_size() * self.ws_block_size()
                } else {
                    0
                };
                embed + blocks + gnn + static_branch + head
            }
            Variant::LstmPlus | Variant::LlstmPlus => {
                let mut total = 0;
                let mut input = self.input_channels.len();
                for &h in &self.lstm_layer_sizes {
                    total += 4 * (input * h + h * h + h);
                    input = h;
                }
                total + static_branch + head
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
    pub early_stop_patience: usize,
}

impl TrainConfig {
    pub fn desk_default(seed: u64) -> Self {
        TrainConfig {
            batch_size: 1024,
            learning_rate: 0.001,
            epochs: 150,
            class_weighting: ClassWeighting::InverseFrequency,
            seed,
            early_stop_patience: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(NnError::InvalidSpec("learning_rate must be >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(NnError::InvalidSpec("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NnError::InvalidSpec("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(rl: usize, ws: usize, pos: usize) -> (Vec<usize>, Vec<ChannelKind>) {
        let mut k = Vec::new();
        k.extend(std::iter::repeat_n(ChannelKind::RlKpi, rl));
        k.extend(std::iter::repeat_n(ChannelKind::Ws, ws));
        k.extend(std::iter::repeat_n(ChannelKind::Positional, pos));
        ((0..k.len()).collect(), k)
    }

    fn ltrans_spec(c: usize) -> ModelSpec {
        let (input_channels, channel_kinds) = kinds(c - 1, 0, 1);
        ModelSpec {
            variant: Variant::Ltrans,
            d_model: 8,
            n_heads: 2,
            n_encoder_blocks: 1,
            lstm_layer_sizes: vec![],
            k_stations: 1,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: 4,
        }
    }

    #[test]
    fn dense_count_formula() {
        // dense 10 -> 2 is 10*2 + 2 = 22; the head of an Ltrans with
        // d_model 10 and no static branch is exactly that dense layer.
        let mut spec = ltrans_spec(4);
        spec.d_model = 10;
        let head_only = spec.param_count()
            - (spec.sequence_channels() * 10 + 10)
            - (4 * 100 + 40 + 40 + (2 * 10 * 20 + 20 + 10));
        assert_eq!(head_only, 22);
    }

    #[test]
    fn lstm_layer_count_formula() {
        // in=6, h=4: 4*(24 + 16 + 4) = 176.
        let (input_channels, channel_kinds) = kinds(5, 0, 1);
        let spec = ModelSpec {
            variant: Variant::LlstmPlus,
            d_model: 0,
            n_heads: 0,
            n_encoder_blocks: 0,
            lstm_layer_sizes: vec![4, 3],
            k_stations: 1,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: 4,
        };
        let second_layer = 4 * (4 * 3 + 9 + 3);
        let head = 3 * 2 + 2;
        assert_eq!(spec.param_count(), 176 + second_layer + head);
    }

    #[test]
    fn d_model_must_divide_heads() {
        let mut spec = ltrans_spec(4);
        spec.n_heads = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn llstm_must_have_two_layers() {
        let (input_channels, channel_kinds) = kinds(3, 0, 1);
        let spec = ModelSpec {
            variant: Variant::LlstmPlus,
            d_model: 0,
            n_heads: 0,
            n_encoder_blocks: 0,
            lstm_layer_sizes: vec![8, 4, 2],
            k_stations: 1,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: 4,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn gentrap_ws_blocks_must_divide() {
        let (input_channels, channel_kinds) = kinds(2, 5, 1);
        let spec = ModelSpec {
            variant: Variant::Gentrap,
            d_model: 8,
            n_heads: 2,
            n_encoder_blocks: 1,
            lstm_layer_sizes: vec![],
            k_stations: 2,
            use_static_branch: false,
            input_channels,
            channel_kinds,
            static_dim: 0,
            t_len: 4,
        };
        assert!(spec.validate().is_err());
    }
}
