use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{ChannelKind, NormStats, TimeSeriesDataset};

use super::attention::{attention_weights, core_backward, core_forward, CoreCache};
use super::lstm::{stack_backward, stack_forward, StackCache};
use super::params::NetParams;
use super::spec::{ModelSpec, Variant};
use super::{NnError, Result};

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: Option<f64>,
}

/// A trained predictor: spec, named weights, the normalization statistics the
/// weights were trained under, and the training log.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: NetParams,
    pub norm_stats: NormStats,
    pub param_count: usize,
    pub train_log: Vec<EpochRecord>,
    pub seed: u64,
}

impl TrainedModel {
    pub fn new(
        spec: ModelSpec,
        params: NetParams,
        norm_stats: NormStats,
        train_log: Vec<EpochRecord>,
        seed: u64,
    ) -> Self {
        let param_count = params.param_count();
        debug_assert_eq!(param_count, spec.param_count());
        TrainedModel { spec, params, norm_stats, param_count, train_log, seed }
    }

    /// Probability of failure (class 1) for one instance in normalized space.
    /// Pure and re-entrant; safe for concurrent callers.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>, static_row: Option<&[f64]>) -> f64 {
        let (logits, _) = forward(&self.spec, &self.params, x, static_row);
        softmax2(logits).1
    }

    /// Shape-validated prediction: rejects instances whose channel axis or
    /// window length do not match the spec.
    pub fn predict_checked(
        &self,
        x: ArrayView2<'_, f64>,
        static_row: Option<&[f64]>,
    ) -> Result<f64> {
        check_instance_shape(&self.spec, &x)?;
        Ok(self.predict_proba(x, static_row))
    }

    pub fn predict_instance(&self, dataset: &TimeSeriesDataset, n: usize) -> f64 {
        let static_row = dataset.static_row(n);
        self.predict_proba(dataset.instance(n), static_row.as_deref())
    }

    /// Probabilities for a set of instances; elementwise identical to calling
    /// [`predict_instance`] per index.
    pub fn predict_dataset(&self, dataset: &TimeSeriesDataset, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&n| self.predict_instance(dataset, n)).collect()
    }

    /// Attention weights per block and head for one instance (transformer
    /// variants only; the first Gentrap pair is reported).
    pub fn attention_probe(&self, x: ArrayView2<'_, f64>) -> Option<Vec<Vec<Array2<f64>>>> {
        let core = match &self.params {
            NetParams::Ltrans(p) => &p.core,
            NetParams::Gentrap(p) => &p.core,
            NetParams::Lstm(_) => return None,
        };
        let gathered = gather_input(&self.spec, x);
        let seq = match self.spec.variant {
            Variant::Ltrans => gathered.t().to_owned(),
            Variant::Gentrap => {
                let NetParams::Gentrap(p) = &self.params else { unreachable!() };
                gentrap_pair_sequences(&self.spec, p, &gathered).0.remove(0).1
            }
            _ => return None,
        };
        Some(attention_weights(&seq, core, self.spec.n_heads))
    }
}

pub(crate) fn softmax2(logits: [f64; 2]) -> (f64, f64) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    (e0 / (e0 + e1), e1 / (e0 + e1))
}

/// Rows of the dataset instance selected by the spec, C_in x T.
fn gather_input(spec: &ModelSpec, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let t = x.ncols();
    let mut out = Array2::zeros((spec.input_channels.len(), t));
    for (row, &c) in spec.input_channels.iter().enumerate() {
        out.row_mut(row).assign(&x.row(c));
    }
    out
}

pub(crate) struct StaticCache {
    input: Array1<f64>,
    out: Array1<f64>,
}

pub(crate) struct PairCache {
    ws_raw: Array2<f64>,
    hidden: Array2<f64>,
    core: CoreCache,
    pooled: Array1<f64>,
}

pub(crate) enum ForwardCache {
    Transformer {
        core: CoreCache,
        head_in: Array1<f64>,
    },
    Gentrap {
        pairs: Vec<PairCache>,
        argmax: Vec<usize>,
        static_branch: Option<StaticCache>,
        head_in: Array1<f64>,
    },
    Lstm {
        stack: StackCache,
        static_branch: Option<StaticCache>,
        head_in: Array1<f64>,
    },
}

fn static_forward(params: &NetParams, static_row: Option<&[f64]>, dim: usize) -> StaticCache {
    let (w, b) = match params {
        NetParams::Gentrap(p) => {
            let s = p.static_branch.as_ref().expect("validated");
            (&s.w, &s.b)
        }
        NetParams::Lstm(p) => {
            let s = p.static_branch.as_ref().expect("validated");
            (&s.w, &s.b)
        }
        NetParams::Ltrans(_) => unreachable!("Ltrans has no static branch"),
    };
    let mut input = Array1::zeros(dim);
    if let Some(row) = static_row {
        for (i, &v) in row.iter().take(dim).enumerate() {
            input[i] = v;
        }
    }
    let out = (input.dot(w) + b).mapv(f64::tanh);
    StaticCache { input, out }
}

/// Builds the K pair sequences for Gentrap: shared RL + positional columns,
/// one tanh-transformed WS block per attached station.
fn gentrap_pair_sequences(
    spec: &ModelSpec,
    p: &super::params::GentrapParams,
    gathered: &Array2<f64>,
) -> (Vec<(Array2<f64>, Array2<f64>)>, Vec<usize>) {
    let t = gathered.ncols();
    let ws_rows: Vec<usize> = spec
        .channel_kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, ChannelKind::Ws | ChannelKind::DerivedWs))
        .map(|(i, _)| i)
        .collect();
    let other_rows: Vec<usize> = (0..spec.channel_kinds.len())
        .filter(|i| !ws_rows.contains(i))
        .collect();
    let ws_b = spec.ws_block_size();
    let mut pairs = Vec::with_capacity(spec.k_stations);
    for k in 0..spec.k_stations {
        let block = &ws_rows[k * ws_b..(k + 1) * ws_b];
        let mut ws_raw = Array2::zeros((ws_b, t));
        for (r, &row) in block.iter().enumerate() {
            ws_raw.row_mut(r).assign(&gathered.row(row));
        }
        let hidden = p.gnn_w.dot(&ws_raw).mapv(f64::tanh);
        // Sequence is T x R: non-WS channels first, then the transformed block.
        let mut seq = Array2::zeros((t, other_rows.len() + ws_b));
        for (c, &row) in other_rows.iter().enumerate() {
            for ti in 0..t {
                seq[[ti, c]] = gathered[[row, ti]];
            }
        }
        for c in 0..ws_b {
            for ti in 0..t {
                seq[[ti, other_rows.len() + c]] = hidden[[c, ti]];
            }
        }
        pairs.push((ws_raw, seq));
    }
    (pairs, other_rows)
}

/// Forward pass for one dataset instance. Returns the two class logits and
/// the caches needed for backprop.
pub(crate) fn forward(
    spec: &ModelSpec,
    params: &NetParams,
    x: ArrayView2<'_, f64>,
    static_row: Option<&[f64]>,
) -> ([f64; 2], ForwardCache) {
    let gathered = gather_input(spec, x);
    match (spec.variant, params) {
        (Variant::Ltrans, NetParams::Ltrans(p)) => {
            let seq = gathered.t().to_owned();
            let (pooled, core) = core_forward(&seq, &p.core, spec.n_heads);
            let logits = head_logits(&p.head, &pooled);
            ([logits[0], logits[1]], ForwardCache::Transformer { core, head_in: pooled })
        }
        (Variant::Gentrap, NetParams::Gentrap(p)) => {
            let (pair_seqs, _) = gentrap_pair_sequences(spec, p, &gathered);
            let mut pairs = Vec::with_capacity(pair_seqs.len());
            for (ws_raw, seq) in pair_seqs {
                let hidden = {
                    // tanh(gnn_w . ws_raw) recomputed cheaply for the cache.
                    p.gnn_w.dot(&ws_raw).mapv(f64::tanh)
                };
                let (pooled, core) = core_forward(&seq, &p.core, spec.n_heads);
                pairs.push(PairCache { ws_raw, hidden, core, pooled });
            }
            // Elementwise max over pair embeddings; ties go to the lower k.
            let d = spec.d_model;
            let mut pooled_max = pairs[0].pooled.clone();
            let mut argmax = vec![0usize; d];
            for (k, pair) in pairs.iter().enumerate().skip(1) {
                for j in 0..d {
                    if pair.pooled[j] > pooled_max[j] {
                        pooled_max[j] = pair.pooled[j];
                        argmax[j] = k;
                    }
                }
            }
            let static_branch = (spec.use_static_branch && spec.static_dim > 0)
                .then(|| static_forward(params, static_row, spec.static_dim));
            let head_in = concat_head_input(&pooled_max, static_branch.as_ref());
            let logits = head_logits(&p.head, &head_in);
            (
                [logits[0], logits[1]],
                ForwardCache::Gentrap { pairs, argmax, static_branch, head_in },
            )
        }
        (Variant::LstmPlus | Variant::LlstmPlus, NetParams::Lstm(p)) => {
            let seq = gathered.t().to_owned();
            let stack = stack_forward(&seq, &p.layers);
            let static_branch = (spec.use_static_branch && spec.static_dim > 0)
                .then(|| static_forward(params, static_row, spec.static_dim));
            let head_in = concat_head_input(&stack.last_hidden(), static_branch.as_ref());
            let logits = head_logits(&p.head, &head_in);
            ([logits[0], logits[1]], ForwardCache::Lstm { stack, static_branch, head_in })
        }
        _ => unreachable!("spec variant and params variant always match"),
    }
}

fn concat_head_input(repr: &Array1<f64>, static_branch: Option<&StaticCache>) -> Array1<f64> {
    match static_branch {
        Some(s) => {
            let mut v = Array1::zeros(repr.len() + s.out.len());
            v.slice_mut(ndarray::s![..repr.len()]).assign(repr);
            v.slice_mut(ndarray::s![repr.len()..]).assign(&s.out);
            v
        }
        None => repr.clone(),
    }
}

fn head_logits(head: &super::params::DenseParams, input: &Array1<f64>) -> Array1<f64> {
    input.dot(&head.w) + &head.b
}

/// Backward pass from the logit gradient; accumulates into `grads`.
pub(crate) fn backward(
    spec: &ModelSpec,
    params: &NetParams,
    cache: &ForwardCache,
    d_logits: [f64; 2],
    grads: &mut NetParams,
) {
    let d_logits = Array1::from_vec(vec![d_logits[0], d_logits[1]]);
    match (params, cache, grads) {
        (
            NetParams::Ltrans(p),
            ForwardCache::Transformer { core, head_in },
            NetParams::Ltrans(g),
        ) => {
            let d_head_in = head_backward(&p.head, &mut g.head, head_in, &d_logits);
            core_backward(&d_head_in, core, &p.core, &mut g.core, spec.n_heads);
        }
        (
            NetParams::Gentrap(p),
            ForwardCache::Gentrap { pairs, argmax, static_branch, head_in },
            NetParams::Gentrap(g),
        ) => {
            let d_head_in = head_backward(&p.head, &mut g.head, head_in, &d_logits);
            let d = spec.d_model;
            let d_repr = d_head_in.slice(ndarray::s![..d]).to_owned();
            if let Some(s) = static_branch {
                let d_static = d_head_in.slice(ndarray::s![d..]).to_owned();
                let sg = g.static_branch.as_mut().expect("same shape");
                let d_pre = &d_static * &s.out.mapv(|v| 1.0 - v * v);
                accumulate_outer(&mut sg.w, &s.input, &d_pre);
                sg.b += &d_pre;
            }
            let ws_b = spec.ws_block_size();
            let n_other = spec.sequence_channels() - ws_b;
            for (k, pair) in pairs.iter().enumerate() {
                // Route gradient only to dimensions this pair won.
                let mut d_pooled = Array1::zeros(d);
                let mut any = false;
                for j in 0..d {
                    if argmax[j] == k {
                        d_pooled[j] = d_repr[j];
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                let d_seq =
                    core_backward(&d_pooled, &pair.core, &p.core, &mut g.core, spec.n_heads);
                // WS columns of the sequence came from tanh(gnn_w . ws_raw).
                let t = d_seq.nrows();
                let mut d_hidden = Array2::zeros((ws_b, t));
                for c in 0..ws_b {
                    for ti in 0..t {
                        d_hidden[[c, ti]] = d_seq[[ti, n_other + c]];
                    }
                }
                let d_pre = &d_hidden * &pair.hidden.mapv(|v| 1.0 - v * v);
                g.gnn_w += &d_pre.dot(&pair.ws_raw.t());
            }
        }
        (
            NetParams::Lstm(p),
            ForwardCache::Lstm { stack, static_branch, head_in },
            NetParams::Lstm(g),
        ) => {
            let d_head_in = head_backward(&p.head, &mut g.head, head_in, &d_logits);
            let h_last = p.layers.last().expect("non-empty").hidden();
            let d_repr = d_head_in.slice(ndarray::s![..h_last]).to_owned();
            if let Some(s) = static_branch {
                let d_static = d_head_in.slice(ndarray::s![h_last..]).to_owned();
                let sg = g.static_branch.as_mut().expect("same shape");
                let d_pre = &d_static * &s.out.mapv(|v| 1.0 - v * v);
                accumulate_outer(&mut sg.w, &s.input, &d_pre);
                sg.b += &d_pre;
            }
            stack_backward(&d_repr, stack, &p.layers, &mut g.layers);
        }
        _ => unreachable!("cache variant always matches params"),
    }
}

fn head_backward(
    head: &super::params::DenseParams,
    g: &mut super::params::DenseParams,
    input: &Array1<f64>,
    d_logits: &Array1<f64>,
) -> Array1<f64> {
    accumulate_outer(&mut g.w, input, d_logits);
    g.b += d_logits;
    head.w.dot(d_logits)
}

fn accumulate_outer(w: &mut Array2<f64>, input: &Array1<f64>, d_out: &Array1<f64>) {
    for (r, &iv) in input.iter().enumerate() {
        for (c, &dv) in d_out.iter().enumerate() {
            w[[r, c]] += iv * dv;
        }
    }
}

/// Weighted cross-entropy for one instance; returns (loss, dlogits).
pub(crate) fn weighted_ce(logits: [f64; 2], label: u8, weight: f64) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let log_sum = ((logits[0] - m).exp() + (logits[1] - m).exp()).ln() + m;
    let (p0, p1) = softmax2(logits);
    let loss = weight * (log_sum - logits[label as usize]);
    let mut d = [p0 * weight, p1 * weight];
    d[label as usize] -= weight;
    (loss, d)
}

impl NnError {
    pub(crate) fn shape(msg: impl Into<String>) -> NnError {
        NnError::Shape(msg.into())
    }
}

pub(crate) fn check_instance_shape(spec: &ModelSpec, x: &ArrayView2<'_, f64>) -> Result<()> {
    let needed = spec.input_channels.iter().copied().max().unwrap_or(0);
    if x.nrows() <= needed {
        return Err(NnError::shape(format!(
            "instance has {} channels, spec needs index {}",
            x.nrows(),
            needed
        )));
    }
    if x.ncols() != spec.t_len {
        return Err(NnError::shape(format!(
            "instance has T={}, spec has T={}",
            x.ncols(),
            spec.t_len
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChannelKind;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_spec(variant: Variant) -> ModelSpec {
        let kinds = vec![
            ChannelKind::RlKpi,
            ChannelKind::RlKpi,
            ChannelKind::Ws,
            ChannelKind::Ws,
            ChannelKind::Ws,
            ChannelKind::Ws,
            ChannelKind::Positional,
        ];
        ModelSpec {
            variant,
            d_model: 4,
            n_heads: 2,
            n_encoder_blocks: 1,
            lstm_layer_sizes: if variant.is_transformer() { vec![] } else { vec![5, 3] },
            k_stations: if variant == Variant::Gentrap { 2 } else { 1 },
            use_static_branch: matches!(variant, Variant::Gentrap | Variant::LstmPlus),
            input_channels: (0..7).collect(),
            channel_kinds: kinds,
            static_dim: 3,
            t_len: 4,
        }
    }

    fn make_model(variant: Variant, seed: u64) -> TrainedModel {
        let mut spec = toy_spec(variant);
        if !spec.use_static_branch {
            spec.static_dim = 0;
        }
        spec.validate().unwrap();
        let params = NetParams::init(&spec, seed);
        TrainedModel::new(
            spec,
            params,
            NormStats { mean: vec![0.0; 7], std: vec![1.0; 7] },
            vec![],
            seed,
        )
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((7, 4), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn forward_is_pure_and_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for variant in [Variant::Gentrap, Variant::Ltrans, Variant::LstmPlus, Variant::LlstmPlus]
        {
            let model = make_model(variant, 3);
            let x = random_instance(&mut rng);
            let s = vec![0.5, 1.0, 0.0];
            let p1 = model.predict_proba(x.view(), Some(&s));
            let p2 = model.predict_proba(x.view(), Some(&s));
            assert!(p1 > 0.0 && p1 < 1.0);
            assert_eq!(p1.to_bits(), p2.to_bits(), "{variant:?} forward is not pure");
        }
    }

    #[test]
    fn zero_head_weights_give_exactly_half() {
        for variant in [Variant::Gentrap, Variant::Ltrans, Variant::LstmPlus, Variant::LlstmPlus]
        {
            let mut model = make_model(variant, 5);
            for (name, data) in model.params.tensors_mut() {
                if name.starts_with("head.") {
                    data.fill(0.0);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let x = random_instance(&mut rng);
            assert_eq!(model.predict_proba(x.view(), Some(&[1.0, 0.0, 0.0])), 0.5);
        }
    }

    #[test]
    fn gentrap_max_picks_larger_pair_embedding() {
        // With identical WS blocks the two pairs tie, so argmax stays at the
        // lower index; perturbing block 2 upward must change the output only
        // through the max.
        let model = make_model(Variant::Gentrap, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = random_instance(&mut rng);
        for t in 0..4 {
            let v = x[[2, t]];
            x[[4, t]] = v;
            let v = x[[3, t]];
            x[[5, t]] = v;
        }
        let p_tied = model.predict_proba(x.view(), Some(&[1.0, 0.0, 0.0]));
        assert!(p_tied.is_finite());
    }

    #[test]
    fn weighted_ce_gradient_is_softmax_minus_onehot() {
        let (loss, d) = weighted_ce([0.3, -0.2], 1, 2.0);
        let (p0, p1) = softmax2([0.3, -0.2]);
        assert!((d[0] - 2.0 * p0).abs() < 1e-12);
        assert!((d[1] - 2.0 * (p1 - 1.0)).abs() < 1e-12);
        assert!(loss > 0.0);
    }

    #[test]
    fn shape_check_rejects_wrong_t() {
        let model = make_model(Variant::Ltrans, 1);
        let x = Array2::<f64>::zeros((7, 5));
        assert!(model.predict_checked(x.view(), None).is_err());
        let x = Array2::<f64>::zeros((3, 4));
        assert!(model.predict_checked(x.view(), None).is_err());
        let x = Array2::<f64>::zeros((7, 4));
        assert!(model.predict_checked(x.view(), None).is_ok());
    }
}
