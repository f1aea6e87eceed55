use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ModelSpec, Variant};

/// A dense layer `in x out` with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    fn init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        DenseParams { w: uniform_fan_in(rng, rows, cols), b: Array1::zeros(cols) }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        DenseParams { w: Array2::zeros((rows, cols)), b: Array1::zeros(cols) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlockParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bq: Array1<f64>,
    pub bk: Array1<f64>,
    pub bv: Array1<f64>,
    pub bo: Array1<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
    pub ff1: DenseParams,
    pub ff2: DenseParams,
}

impl EncoderBlockParams {
    fn init(rng: &mut ChaCha8Rng, d: usize, dff: usize) -> Self {
        EncoderBlockParams {
            wq: uniform_fan_in(rng, d, d),
            wk: uniform_fan_in(rng, d, d),
            wv: uniform_fan_in(rng, d, d),
            wo: uniform_fan_in(rng, d, d),
            bq: Array1::zeros(d),
            bk: Array1::zeros(d),
            bv: Array1::zeros(d),
            bo: Array1::zeros(d),
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
            ff1: DenseParams::init(rng, d, dff),
            ff2: DenseParams::init(rng, dff, d),
        }
    }

    fn zeros(d: usize, dff: usize) -> Self {
        EncoderBlockParams {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            bk: Array1::zeros(d),
            bv: Array1::zeros(d),
            bo: Array1::zeros(d),
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
            ff1: DenseParams::zeros(d, dff),
            ff2: DenseParams::zeros(dff, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub embed: DenseParams,
    pub blocks: Vec<EncoderBlockParams>,
}

/// One LSTM layer with gates packed `[input, forget, cell, output]` along the
/// last axis. `wx` is `in x 4h`, `wh` is `h x 4h`, `b` is `4h` with the
/// forget-gate slice initialized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmLayerParams {
    fn init(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        for i in hidden..2 * hidden {
            b[i] = 1.0;
        }
        LstmLayerParams {
            wx: uniform_fan_in(rng, input, 4 * hidden),
            wh: uniform_fan_in(rng, hidden, 4 * hidden),
            b,
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerParams {
            wx: Array2::zeros((input, 4 * hidden)),
            wh: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GentrapParams {
    /// Bias-free square transform applied per timestep to one WS block.
    pub gnn_w: Array2<f64>,
    pub core: TransformerParams,
    pub static_branch: Option<DenseParams>,
    pub head: DenseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtransParams {
    pub core: TransformerParams,
    pub head: DenseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStackParams {
    pub layers: Vec<LstmLayerParams>,
    pub static_branch: Option<DenseParams>,
    pub head: DenseParams,
}

/// Named weight tensors of one model. Iteration order is fixed by
/// construction, which makes optimizer state, checkpoints, and counting
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub enum NetParams {
    Gentrap(GentrapParams),
    Ltrans(LtransParams),
    Lstm(LstmStackParams),
}

/// Scaled-uniform init by fan-in: U(-1/sqrt(rows), 1/sqrt(rows)).
fn uniform_fan_in(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
}

impl NetParams {
    /// Builds seeded initial weights for a validated spec.
    pub fn init(spec: &ModelSpec, seed: u64) -> NetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let static_branch = |rng: &mut ChaCha8Rng| {
            (spec.use_static_branch && spec.static_dim > 0)
                .then(|| DenseParams::init(rng, spec.static_dim, spec.static_hidden()))
        };
        let head_in = spec.repr_dim()
            + if spec.use_static_branch && spec.static_dim > 0 { spec.static_hidden() } else { 0 };
        match spec.variant {
            Variant::Gentrap => {
                let ws = spec.ws_block_size();
                let gnn_w = uniform_fan_in(&mut rng, ws, ws);
                let core = TransformerParams {
                    embed: DenseParams::init(&mut rng, spec.sequence_channels(), spec.d_model),
                    blocks: (0..spec.n_encoder_blocks)
                        .map(|_| {
                            EncoderBlockParams::init(&mut rng, spec.d_model, spec.feed_forward_dim())
                        })
                        .collect(),
                };
                let sb = static_branch(&mut rng);
                let head = DenseParams::init(&mut rng, head_in, 2);
                NetParams::Gentrap(GentrapParams { gnn_w, core, static_branch: sb, head })
            }
            Variant::Ltrans => {
                let core = TransformerParams {
                    embed: DenseParams::init(&mut rng, spec.sequence_channels(), spec.d_model),
                    blocks: (0..spec.n_encoder_blocks)
                        .map(|_| {
                            EncoderBlockParams::init(&mut rng, spec.d_model, spec.feed_forward_dim())
                        })
                        .collect(),
                };
                let head = DenseParams::init(&mut rng, head_in, 2);
                NetParams::Ltrans(LtransParams { core, head })
            }
            Variant::LstmPlus | Variant::LlstmPlus => {
                let mut layers = Vec::new();
                let mut input = spec.input_channels.len();
                for &h in &spec.lstm_layer_sizes {
                    layers.push(LstmLayerParams::init(&mut rng, input, h));
                    input = h;
                }
                let sb = static_branch(&mut rng);
                let head = DenseParams::init(&mut rng, head_in, 2);
                NetParams::Lstm(LstmStackParams { layers, static_branch: sb, head })
            }
        }
    }

    /// Same shapes, all zeros. Used for gradients and optimizer state.
    pub fn zeros_like(spec: &ModelSpec) -> NetParams {
        let static_branch = || {
            (spec.use_static_branch && spec.static_dim > 0)
                .then(|| DenseParams::zeros(spec.static_dim, spec.static_hidden()))
        };
        let head_in = spec.repr_dim()
            + if spec.use_static_branch && spec.static_dim > 0 { spec.static_hidden() } else { 0 };
        match spec.variant {
            Variant::Gentrap => {
                let ws = spec.ws_block_size();
                NetParams::Gentrap(GentrapParams {
                    gnn_w: Array2::zeros((ws, ws)),
                    core: TransformerParams {
                        embed: DenseParams::zeros(spec.sequence_channels(), spec.d_model),
                        blocks: (0..spec.n_encoder_blocks)
                            .map(|_| {
                                EncoderBlockParams::zeros(spec.d_model, spec.feed_forward_dim())
                            })
                            .collect(),
                    },
                    static_branch: static_branch(),
                    head: DenseParams::zeros(head_in, 2),
                })
            }
            Variant::Ltrans => NetParams::Ltrans(LtransParams {
                core: TransformerParams {
                    embed: DenseParams::zeros(spec.sequence_channels(), spec.d_model),
                    blocks: (0..spec.n_encoder_blocks)
                        .map(|_| EncoderBlockParams::zeros(spec.d_model, spec.feed_forward_dim()))
                        .collect(),
                },
                head: DenseParams::zeros(head_in, 2),
            }),
            Variant::LstmPlus | Variant::LlstmPlus => {
                let mut layers = Vec::new();
                let mut input = spec.input_channels.len();
                for &h in &spec.lstm_layer_sizes {
                    layers.push(LstmLayerParams::zeros(input, h));
                    input = h;
                }
                NetParams::Lstm(LstmStackParams {
                    layers,
                    static_branch: static_branch(),
                    head: DenseParams::zeros(head_in, 2),
                })
            }
        }
    }

    /// Named tensors in fixed order: (name, dims, contiguous data).
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        match self {
            NetParams::Gentrap(p) => {
                push2(&mut out, "gnn.w".into(), &p.gnn_w);
                push_core(&mut out, &p.core);
                if let Some(s) = &p.static_branch {
                    push_dense(&mut out, "static", s);
                }
                push_dense(&mut out, "head", &p.head);
            }
            NetParams::Ltrans(p) => {
                push_core(&mut out, &p.core);
                push_dense(&mut out, "head", &p.head);
            }
            NetParams::Lstm(p) => {
                for (i, l) in p.layers.iter().enumerate() {
                    push2(&mut out, format!("lstm{i}.wx"), &l.wx);
                    push2(&mut out, format!("lstm{i}.wh"), &l.wh);
                    push1(&mut out, format!("lstm{i}.b"), &l.b);
                }
                if let Some(s) = &p.static_branch {
                    push_dense(&mut out, "static", s);
                }
                push_dense(&mut out, "head", &p.head);
            }
        }
        out
    }

    /// Mutable view over the same tensors, in the same order as [`tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        match self {
            NetParams::Gentrap(p) => {
                out.push(("gnn.w".into(), slice2_mut(&mut p.gnn_w)));
                core_tensors_mut(&mut out, &mut p.core);
                if let Some(s) = &mut p.static_branch {
                    dense_tensors_mut(&mut out, "static", s);
                }
                dense_tensors_mut(&mut out, "head", &mut p.head);
            }
            NetParams::Ltrans(p) => {
                core_tensors_mut(&mut out, &mut p.core);
                dense_tensors_mut(&mut out, "head", &mut p.head);
            }
            NetParams::Lstm(p) => {
                for (i, l) in p.layers.iter_mut().enumerate() {
                    out.push((format!("lstm{i}.wx"), slice2_mut(&mut l.wx)));
                    out.push((format!("lstm{i}.wh"), slice2_mut(&mut l.wh)));
                    out.push((format!("lstm{i}.b"), l.b.as_slice_mut().expect("contiguous")));
                }
                if let Some(s) = &mut p.static_branch {
                    dense_tensors_mut(&mut out, "static", s);
                }
                dense_tensors_mut(&mut out, "head", &mut p.head);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &NetParams, scale: f64) {
        let theirs = other.tensors();
        for ((_, mine), (_, _, other)) in self.tensors_mut().into_iter().zip(theirs) {
            for (m, o) in mine.iter_mut().zip(other) {
                *m += o * scale;
            }
        }
    }
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("owned arrays are standard layout")
}

fn push2<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: String, a: &'a Array2<f64>) {
    out.push((name, vec![a.nrows(), a.ncols()], slice2(a)));
}

fn push1<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: String, a: &'a Array1<f64>) {
    out.push((name, vec![a.len()], a.as_slice().expect("contiguous")));
}

fn push_dense<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: &str, d: &'a DenseParams) {
    push2(out, format!("{prefix}.w"), &d.w);
    push1(out, format!("{prefix}.b"), &d.b);
}

fn push_core<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, core: &'a TransformerParams) {
    push_dense(out, "embed", &core.embed);
    for (i, b) in core.blocks.iter().enumerate() {
        push2(out, format!("block{i}.wq"), &b.wq);
        push2(out, format!("block{i}.wk"), &b.wk);
        push2(out, format!("block{i}.wv"), &b.wv);
        push2(out, format!("block{i}.wo"), &b.wo);
        push1(out, format!("block{i}.bq"), &b.bq);
        push1(out, format!("block{i}.bk"), &b.bk);
        push1(out, format!("block{i}.bv"), &b.bv);
        push1(out, format!("block{i}.bo"), &b.bo);
        push1(out, format!("block{i}.ln1_gamma"), &b.ln1_gamma);
        push1(out, format!("block{i}.ln1_beta"), &b.ln1_beta);
        push1(out, format!("block{i}.ln2_gamma"), &b.ln2_gamma);
        push1(out, format!("block{i}.ln2_beta"), &b.ln2_beta);
        push_dense(out, &format!("block{i}.ff1"), &b.ff1);
        push_dense(out, &format!("block{i}.ff2"), &b.ff2);
    }
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("owned arrays are standard layout")
}

fn dense_tensors_mut<'a>(
    out: &mut Vec<(String, &'a mut [f64])>,
    prefix: &str,
    d: &'a mut DenseParams,
) {
    out.push((format!("{prefix}.w"), slice2_mut(&mut d.w)));
    out.push((format!("{prefix}.b"), d.b.as_slice_mut().expect("contiguous")));
}

fn core_tensors_mut<'a>(
    out: &mut Vec<(String, &'a mut [f64])>,
    core: &'a mut TransformerParams,
) {
    dense_tensors_mut(out, "embed", &mut core.embed);
    for (i, b) in core.blocks.iter_mut().enumerate() {
        out.push((format!("block{i}.wq"), slice2_mut(&mut b.wq)));
        out.push((format!("block{i}.wk"), slice2_mut(&mut b.wk)));
        out.push((format!("block{i}.wv"), slice2_mut(&mut b.wv)));
        out.push((format!("block{i}.wo"), slice2_mut(&mut b.wo)));
        out.push((format!("block{i}.bq"), b.bq.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.bk"), b.bk.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.bv"), b.bv.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.bo"), b.bo.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.ln1_gamma"), b.ln1_gamma.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.ln1_beta"), b.ln1_beta.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.ln2_gamma"), b.ln2_gamma.as_slice_mut().expect("contiguous")));
        out.push((format!("block{i}.ln2_beta"), b.ln2_beta.as_slice_mut().expect("contiguous")));
        dense_tensors_mut(out, &format!("block{i}.ff1"), &mut b.ff1);
        dense_tensors_mut(out, &format!("block{i}.ff2"), &mut b.ff2);
    }
}
