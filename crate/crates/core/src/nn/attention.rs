//! Encoder block: multi-head self-attention, layer norm, and a GELU
//! feed-forward, post-norm arrangement, with explicit backward passes.

use ndarray::{Array1, Array2, Axis};

use super::params::{EncoderBlockParams, TransformerParams};

const LN_EPS: f64 = 1e-5;

pub(crate) fn gelu(x: f64) -> f64 {
    const A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (A * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    const A: f64 = 0.797_884_560_802_865_4;
    let u = A * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * A * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

/// Row-wise layer norm over the feature axis.
fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let is = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * is);
        inv_std.push(is);
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * gamma[j] + beta[j];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gamma: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let (t, d) = dy.dim();
    let df = d as f64;
    let mut dx = Array2::zeros((t, d));
    let mut dgamma = Array1::zeros(d);
    let mut dbeta = Array1::zeros(d);
    for i in 0..t {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for j in 0..d {
            let dxh = dy[[i, j]] * gamma[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * cache.xhat[[i, j]];
            dgamma[j] += dy[[i, j]] * cache.xhat[[i, j]];
            dbeta[j] += dy[[i, j]];
        }
        for j in 0..d {
            let dxh = dy[[i, j]] * gamma[j];
            dx[[i, j]] = cache.inv_std[i] / df
                * (df * dxh - sum_dxhat - cache.xhat[[i, j]] * sum_dxhat_xhat);
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head row-softmax attention weights, T x T.
    att: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    for mut row in y.rows_mut() {
        row += b;
    }
    y
}

fn multi_head_attention(
    x: &Array2<f64>,
    p: &EncoderBlockParams,
    n_heads: usize,
) -> (Array2<f64>, AttentionCache) {
    let (t, d) = x.dim();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = linear(x, &p.wq, &p.bq);
    let k = linear(x, &p.wk, &p.bk);
    let v = linear(x, &p.wv, &p.bv);

    let mut concat = Array2::zeros((t, d));
    let mut att = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = q.slice(ndarray::s![.., cols.clone()]);
        let kh = k.slice(ndarray::s![.., cols.clone()]);
        let vh = v.slice(ndarray::s![.., cols.clone()]);
        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|s| s * scale);
        // Row softmax with max subtraction.
        for mut row in scores.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|s| (s - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|s| s / sum);
        }
        let out_h = scores.dot(&vh);
        concat.slice_mut(ndarray::s![.., cols]).assign(&out_h);
        att.push(scores);
    }
    let out = linear(&concat, &p.wo, &p.bo);
    (out, AttentionCache { x: x.clone(), q, k, v, att, concat })
}

/// Gradients for one encoder block, same field layout as the parameters.
fn multi_head_attention_backward(
    d_out: &Array2<f64>,
    cache: &AttentionCache,
    p: &EncoderBlockParams,
    g: &mut EncoderBlockParams,
    n_heads: usize,
) -> Array2<f64> {
    let (t, d) = cache.x.dim();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    g.wo += &cache.concat.t().dot(d_out);
    g.bo += &d_out.sum_axis(Axis(0));
    let d_concat = d_out.dot(&p.wo.t());

    let mut dq = Array2::zeros((t, d));
    let mut dk = Array2::zeros((t, d));
    let mut dv = Array2::zeros((t, d));
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let att = &cache.att[h];
        let d_out_h = d_concat.slice(ndarray::s![.., cols.clone()]);
        let vh = cache.v.slice(ndarray::s![.., cols.clone()]);
        let qh = cache.q.slice(ndarray::s![.., cols.clone()]);
        let kh = cache.k.slice(ndarray::s![.., cols.clone()]);

        let d_att = d_out_h.dot(&vh.t());
        dv.slice_mut(ndarray::s![.., cols.clone()]).assign(&att.t().dot(&d_out_h));

        // Softmax backward per row: ds = att * (datt - sum(datt * att)).
        let mut d_scores = Array2::zeros((t, t));
        for i in 0..t {
            let dot: f64 = (0..t).map(|j| d_att[[i, j]] * att[[i, j]]).sum();
            for j in 0..t {
                d_scores[[i, j]] = att[[i, j]] * (d_att[[i, j]] - dot) * scale;
            }
        }
        dq.slice_mut(ndarray::s![.., cols.clone()]).assign(&d_scores.dot(&kh));
        dk.slice_mut(ndarray::s![.., cols]).assign(&d_scores.t().dot(&qh));
    }

    g.wq += &cache.x.t().dot(&dq);
    g.bq += &dq.sum_axis(Axis(0));
    g.wk += &cache.x.t().dot(&dk);
    g.bk += &dk.sum_axis(Axis(0));
    g.wv += &cache.x.t().dot(&dv);
    g.bv += &dv.sum_axis(Axis(0));

    dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t())
}

pub(crate) struct BlockCache {
    attention: AttentionCache,
    ln1: LayerNormCache,
    y1: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ln2: LayerNormCache,
}

fn encoder_block(
    x: &Array2<f64>,
    p: &EncoderBlockParams,
    n_heads: usize,
) -> (Array2<f64>, BlockCache) {
    let (attn_out, attention) = multi_head_attention(x, p, n_heads);
    let r1 = x + &attn_out;
    let (y1, ln1) = layer_norm(&r1, &p.ln1_gamma, &p.ln1_beta);
    let ff_pre = linear(&y1, &p.ff1.w, &p.ff1.b);
    let ff_act = ff_pre.mapv(gelu);
    let ff_out = linear(&ff_act, &p.ff2.w, &p.ff2.b);
    let r2 = &y1 + &ff_out;
    let (y2, ln2) = layer_norm(&r2, &p.ln2_gamma, &p.ln2_beta);
    (y2, BlockCache { attention, ln1, y1, ff_pre, ff_act, ln2 })
}

fn encoder_block_backward(
    dy2: &Array2<f64>,
    cache: &BlockCache,
    p: &EncoderBlockParams,
    g: &mut EncoderBlockParams,
    n_heads: usize,
) -> Array2<f64> {
    let (dr2, dg2, db2) = layer_norm_backward(dy2, &cache.ln2, &p.ln2_gamma);
    g.ln2_gamma += &dg2;
    g.ln2_beta += &db2;

    // r2 = y1 + ff2(gelu(ff1(y1)))
    g.ff2.w += &cache.ff_act.t().dot(&dr2);
    g.ff2.b += &dr2.sum_axis(Axis(0));
    let d_act = dr2.dot(&p.ff2.w.t());
    let d_pre = &d_act * &cache.ff_pre.mapv(gelu_prime);
    g.ff1.w += &cache.y1.t().dot(&d_pre);
    g.ff1.b += &d_pre.sum_axis(Axis(0));
    let dy1 = &dr2 + &d_pre.dot(&p.ff1.w.t());

    let (dr1, dg1, db1) = layer_norm_backward(&dy1, &cache.ln1, &p.ln1_gamma);
    g.ln1_gamma += &dg1;
    g.ln1_beta += &db1;

    // r1 = x + attention(x)
    let dx_attn = multi_head_attention_backward(&dr1, &cache.attention, p, g, n_heads);
    dr1 + dx_attn
}

pub(crate) struct CoreCache {
    seq: Array2<f64>,
    blocks: Vec<BlockCache>,
}

/// Embeds a T x C sequence, runs the encoder blocks, and mean-pools over
/// time. Returns the pooled representation.
pub(crate) fn core_forward(
    seq: &Array2<f64>,
    core: &TransformerParams,
    n_heads: usize,
) -> (Array1<f64>, CoreCache) {
    let mut y = linear(seq, &core.embed.w, &core.embed.b);
    let mut blocks = Vec::with_capacity(core.blocks.len());
    for b in &core.blocks {
        let (next, cache) = encoder_block(&y, b, n_heads);
        y = next;
        blocks.push(cache);
    }
    let t = seq.nrows() as f64;
    let pooled = y.sum_axis(Axis(0)) / t;
    (pooled, CoreCache { seq: seq.clone(), blocks })
}

/// Backward through pooling, blocks, and embedding. Accumulates parameter
/// gradients into `g` and returns the gradient wrt the input sequence.
pub(crate) fn core_backward(
    d_pooled: &Array1<f64>,
    cache: &CoreCache,
    core: &TransformerParams,
    g: &mut TransformerParams,
    n_heads: usize,
) -> Array2<f64> {
    let t = cache.seq.nrows();
    let mut dy = Array2::zeros((t, d_pooled.len()));
    for mut row in dy.rows_mut() {
        row.assign(&(d_pooled / t as f64));
    }
    for (cache_b, (pb, gb)) in
        cache.blocks.iter().zip(core.blocks.iter().zip(g.blocks.iter_mut())).rev()
    {
        dy = encoder_block_backward(&dy, cache_b, pb, gb, n_heads);
    }
    g.embed.w += &cache.seq.t().dot(&dy);
    g.embed.b += &dy.sum_axis(Axis(0));
    dy.dot(&core.embed.w.t())
}

/// Per-head attention weights for one sequence, used by diagnostics and the
/// row-stochasticity tests.
pub(crate) fn attention_weights(
    seq: &Array2<f64>,
    core: &TransformerParams,
    n_heads: usize,
) -> Vec<Vec<Array2<f64>>> {
    let mut y = linear(seq, &core.embed.w, &core.embed.b);
    let mut all = Vec::new();
    for b in &core.blocks {
        let (next, cache) = encoder_block(&y, b, n_heads);
        all.push(cache.attention.att.clone());
        y = next;
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::DenseParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gelu_prime_matches_finite_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_prime(x) - num).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f64 * 0.37 - 1.0);
        let gamma = Array1::ones(8);
        let beta = Array1::zeros(8);
        let (y, _) = layer_norm(&x, &gamma, &beta);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-9);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 8.0;
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec_d = 8;
        let core = TransformerParams {
            embed: DenseParams {
                w: Array2::from_shape_fn((5, spec_d), |_| rng.random::<f64>() - 0.5),
                b: Array1::zeros(spec_d),
            },
            blocks: vec![random_block(&mut rng, spec_d, 16)],
        };
        let seq = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>() * 2.0 - 1.0);
        for per_block in attention_weights(&seq, &core, 2) {
            for head in per_block {
                for row in head.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                    assert!(row.iter().all(|&w| w >= 0.0));
                }
            }
        }
    }

    fn random_block(rng: &mut ChaCha8Rng, d: usize, dff: usize) -> EncoderBlockParams {
        let m = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| (rng.random::<f64>() - 0.5) * 0.6)
        };
        EncoderBlockParams {
            wq: m(rng, d, d),
            wk: m(rng, d, d),
            wv: m(rng, d, d),
            wo: m(rng, d, d),
            bq: Array1::zeros(d),
            bk: Array1::zeros(d),
            bv: Array1::zeros(d),
            bo: Array1::zeros(d),
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
            ff1: DenseParams { w: m(rng, d, dff), b: Array1::zeros(dff) },
            ff2: DenseParams { w: m(rng, dff, d), b: Array1::zeros(d) },
        }
    }
}
