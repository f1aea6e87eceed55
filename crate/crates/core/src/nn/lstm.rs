//! Stacked LSTM forward and backward-through-time on a single sequence.
//!
//! Gates are packed `[input, forget, cell, output]` along the last axis of
//! the weight matrices. Only the final hidden state of the top layer feeds
//! the head; gradients still flow into every timestep of lower layers
//! through the stacking.

use ndarray::{Array1, Array2};

use super::params::LstmLayerParams;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct StepCache {
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    tanh_c: Array1<f64>,
}

pub(crate) struct LayerCache {
    /// Input sequence to the layer, T x in.
    input: Array2<f64>,
    steps: Vec<StepCache>,
    /// Hidden state sequence, T x h.
    pub hidden: Array2<f64>,
}

fn layer_forward(input: &Array2<f64>, p: &LstmLayerParams) -> LayerCache {
    let t_len = input.nrows();
    let h = p.hidden();
    let mut h_prev = Array1::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    let mut steps = Vec::with_capacity(t_len);
    let mut hidden = Array2::zeros((t_len, h));
    for t in 0..t_len {
        let x_t = input.row(t);
        let z = x_t.dot(&p.wx) + h_prev.dot(&p.wh) + &p.b;
        let i = z.slice(ndarray::s![0..h]).mapv(sigmoid);
        let f = z.slice(ndarray::s![h..2 * h]).mapv(sigmoid);
        let g = z.slice(ndarray::s![2 * h..3 * h]).mapv(f64::tanh);
        let o = z.slice(ndarray::s![3 * h..4 * h]).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h_t = &o * &tanh_c;
        hidden.row_mut(t).assign(&h_t);
        steps.push(StepCache { h_prev, c_prev, i, f, g, o, tanh_c });
        h_prev = h_t;
        c_prev = c;
    }
    LayerCache { input: input.clone(), steps, hidden }
}

pub(crate) struct StackCache {
    pub layers: Vec<LayerCache>,
}

impl StackCache {
    /// Final hidden state of the top layer.
    pub fn last_hidden(&self) -> Array1<f64> {
        let top = &self.layers.last().expect("at least one layer").hidden;
        top.row(top.nrows() - 1).to_owned()
    }
}

pub(crate) fn stack_forward(seq: &Array2<f64>, layers: &[LstmLayerParams]) -> StackCache {
    let mut caches = Vec::with_capacity(layers.len());
    let mut input = seq.clone();
    for p in layers {
        let cache = layer_forward(&input, p);
        input = cache.hidden.clone();
        caches.push(cache);
    }
    StackCache { layers: caches }
}

/// BPTT through one layer given the gradient of its full hidden sequence.
/// Accumulates parameter gradients into `g` and returns the gradient wrt the
/// layer's input sequence.
fn layer_backward(
    d_hidden: &Array2<f64>,
    cache: &LayerCache,
    p: &LstmLayerParams,
    g: &mut LstmLayerParams,
) -> Array2<f64> {
    let t_len = cache.input.nrows();
    let h = p.hidden();
    let mut d_input = Array2::zeros((t_len, cache.input.ncols()));
    let mut dh_rec = Array1::zeros(h);
    let mut dc = Array1::<f64>::zeros(h);
    for t in (0..t_len).rev() {
        let s = &cache.steps[t];
        let dh = &d_hidden.row(t) + &dh_rec;
        let d_o = &dh * &s.tanh_c;
        dc = dc + &dh * &s.o * &s.tanh_c.mapv(|v| 1.0 - v * v);
        let d_i = &dc * &s.g;
        let d_f = &dc * &s.c_prev;
        let d_g = &dc * &s.i;

        // Pre-activation gradients in packed gate order.
        let mut dz = Array1::zeros(4 * h);
        for j in 0..h {
            dz[j] = d_i[j] * s.i[j] * (1.0 - s.i[j]);
            dz[h + j] = d_f[j] * s.f[j] * (1.0 - s.f[j]);
            dz[2 * h + j] = d_g[j] * (1.0 - s.g[j] * s.g[j]);
            dz[3 * h + j] = d_o[j] * s.o[j] * (1.0 - s.o[j]);
        }

        let x_t = cache.input.row(t);
        for (r, &xv) in x_t.iter().enumerate() {
            for (c, &dzv) in dz.iter().enumerate() {
                g.wx[[r, c]] += xv * dzv;
            }
        }
        for (r, &hv) in s.h_prev.iter().enumerate() {
            for (c, &dzv) in dz.iter().enumerate() {
                g.wh[[r, c]] += hv * dzv;
            }
        }
        g.b += &dz;

        d_input.row_mut(t).assign(&p.wx.dot(&dz));
        dh_rec = p.wh.dot(&dz);
        dc = &dc * &s.f;
    }
    d_input
}

/// Backward through the stack given the gradient of the top layer's final
/// hidden state.
pub(crate) fn stack_backward(
    d_last_hidden: &Array1<f64>,
    cache: &StackCache,
    layers: &[LstmLayerParams],
    grads: &mut [LstmLayerParams],
) {
    let top = cache.layers.len() - 1;
    let t_len = cache.layers[top].hidden.nrows();
    let mut d_hidden = Array2::zeros((t_len, layers[top].hidden()));
    d_hidden.row_mut(t_len - 1).assign(d_last_hidden);
    for l in (0..cache.layers.len()).rev() {
        let d_input = layer_backward(&d_hidden, &cache.layers[l], &layers[l], &mut grads[l]);
        d_hidden = d_input;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmLayerParams {
        LstmLayerParams {
            wx: Array2::from_shape_fn((input, 4 * hidden), |_| (rng.random::<f64>() - 0.5) * 0.8),
            wh: Array2::from_shape_fn((hidden, 4 * hidden), |_| (rng.random::<f64>() - 0.5) * 0.8),
            b: Array1::from_shape_fn(4 * hidden, |_| (rng.random::<f64>() - 0.5) * 0.2),
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layers = vec![random_layer(&mut rng, 3, 5), random_layer(&mut rng, 5, 4)];
        let seq = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>() - 0.5);
        let a = stack_forward(&seq, &layers);
        let b = stack_forward(&seq, &layers);
        assert_eq!(a.last_hidden().len(), 4);
        assert_eq!(a.last_hidden(), b.last_hidden());
    }

    #[test]
    fn gradient_matches_finite_difference_on_scalar_loss() {
        // Loss = sum(last hidden); checks BPTT through two stacked layers.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layers = vec![random_layer(&mut rng, 2, 4), random_layer(&mut rng, 4, 3)];
        let seq = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>() - 0.5);

        let cache = stack_forward(&seq, &layers);
        let mut grads = vec![
            LstmLayerParams { wx: Array2::zeros((2, 16)), wh: Array2::zeros((4, 16)), b: Array1::zeros(16) },
            LstmLayerParams { wx: Array2::zeros((4, 12)), wh: Array2::zeros((3, 12)), b: Array1::zeros(12) },
        ];
        stack_backward(&Array1::ones(3), &cache, &layers, &mut grads);

        let h = 1e-5;
        for (li, ci) in [(0usize, (1usize, 7usize)), (1, (2, 5))] {
            let mut plus = layers.clone();
            plus[li].wx[[ci.0, ci.1]] += h;
            let mut minus = layers.clone();
            minus[li].wx[[ci.0, ci.1]] -= h;
            let lp = stack_forward(&seq, &plus).last_hidden().sum();
            let lm = stack_forward(&seq, &minus).last_hidden().sum();
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[li].wx[[ci.0, ci.1]];
            assert!(
                (numeric - analytic).abs() / numeric.abs().max(1e-6) < 1e-6,
                "layer {li}: {analytic} vs {numeric}"
            );
        }
    }
}
