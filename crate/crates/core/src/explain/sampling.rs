use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::TimeSeriesDataset;
use crate::nn::TrainedModel;

use super::{BackgroundSet, CoalitionMask, ExplainError, PredictFn, Result, SaliencyMap};

/// Exact enumeration is capped at 2^20 coalitions.
pub const EXACT_LIMIT: usize = 20;

/// Substitutes background values where the mask is false.
pub fn mask_with_background(
    x: &ArrayView2<'_, f64>,
    mask: &CoalitionMask,
    background_instance: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if x.dim() != mask.dims() || x.dim() != background_instance.dim() {
        return Err(ExplainError::Shape(format!(
            "instance {:?}, mask {:?}, background {:?}",
            x.dim(),
            mask.dims(),
            background_instance.dim()
        )));
    }
    let mut out = background_instance.to_owned();
    for ((c, t), &keep) in mask.included().indexed_iter() {
        if keep {
            out[[c, t]] = x[[c, t]];
        }
    }
    Ok(out)
}

/// Row-major flattening: feature (c, t) is bit c*T + t.
fn cell(index: usize, t_len: usize) -> (usize, usize) {
    (index / t_len, index % t_len)
}

/// Exact Shapley values by full coalition enumeration. The coalition value
/// v(S) is the mean of `f` over the instance masked with each background
/// instance in turn; the base value is v(empty) and additivity
/// `phi_0 + sum(phi) = f(X)` holds exactly.
pub fn exact_shap(
    f: &dyn PredictFn,
    x: &ArrayView2<'_, f64>,
    background: &BackgroundSet,
) -> Result<SaliencyMap> {
    let (c, t) = x.dim();
    if background.dims() != (c, t) {
        return Err(ExplainError::Shape(format!(
            "instance {:?} vs background {:?}",
            x.dim(),
            background.dims()
        )));
    }
    let m = c * t;
    if m > EXACT_LIMIT {
        return Err(ExplainError::TooLarge { features: m, max: EXACT_LIMIT });
    }

    // v(S) for every coalition bitmask.
    let n_masks = 1usize << m;
    let values: Vec<f64> = (0..n_masks)
        .into_par_iter()
        .map(|bits| {
            let mut total = 0.0;
            for b in 0..background.len() {
                let mut masked = background.instance(b).to_owned();
                for i in 0..m {
                    if bits >> i & 1 == 1 {
                        let (ci, ti) = cell(i, t);
                        masked[[ci, ti]] = x[[ci, ti]];
                    }
                }
                total += f.predict(&masked);
            }
            total / background.len() as f64
        })
        .collect();

    // Shapley weight by coalition size: 1 / (m * C(m-1, s)).
    let weights: Vec<f64> = (0..m)
        .map(|s| 1.0 / (m as f64 * binomial(m - 1, s) as f64))
        .collect();

    let mut phi = Array2::zeros((c, t));
    for i in 0..m {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for bits in 0..n_masks {
            if bits & bit == 0 {
                let s = bits.count_ones() as usize;
                acc += weights[s] * (values[bits | bit] - values[bits]);
            }
        }
        let (ci, ti) = cell(i, t);
        phi[[ci, ti]] = acc;
    }

    Ok(SaliencyMap {
        phi,
        base_value: values[0],
        model_output: values[n_masks - 1],
        instance_id: String::new(),
        p_used: 0,
        seed: 0,
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut result = 1u64;
    for i in 0..k {
        result = result * (n - i) as u64 / (i + 1) as u64;
    }
    result
}

/// Monte Carlo permutation estimate of the Shapley values.
///
/// Each of the `p` permutations draws one background instance and walks a
/// uniformly random feature order, crediting every feature with the change
/// in model output when it is revealed. Deterministic for a given
/// `(seed, p)`: permutation i derives its own RNG from them, and results are
/// accumulated in permutation order regardless of worker count. With
/// `normalize` the attributions are shifted uniformly so that
/// `phi_0 + sum(phi) = f(X)` exactly.
pub fn sampling_shap(
    f: &dyn PredictFn,
    x: &ArrayView2<'_, f64>,
    background: &BackgroundSet,
    p: usize,
    seed: u64,
    normalize: bool,
) -> Result<SaliencyMap> {
    let (c, t) = x.dim();
    if background.dims() != (c, t) {
        return Err(ExplainError::Shape(format!(
            "instance {:?} vs background {:?}",
            x.dim(),
            background.dims()
        )));
    }
    if p < 1 {
        return Err(ExplainError::InvalidArgument("p must be >= 1".into()));
    }
    let m = c * t;

    let per_permutation: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|perm_index| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(permutation_seed(seed, perm_index as u64));
            let b = rng.random_range(0..background.len());
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut current = background.instance(b).to_owned();
            let mut previous = f.predict(&current);
            let mut contrib = vec![0.0; m];
            for &feature in &order {
                let (ci, ti) = cell(feature, t);
                current[[ci, ti]] = x[[ci, ti]];
                let value = f.predict(&current);
                contrib[feature] = value - previous;
                previous = value;
            }
            contrib
        })
        .collect();

    let mut phi = Array2::zeros((c, t));
    for contrib in &per_permutation {
        for (i, &v) in contrib.iter().enumerate() {
            let (ci, ti) = cell(i, t);
            phi[[ci, ti]] += v;
        }
    }
    phi.mapv_inplace(|v| v / p as f64);

    let base_value = background.mean_prediction(f);
    let model_output = f.predict(&x.to_owned());
    if normalize {
        let residual = model_output - base_value - phi.sum();
        let correction = residual / m as f64;
        phi.mapv_inplace(|v| v + correction);
    }

    Ok(SaliencyMap {
        phi,
        base_value,
        model_output,
        instance_id: String::new(),
        p_used: p,
        seed,
    })
}

fn permutation_seed(seed: u64, index: u64) -> u64 {
    // splitmix-style mixing keeps permutation streams independent.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One saliency map per selected instance, explained against the model's
/// failure probability with the instance's own static features held fixed.
/// Per-instance seeds are `seed XOR instance_index`, so maps are identical
/// for any worker count; a failing instance is skipped and reported rather
/// than aborting the batch.
pub fn batch_explain(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    selection: &[usize],
    background: &BackgroundSet,
    p: usize,
    seed: u64,
    normalize: bool,
) -> (Vec<SaliencyMap>, Vec<(usize, ExplainError)>) {
    let results: Vec<(usize, Result<SaliencyMap>)> = selection
        .par_iter()
        .map(|&n| {
            if n >= dataset.n_instances() {
                return (
                    n,
                    Err(ExplainError::InvalidArgument(format!(
                        "instance index {n} out of range"
                    ))),
                );
            }
            let static_row = dataset.static_row(n);
            let predict = |x: &Array2<f64>| {
                model.predict_proba(x.view(), static_row.as_deref())
            };
            let instance = dataset.instance(n);
            let map = sampling_shap(
                &predict,
                &instance,
                background,
                p,
                seed ^ n as u64,
                normalize,
            )
            .map(|mut m| {
                m.instance_id = dataset.instance_meta()[n].instance_id();
                m
            });
            (n, map)
        })
        .collect();

    let mut maps = Vec::new();
    let mut skipped = Vec::new();
    for (n, result) in results {
        match result {
            Ok(map) => maps.push(map),
            Err(e) => skipped.push((n, e)),
        }
    }
    (maps, skipped)
}
