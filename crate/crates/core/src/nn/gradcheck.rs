//! Central finite-difference validation of the hand-written backprop.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ChannelMeta, InstanceMeta, TimeSeriesDataset};

use super::params::NetParams;
use super::spec::ModelSpec;
use super::train::batch_gradients;
use super::{NnError, Result};

const STEP: f64 = 1e-4;
const PROBED_PARAMETERS: usize = 50;
const MAX_PARAMETERS: usize = 2000;

/// Compares analytic gradients of the summed cross-entropy on a small random
/// batch against central finite differences on at least 50 randomly chosen
/// parameters (all of them for tiny models). Returns the maximum relative
/// error.
pub fn gradient_check(spec: &ModelSpec, seed: u64) -> Result<f64> {
    spec.validate()?;
    if spec.param_count() > MAX_PARAMETERS {
        return Err(NnError::InvalidSpec(format!(
            "gradient_check wants small specs (<= {MAX_PARAMETERS} parameters), got {}",
            spec.param_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.input_channels.iter().copied().max().expect("validated") + 1;
    let t = spec.t_len;
    let batch = 6;

    let mut values = Array3::zeros((batch, c, t));
    for v in values.iter_mut() {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    let labels: Vec<u8> = (0..batch).map(|i| (i % 2) as u8).collect();
    let static_features = (spec.static_dim > 0).then(|| {
        Array2::from_shape_fn((batch, spec.static_dim), |_| rng.random::<f64>() - 0.5)
    });
    let meta: Vec<ChannelMeta> = (0..c)
        .map(|i| ChannelMeta::new(format!("c{i}"), crate::data::ChannelKind::RlKpi, ""))
        .collect();
    let inst: Vec<InstanceMeta> = (0..batch)
        .map(|i| InstanceMeta {
            link_id: format!("L{i}"),
            window_end_date: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        })
        .collect();
    let static_names =
        (0..static_features.as_ref().map_or(0, |s| s.ncols())).map(|i| format!("s{i}")).collect();
    let dataset = TimeSeriesDataset::new(values, labels, meta, inst, static_features, static_names)
        .map_err(|e| NnError::Training(e.to_string()))?;
    let indices: Vec<usize> = (0..batch).collect();

    let mut params = NetParams::init(spec, seed.wrapping_add(1));
    let (_, grads) = batch_gradients(spec, &params, &dataset, &indices, (1.0, 1.0));
    let grad_flat: Vec<f64> =
        grads.tensors().iter().flat_map(|(_, _, d)| d.iter().copied()).collect();
    let total = grad_flat.len();

    let probes: Vec<usize> = if total <= PROBED_PARAMETERS {
        (0..total).collect()
    } else {
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < PROBED_PARAMETERS {
            chosen.insert(rng.random_range(0..total));
        }
        chosen.into_iter().collect()
    };

    let loss_at = |params: &NetParams| -> f64 {
        batch_gradients(spec, params, &dataset, &indices, (1.0, 1.0)).0
    };

    let mut max_rel = 0.0f64;
    for flat_index in probes {
        perturb(&mut params, flat_index, STEP);
        let loss_plus = loss_at(&params);
        perturb(&mut params, flat_index, -2.0 * STEP);
        let loss_minus = loss_at(&params);
        perturb(&mut params, flat_index, STEP);

        let numeric = (loss_plus - loss_minus) / (2.0 * STEP);
        let analytic = grad_flat[flat_index];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

fn perturb(params: &mut NetParams, flat_index: usize, delta: f64) {
    let mut offset = 0;
    for (_, data) in params.tensors_mut() {
        if flat_index < offset + data.len() {
            data[flat_index - offset] += delta;
            return;
        }
        offset += data.len();
    }
    panic!("flat index {flat_index} out of range");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChannelKind;
    use crate::nn::spec::Variant;

    fn toy_kinds() -> (Vec<usize>, Vec<ChannelKind>) {
        let kinds = vec![
            ChannelKind::RlKpi,
            ChannelKind::RlKpi,
            ChannelKind::Ws,
            ChannelKind::Ws,
            ChannelKind::Positional,
        ];
        ((0..5).collect(), kinds)
    }

    pub(crate) fn toy_spec(variant: Variant) -> ModelSpec {
        let (input_channels, channel_kinds) = toy_kinds();
        let is_t = variant.is_transformer();
        ModelSpec {
            variant,
            d_model: if is_t { 4 } else { 0 },
            n_heads: if is_t { 2 } else { 0 },
            n_encoder_blocks: if is_t { 1 } else { 0 },
            lstm_layer_sizes: if is_t { vec![] } else { vec![6, 4] },
            k_stations: if variant == Variant::Gentrap { 2 } else { 1 },
            use_static_branch: matches!(variant, Variant::Gentrap | Variant::LstmPlus),
            input_channels,
            channel_kinds,
            static_dim: if matches!(variant, Variant::Gentrap | Variant::LstmPlus) {
                3
            } else {
                0
            },
            t_len: 3,
        }
    }

    #[test]
    fn ltrans_gradients_match() {
        let err = gradient_check(&toy_spec(Variant::Ltrans), 1).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn lstm_gradients_match() {
        let err = gradient_check(&toy_spec(Variant::LstmPlus), 2).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn gentrap_gradients_match() {
        let err = gradient_check(&toy_spec(Variant::Gentrap), 3).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn large_specs_are_refused() {
        let mut spec = toy_spec(Variant::Ltrans);
        spec.d_model = 64;
        spec.n_encoder_blocks = 4;
        assert!(gradient_check(&spec, 0).is_err());
    }
}
