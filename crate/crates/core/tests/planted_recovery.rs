//! End-to-end sanity on a small planted-rule fixture: generate, window,
//! normalize, train, explain, aggregate, prune. The full-scale version of
//! this flow lives in the acceptance suite; this one keeps the feedback loop
//! fast.

use prth_core::attribution::{global_aggregate, prune, select_tp};
use prth_core::data::{fold_split, make_windows, normalize, rolling_origin_folds};
use prth_core::explain::{batch_explain, BackgroundSet};
use prth_core::nn::{train, ModelSpec, TrainConfig};
use prth_core::synth::{generate, SynthConfig};

#[test]
fn planted_triggers_dominate_importance() {
    let config = SynthConfig {
        n_links: 30,
        n_days: 120,
        target_failure_rate: 0.01,
        ..SynthConfig::desk_default(41)
    };
    let out = generate(&config).unwrap();
    let (windowed, _) = make_windows(&out.daily, 4).unwrap();

    let extent = 120 - 4; // distinct window-end days
    let folds = rolling_origin_folds(extent, 5).unwrap();
    let fold = &folds[4];
    let (normed, _stats) = normalize(&windowed, fold).unwrap();
    let split = fold_split(&normed, fold);

    let spec = ModelSpec::ltrans_desk(&normed);
    let cfg = TrainConfig {
        epochs: 60,
        early_stop_patience: 10,
        ..TrainConfig::desk_default(11)
    };
    let model = train(&spec, &normed, &split, &_stats, &cfg).unwrap();

    // Explain true positives over the whole windowed set; the fixture is
    // small enough that the test split alone may hold no failures.
    let all: Vec<usize> = (0..normed.n_instances()).collect();
    let probs = model.predict_dataset(&normed, &all);
    let labels = normed.labels().to_vec();
    let tp = select_tp(&probs, &labels, 0.5).unwrap();
    assert!(!tp.is_empty(), "model found no true positives");

    let background = BackgroundSet::sample(&normed, &split.train, 12, 3).unwrap();
    let (maps, skipped) = batch_explain(&model, &normed, &tp, &background, 64, 5, true);
    assert!(skipped.is_empty());

    let importance = global_aggregate(&maps, 0).unwrap();
    let mut ranked: Vec<usize> = (0..normed.n_channels()).collect();
    ranked.sort_by(|&a, &b| {
        importance.global[b].abs().total_cmp(&importance.global[a].abs())
    });

    let triggers = &out.ground_truth.relevant_channels;
    assert!(
        triggers.contains(&ranked[0]) && triggers.contains(&ranked[1]),
        "top-2 channels {:?} are not the planted triggers {triggers:?}",
        &ranked[..2]
    );

    let pruned = prune(&importance, 0.95, normed.channel_meta()).unwrap();
    for trigger in triggers {
        assert!(pruned.kept_channels.contains(trigger));
    }
}

#[test]
fn shuffled_triggers_destroy_predictability() {
    // Label-leakage check: permuting trigger-channel values across instances
    // must leave a model trained on the shuffled data unable to beat F1 0.2
    // on a balanced slice.
    use ndarray::Array3;
    use prth_core::data::TimeSeriesDataset;
    use prth_core::nn::ClassWeighting;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let config = SynthConfig {
        n_links: 40,
        n_days: 150,
        target_failure_rate: 0.03,
        ..SynthConfig::desk_default(17)
    };
    let out = generate(&config).unwrap();
    let (windowed, _) = make_windows(&out.daily, 4).unwrap();

    // Shuffle each trigger channel's values across instances.
    let mut values: Array3<f64> = windowed.values().clone();
    let n = windowed.n_instances();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for &c in &out.ground_truth.relevant_channels {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let original = values.clone();
        for (dst, &src) in order.iter().enumerate() {
            for t in 0..windowed.t_len() {
                values[[dst, c, t]] = original[[src, c, t]];
            }
        }
    }
    let shuffled = TimeSeriesDataset::new(
        values,
        windowed.labels().to_vec(),
        windowed.channel_meta().to_vec(),
        windowed.instance_meta().to_vec(),
        windowed.static_features().cloned(),
        windowed.static_names().to_vec(),
    )
    .unwrap();

    let folds = rolling_origin_folds(146, 5).unwrap();
    let fold = &folds[4];
    let (normed, stats) = normalize(&shuffled, fold).unwrap();
    let split = fold_split(&normed, fold);

    let spec = ModelSpec::ltrans_desk(&normed);
    let cfg = TrainConfig {
        epochs: 30,
        class_weighting: ClassWeighting::None,
        early_stop_patience: 0,
        ..TrainConfig::desk_default(23)
    };
    let model = train(&spec, &normed, &split, &stats, &cfg).unwrap();

    // Balanced slice over held-out instances: every val/test positive plus
    // an equal count of negatives. Training rows are excluded so that pure
    // memorization cannot score.
    let held_out: Vec<usize> = split.val.iter().chain(&split.test).copied().collect();
    let positives: Vec<usize> =
        held_out.iter().copied().filter(|&i| normed.labels()[i] == 1).collect();
    let negatives: Vec<usize> = held_out
        .iter()
        .copied()
        .filter(|&i| normed.labels()[i] == 0)
        .take(positives.len())
        .collect();
    assert!(!positives.is_empty(), "held-out slice has no positives");
    let slice: Vec<usize> = positives.iter().chain(&negatives).copied().collect();
    let probs = model.predict_dataset(&normed, &slice);
    let labels: Vec<u8> = slice.iter().map(|&i| normed.labels()[i]).collect();
    let f1 = prth_core::eval::prf1(&probs, &labels, 0.5).unwrap().f1;
    assert!(f1 <= 0.2, "shuffled data still predictable: F1 = {f1}");
}
