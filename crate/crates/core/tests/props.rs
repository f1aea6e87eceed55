//! Property tests over the data protocol and the model surface.

use chrono::NaiveDate;
use ndarray::Array3;
use proptest::prelude::*;
use prth_core::data::{
    fold_split, make_windows, normalize, rolling_origin_folds, ChannelKind, ChannelMeta,
    DailyDataset, InstanceMeta, LinkDaily, TimeSeriesDataset,
};
use prth_core::nn::{ModelSpec, NetParams, TrainedModel};

fn daily(n_links: usize, days: usize, seed: u64) -> DailyDataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let links = (0..n_links)
        .map(|li| {
            let values = ndarray::Array2::from_shape_fn((2, days), |_| rng.random::<f64>());
            LinkDaily {
                link_id: format!("L{li}"),
                dates: (0..days)
                    .map(|d| {
                        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
                            + chrono::Duration::days(d as i64)
                    })
                    .collect(),
                values,
                failures: (0..days).map(|d| u8::from(rng.random::<f64>() < 0.2 && d > 0)).collect(),
            }
        })
        .collect();
    DailyDataset {
        links,
        channel_meta: vec![
            ChannelMeta::new("a", ChannelKind::RlKpi, ""),
            ChannelMeta::new("b", ChannelKind::RlKpi, ""),
        ],
        static_features: None,
        static_names: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_and_are_deterministic(extent in 50usize..2000) {
        let folds = rolling_origin_folds(extent, 5).unwrap();
        prop_assert_eq!(folds.clone(), rolling_origin_folds(extent, 5).unwrap());
        prop_assert_eq!(folds[4].extent(), extent);
        for f in &folds {
            prop_assert_eq!(f.train_range.end, f.val_range.start);
            prop_assert_eq!(f.val_range.end, f.test_range.start);
            prop_assert!(!f.test_range.is_empty());
            prop_assert!(!f.train_range.is_empty());
            // 70/20/10 with floor and remainder-to-test.
            let e = f.extent();
            prop_assert_eq!(f.train_range.len(), e * 7 / 10);
            prop_assert_eq!(f.val_range.len(), e * 2 / 10);
        }
        for w in folds.windows(2) {
            prop_assert_eq!(w[0].extent(), w[1].extent() * 9 / 10);
        }
    }

    #[test]
    fn window_labels_come_from_after_the_window(
        days in 6usize..40,
        n_days in 1usize..5,
        seed in 0u64..1000,
    ) {
        let d = daily(2, days, seed);
        let (ds, _) = make_windows(&d, n_days).unwrap();
        // The label day is strictly after the window end: the window-end
        // date plus one day must exist in the link's history and its failure
        // flag must equal the instance label.
        for (n, meta) in ds.instance_meta().iter().enumerate() {
            let link = d.links.iter().find(|l| l.link_id == meta.link_id).unwrap();
            let end_pos = link.dates.iter().position(|&x| x == meta.window_end_date).unwrap();
            prop_assert!(end_pos + 1 < link.dates.len());
            prop_assert_eq!(ds.labels()[n], link.failures[end_pos + 1]);
        }
    }

    #[test]
    fn normalize_then_denormalize_is_identity(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let values = Array3::from_shape_fn((n, 3, 4), |_| rng.random::<f64>() * 20.0 - 10.0);
        let meta: Vec<ChannelMeta> =
            (0..3).map(|i| ChannelMeta::new(format!("c{i}"), ChannelKind::RlKpi, "")).collect();
        let inst: Vec<InstanceMeta> = (0..n)
            .map(|i| InstanceMeta {
                link_id: "L".into(),
                window_end_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
                    + chrono::Duration::days(i as i64),
            })
            .collect();
        let ds = TimeSeriesDataset::new(values, vec![0; n], meta, inst, None, vec![]).unwrap();
        let folds = rolling_origin_folds(n, 1).unwrap();
        let (normed, stats) = normalize(&ds, &folds[0]).unwrap();
        let back = prth_core::data::denormalize(&normed, &stats).unwrap();
        for (a, b) in ds.values().iter().zip(back.values().iter()) {
            let rel = (a - b).abs() / a.abs().max(1.0);
            prop_assert!(rel < 1e-6);
        }
        // Train/val/test membership partitions the retained instances.
        let split = fold_split(&ds, &folds[0]);
        prop_assert_eq!(split.train.len() + split.val.len() + split.test.len(), n);
    }

    #[test]
    fn batch_prediction_is_permutation_equivariant(seed in 0u64..200) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let values = Array3::from_shape_fn((n, 3, 4), |_| rng.random::<f64>() - 0.5);
        let meta: Vec<ChannelMeta> =
            (0..3).map(|i| ChannelMeta::new(format!("c{i}"), ChannelKind::RlKpi, "")).collect();
        let inst: Vec<InstanceMeta> = (0..n)
            .map(|i| InstanceMeta {
                link_id: format!("L{i}"),
                window_end_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            })
            .collect();
        let ds = TimeSeriesDataset::new(values, vec![0; n], meta, inst, None, vec![]).unwrap();
        let spec = ModelSpec::ltrans_desk(&ds);
        let model = TrainedModel::new(
            spec.clone(),
            NetParams::init(&spec, seed),
            prth_core::data::NormStats { mean: vec![0.0; 3], std: vec![1.0; 3] },
            vec![],
            seed,
        );

        let forward: Vec<usize> = (0..n).collect();
        let mut reversed = forward.clone();
        reversed.reverse();
        let p_forward = model.predict_dataset(&ds, &forward);
        let p_reversed = model.predict_dataset(&ds, &reversed);
        for i in 0..n {
            prop_assert_eq!(p_forward[i].to_bits(), p_reversed[n - 1 - i].to_bits());
        }
    }
}
