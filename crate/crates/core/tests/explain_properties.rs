//! Shapley estimator properties: symmetry, dummy features, convergence in P,
//! additivity behavior, and worker-count independence.

use ndarray::{array, Array2, Array3};
use prth_core::explain::{batch_explain, exact_shap, sampling_shap, BackgroundSet};

fn background(instances: Vec<Array2<f64>>) -> BackgroundSet {
    let (c, t) = instances[0].dim();
    let mut b = Array3::zeros((instances.len(), c, t));
    for (i, inst) in instances.iter().enumerate() {
        b.index_axis_mut(ndarray::Axis(0), i).assign(inst);
    }
    BackgroundSet::new(b).unwrap()
}

#[test]
fn symmetric_features_get_equal_credit() {
    // f is symmetric in the two features and the background treats them
    // symmetrically, so their Shapley values must agree to 1e-12.
    let f = |x: &Array2<f64>| (x[[0, 0]] + x[[0, 1]] + x[[0, 0]] * x[[0, 1]]).tanh();
    let x = array![[0.8, 0.8]];
    let bg = background(vec![array![[0.1, 0.1]], array![[-0.2, -0.2]]]);
    let map = exact_shap(&f, &x.view(), &bg).unwrap();
    assert!((map.phi[[0, 0]] - map.phi[[0, 1]]).abs() < 1e-12);
}

#[test]
fn dummy_feature_gets_zero_exactly_and_nearly() {
    // Feature (1, 0) never enters the model.
    let f = |x: &Array2<f64>| (x[[0, 0]] * 1.3 - 0.4 * x[[0, 1]]).tanh();
    let x = array![[1.0, -0.7], [0.9, 0.3]];
    let bg = background(vec![array![[0.2, 0.1], [-0.5, 0.8]]]);

    let exact = exact_shap(&f, &x.view(), &bg).unwrap();
    assert!(exact.phi[[1, 0]].abs() < 1e-14);
    assert!(exact.phi[[1, 1]].abs() < 1e-14);

    // Monte Carlo: the dummy's attribution is zero up to estimator noise.
    // With one background instance each marginal contribution of a dummy is
    // exactly zero, so use several backgrounds to exercise the sampling and
    // bound by 3x the empirical standard error over repeats.
    let bg4 = background(vec![
        array![[0.2, 0.1], [-0.5, 0.8]],
        array![[0.0, -0.1], [0.5, -0.8]],
        array![[0.4, 0.3], [0.1, 0.2]],
        array![[-0.3, 0.2], [0.9, -0.1]],
    ]);
    let p = 2000;
    let estimates: Vec<f64> = (0..10)
        .map(|seed| sampling_shap(&f, &x.view(), &bg4, p, seed, false).unwrap().phi[[1, 0]])
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let var = estimates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (estimates.len() - 1) as f64;
    let se = (var / estimates.len() as f64).sqrt();
    assert!(
        mean.abs() < 3.0 * se.max(1e-12),
        "dummy attribution {mean} exceeds 3 x SE {se}"
    );
}

#[test]
fn sampling_error_shrinks_with_p() {
    let f = |x: &Array2<f64>| {
        (0.9 * x[[0, 0]] * x[[1, 0]] - 0.6 * x[[0, 1]] + 0.3 * x[[1, 1]] * x[[0, 0]]).tanh()
    };
    let x = array![[1.2, -0.4], [0.7, 1.1]];
    let bg = background(vec![
        array![[0.0, 0.0], [0.0, 0.0]],
        array![[0.3, -0.2], [0.5, 0.1]],
    ]);
    let exact = exact_shap(&f, &x.view(), &bg).unwrap();

    // Mean absolute deviation from the oracle, averaged over seeds to smooth
    // estimator noise, must decrease as P grows by decades.
    let mad_at = |p: usize| -> f64 {
        (0..5)
            .map(|seed| {
                let s = sampling_shap(&f, &x.view(), &bg, p, seed, false).unwrap();
                (&s.phi - &exact.phi).mapv(f64::abs).mean().unwrap()
            })
            .sum::<f64>()
            / 5.0
    };
    let (e100, e1k, e10k) = (mad_at(100), mad_at(1000), mad_at(10_000));
    assert!(e1k < e100, "{e100} -> {e1k}");
    assert!(e10k < e1k, "{e1k} -> {e10k}");
}

#[test]
fn unnormalized_residual_shrinks_with_p() {
    let f = |x: &Array2<f64>| (x.sum() * 0.4 + x[[0, 0]] * x[[1, 1]]).tanh();
    let x = array![[1.0, 0.5], [-0.3, 0.8]];
    let bg = background(vec![
        array![[0.1, 0.0], [0.2, -0.1]],
        array![[-0.2, 0.3], [0.0, 0.4]],
    ]);
    let mean_abs_residual = |p: usize| -> f64 {
        (0..8)
            .map(|seed| {
                sampling_shap(&f, &x.view(), &bg, p, seed, false)
                    .unwrap()
                    .additivity_residual()
                    .abs()
            })
            .sum::<f64>()
            / 8.0
    };
    assert!(mean_abs_residual(5000) < mean_abs_residual(50));
}

#[test]
fn worker_count_does_not_change_maps() {
    use prth_core::data::{fold_split, make_windows, normalize, rolling_origin_folds};
    use prth_core::nn::{train, ModelSpec, TrainConfig};
    use prth_core::synth::{generate, SynthConfig};

    let config = SynthConfig {
        n_links: 12,
        n_days: 80,
        target_failure_rate: 0.02,
        ..SynthConfig::desk_default(5)
    };
    let out = generate(&config).unwrap();
    let (windowed, _) = make_windows(&out.daily, 4).unwrap();
    let folds = rolling_origin_folds(76, 5).unwrap();
    let (normed, stats) = normalize(&windowed, &folds[4]).unwrap();
    let split = fold_split(&normed, &folds[4]);
    let spec = ModelSpec::ltrans_desk(&normed);
    let cfg = TrainConfig { epochs: 8, ..TrainConfig::desk_default(2) };
    let model = train(&spec, &normed, &split, &stats, &cfg).unwrap();
    let background = BackgroundSet::sample(&normed, &split.train, 8, 1).unwrap();
    let selection: Vec<usize> = (0..6).collect();

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let run = |pool: &rayon::ThreadPool| {
        pool.install(|| batch_explain(&model, &normed, &selection, &background, 32, 7, true))
    };
    let (maps_1, skipped_1) = run(&single);
    let (maps_4, skipped_4) = run(&quad);
    assert!(skipped_1.is_empty() && skipped_4.is_empty());
    assert_eq!(maps_1.len(), maps_4.len());
    for (a, b) in maps_1.iter().zip(&maps_4) {
        assert_eq!(a.instance_id, b.instance_id);
        assert_eq!(a.phi, b.phi, "maps differ between 1 and 4 workers");
        assert_eq!(a.base_value.to_bits(), b.base_value.to_bits());
    }
}

#[test]
fn batch_explain_isolates_failures_and_reports_ids() {
    use prth_core::data::make_windows;
    use prth_core::nn::{train, ModelSpec, TrainConfig};
    use prth_core::synth::{generate, SynthConfig};

    let config = SynthConfig {
        n_links: 6,
        n_days: 40,
        target_failure_rate: 0.05,
        ..SynthConfig::desk_default(3)
    };
    let out = generate(&config).unwrap();
    let (windowed, _) = make_windows(&out.daily, 4).unwrap();
    let split = prth_core::data::SplitIndices {
        train: (0..windowed.n_instances()).collect(),
        val: vec![],
        test: vec![],
    };
    let stats = prth_core::data::NormStats {
        mean: vec![0.0; windowed.n_channels()],
        std: vec![1.0; windowed.n_channels()],
    };
    let spec = ModelSpec::ltrans_desk(&windowed);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::desk_default(1) };
    let model = train(&spec, &windowed, &split, &stats, &cfg).unwrap();
    let background = BackgroundSet::sample(&windowed, &split.train, 4, 0).unwrap();

    // One out-of-range index: reported, not fatal.
    let selection = vec![0, 1, 999_999];
    let (maps, skipped) = batch_explain(&model, &windowed, &selection, &background, 8, 0, true);
    assert_eq!(maps.len(), 2);
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].0, 999_999);
    assert_eq!(maps[0].instance_id, windowed.instance_meta()[0].instance_id());

    // Empty selection: empty result.
    let (maps, skipped) = batch_explain(&model, &windowed, &[], &background, 8, 0, true);
    assert!(maps.is_empty() && skipped.is_empty());
}
