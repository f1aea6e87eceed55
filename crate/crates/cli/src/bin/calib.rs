// scratch calibration for acceptance fixtures (not part of the deliverable)
use prth_core::attribution::{derive_pruned_spec, global_aggregate, prune, select_tp};
use prth_core::data::{fold_split, make_windows, normalize, rolling_origin_folds, ChannelKind};
use prth_core::eval::prf1;
use prth_core::explain::{batch_explain, BackgroundSet};
use prth_core::nn::{train, ModelSpec, TrainConfig, Variant};
use prth_core::synth::{generate, SynthConfig};
use rayon::prelude::*;
use std::time::Instant;

struct SeedResult {
    seed: u64,
    val_f1: f64,
    top2: bool,
    share2: f64,
    ws_free_080: bool,
    ws_free_095: bool,
    gentrap_f1: f64,
    refined_f1: f64,
    refined_is_ltrans: bool,
    ratio: f64,
    secs: f64,
}

fn run_seed(seed: u64, gentrap: bool) -> SeedResult {
    let t0 = Instant::now();
    let config = SynthConfig {
        seed,
        n_links: 50,
        n_stations: 5,
        n_days: 200,
        target_failure_rate: 0.003,
        failure_rule: prth_core::synth::FailureRule::default_and_rule(),
        geometry_extent_km: 50.0,
        k_neighbors: 1,
    };
    let out = generate(&config).unwrap();
    let (windowed, _) = make_windows(&out.daily, 4).unwrap();
    let folds = rolling_origin_folds(196, 5).unwrap();
    let fold = &folds[4];
    let (normed, stats) = normalize(&windowed, fold).unwrap();
    let split = fold_split(&normed, fold);
    let spec = if gentrap {
        ModelSpec::gentrap_desk(&normed, 1)
    } else {
        let mut s = ModelSpec::ltrans_desk(&normed);
        s.d_model = 16;
        s
    };
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 64,
        learning_rate: 0.002,
        class_weighting: prth_core::nn::ClassWeighting::InverseFrequency,
        seed: seed ^ 0xABCD,
        early_stop_patience: 60,
    };
    let model = train(&spec, &normed, &split, &stats, &cfg).unwrap();
    let best_val = model.train_log.iter().filter_map(|r| r.val_f1).fold(0.0f64, f64::max);

    let all: Vec<usize> = (0..normed.n_instances()).collect();
    let probs = model.predict_dataset(&normed, &all);
    let tp = select_tp(&probs, normed.labels(), 0.5).unwrap();
    let bg = BackgroundSet::sample(&normed, &split.train, 16, seed).unwrap();
    let (maps, _) = batch_explain(&model, &normed, &tp, &bg, 800, seed ^ 99, true);
    let imp = global_aggregate(&maps, 0).unwrap();
    let mut ranked: Vec<usize> = (0..normed.n_channels()).collect();
    ranked.sort_by(|&a, &b| imp.global[b].abs().total_cmp(&imp.global[a].abs()));
    let trig = &out.ground_truth.relevant_channels;
    let top2 = trig.contains(&ranked[0]) && trig.contains(&ranked[1]);
    let total: f64 = imp.global.iter().map(|v| v.abs()).sum();
    let share2: f64 = trig.iter().map(|&c| imp.global[c].abs()).sum::<f64>() / total;

    let ws_kept = |coverage: f64| {
        let set = prune(&imp, coverage, normed.channel_meta()).unwrap();
        set.kept_channels
            .iter()
            .any(|&c| normed.channel_meta()[c].kind == ChannelKind::Ws)
    };
    let ws_free_080 = !ws_kept(0.8);
    let ws_free_095 = !ws_kept(0.95);

    let (mut gentrap_f1, mut refined_f1, mut refined_is_ltrans, mut ratio) =
        (0.0, 0.0, false, 1.0);
    if gentrap {
        let held: Vec<usize> = split.val.iter().chain(&split.test).copied().collect();
        let labels: Vec<u8> = held.iter().map(|&i| normed.labels()[i]).collect();
        gentrap_f1 = prf1(&model.predict_dataset(&normed, &held), &labels, 0.5).unwrap().f1;

        let set = prune(&imp, 0.8, normed.channel_meta()).unwrap();
        let derived = derive_pruned_spec(&spec, &set, normed.channel_meta()).unwrap();
        refined_is_ltrans = derived.variant == Variant::Ltrans;
        ratio = derived.param_count() as f64 / spec.param_count() as f64;
        let refit = train(&derived, &normed, &split, &stats, &cfg).unwrap();
        refined_f1 = prf1(&refit.predict_dataset(&normed, &held), &labels, 0.5).unwrap().f1;
    }
    SeedResult {
        seed,
        val_f1: best_val,
        top2,
        share2,
        ws_free_080,
        ws_free_095,
        gentrap_f1,
        refined_f1,
        refined_is_ltrans,
        ratio,
        secs: t0.elapsed().as_secs_f64(),
    }
}

fn main() {
    let t0 = Instant::now();
    println!("== LTRANS d16 (criterion 4/5 shape), 8 seeds parallel ==");
    let results: Vec<SeedResult> = (0..8u64).into_par_iter().map(|s| run_seed(s, false)).collect();
    for r in &results {
        println!(
            "seed {}: val {:.3} top2 {} share2 {:.4} wsfree80 {} wsfree95 {} [{:.0}s]",
            r.seed, r.val_f1, r.top2, r.share2, r.ws_free_080, r.ws_free_095, r.secs
        );
    }
    let val_ok = results.iter().filter(|r| r.val_f1 >= 0.8).count();
    println!("val_ok {val_ok}/8, wall {:.0}s", t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    println!("== GENTRAP (criterion 6), 5 seeds parallel ==");
    let results: Vec<SeedResult> =
        (100..105u64).into_par_iter().map(|s| run_seed(s, true)).collect();
    for r in &results {
        println!(
            "seed {}: val {:.3} share2 {:.4} wsfree80 {} g_f1 {:.3} r_f1 {:.3} ltrans {} ratio {:.3} [{:.0}s]",
            r.seed, r.val_f1, r.share2, r.ws_free_080, r.gentrap_f1, r.refined_f1,
            r.refined_is_ltrans, r.ratio, r.secs
        );
    }
    println!(
        "gentrap wall {:.0}s, total {:.0}s",
        t1.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64()
    );
}
