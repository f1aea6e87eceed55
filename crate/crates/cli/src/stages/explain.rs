use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::attribution::select_tp;
use prth_core::data::{apply_normalization, fold_split, FoldId};
use prth_core::explain::{batch_explain, write_saliency_store, BackgroundSet};
use prth_core::nn::load_checkpoint;

use super::{write_json, Ctx};

#[derive(Debug, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub instance_ids: Vec<String>,
}

/// Explains the fold's true-positive test predictions with the sampling
/// estimator and writes the saliency store.
pub fn explain(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let ckpt_path = ctx.out_dir.join("train").join(fold.to_string()).join("model.ckpt");
    ctx.require(&ckpt_path, "train")?;
    let model = load_checkpoint(&ckpt_path).context("loading the checkpoint failed")?;

    let (raw, extent) = ctx.windowed()?;
    let fold_spec = ctx.fold_spec(extent, fold)?;
    let normed = apply_normalization(&raw, &model.norm_stats)?;
    let split = fold_split(&normed, &fold_spec);

    // True positives on the fold's test split.
    let probs = model.predict_dataset(&normed, &split.test);
    let labels: Vec<u8> = split.test.iter().map(|&n| normed.labels()[n]).collect();
    let tp_local = select_tp(&probs, &labels, 0.5)?;
    let selection: Vec<usize> = tp_local.iter().map(|&i| split.test[i]).collect();
    if selection.is_empty() {
        ctx.say("explain", "warning: no true positives in the test split");
    }

    let (p, seed, normalize, background_size) = ctx.config.explain_params()?;
    let background = BackgroundSet::sample(&normed, &split.train, background_size, seed)
        .context("sampling the background set failed")?;
    let (maps, skipped) =
        batch_explain(&model, &normed, &selection, &background, p, seed, normalize);
    for (n, err) in &skipped {
        ctx.say("explain", &format!("warning: instance {n} skipped: {err}"));
    }
    ctx.say(
        "explain",
        &format!("{fold}: {} saliency maps (P = {p}, {} skipped)", maps.len(), skipped.len()),
    );

    let dir = ctx.stage_dir("explain", Some(fold))?;
    let channel_names: Vec<String> =
        normed.channel_meta().iter().map(|m| m.name.clone()).collect();
    write_saliency_store(&dir, &maps, &channel_names)
        .context("writing the saliency store failed")?;
    let ids: Vec<String> = maps.iter().map(|m| m.instance_id.clone()).collect();
    let kept: Vec<usize> =
        selection.iter().copied().filter(|n| !skipped.iter().any(|(s, _)| s == n)).collect();
    write_json(&dir.join("selected.json"), &Selection { indices: kept, instance_ids: ids })?;

    let mut manifest = ctx.manifest("explain", &dir, Some(fold));
    manifest.input(&ckpt_path)?;
    manifest.seed("explain", seed);
    for name in ["saliency.csv", "meta.json", "selected.json"] {
        manifest.output(&dir.join(name))?;
    }
    if dir.join("saliency.prth").exists() {
        manifest.output(&dir.join("saliency.prth"))?;
    }
    manifest.write()?;
    Ok(())
}
