use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::attribution::{derive_pruned_spec, PrunedFeatureSet};
use prth_core::data::FoldId;
use prth_core::nn::{load_checkpoint, ModelSpec};

use super::{read_json, write_json, Ctx};

#[derive(Debug, Serialize, Deserialize)]
pub struct PruningReport {
    pub coverage_requested: f64,
    pub coverage_achieved: f64,
    pub tau: f64,
    pub kept_channels: Vec<usize>,
    pub derived_spec: ModelSpec,
}

/// Derives the refined model spec from the pruned feature set.
pub fn refine(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let pruned_path = ctx.out_dir.join("prune").join(fold.to_string()).join("pruned_set.json");
    ctx.require(&pruned_path, "prune")?;
    let set: PrunedFeatureSet = read_json(&pruned_path)?;

    let ckpt_path = ctx.out_dir.join("train").join(fold.to_string()).join("model.ckpt");
    ctx.require(&ckpt_path, "train")?;
    let original = load_checkpoint(&ckpt_path).context("loading the checkpoint failed")?.spec;

    let (raw, _) = ctx.windowed()?;
    let derived = derive_pruned_spec(&original, &set, raw.channel_meta())
        .context("deriving the refined spec failed")?;
    ctx.say(
        "refine",
        &format!(
            "{fold}: {:?} ({} params) -> {:?} ({} params)",
            original.variant,
            original.param_count(),
            derived.variant,
            derived.param_count()
        ),
    );

    let (coverage_requested, _) = ctx.config.prune_params();
    let dir = ctx.stage_dir("refine", Some(fold))?;
    write_json(&dir.join("refined_spec.json"), &derived)?;
    write_json(
        &dir.join("pruning_report.json"),
        &PruningReport {
            coverage_requested,
            coverage_achieved: set.coverage,
            tau: set.tau,
            kept_channels: set.kept_channels.clone(),
            derived_spec: derived,
        },
    )?;

    let mut manifest = ctx.manifest("refine", &dir, Some(fold));
    manifest.input(&pruned_path)?;
    manifest.input(&ckpt_path)?;
    manifest.output(&dir.join("refined_spec.json"))?;
    manifest.output(&dir.join("pruning_report.json"))?;
    manifest.write()?;
    Ok(())
}
