use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::attribution::{global_aggregate, ChannelImportance};
use prth_core::data::FoldId;
use prth_core::explain::read_saliency_store;

use super::{write_json, Ctx};

#[derive(Debug, Serialize, Deserialize)]
pub struct ImportanceFile {
    pub channel_names: Vec<String>,
    pub importance: ChannelImportance,
}

/// Aggregates the fold's saliency maps into global channel importance.
pub fn aggregate(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let explain_dir = ctx.out_dir.join("explain").join(fold.to_string());
    ctx.require(&explain_dir.join("saliency.csv"), "explain")?;
    ctx.require(&explain_dir.join("meta.json"), "explain")?;

    let (raw, _) = ctx.windowed()?;
    let channel_names: Vec<String> =
        raw.channel_meta().iter().map(|m| m.name.clone()).collect();
    let maps = read_saliency_store(&explain_dir, &channel_names)
        .context("reading the saliency store failed")?;

    let (_, alpha) = ctx.config.prune_params();
    let importance =
        global_aggregate(&maps, alpha).context("aggregating saliency maps failed")?;
    ctx.say(
        "aggregate",
        &format!("{fold}: global importance over {} maps (alpha = {alpha})", maps.len()),
    );

    let dir = ctx.stage_dir("aggregate", Some(fold))?;
    write_json(&dir.join("channel_importance.json"), &ImportanceFile { channel_names, importance })?;

    let mut manifest = ctx.manifest("aggregate", &dir, Some(fold));
    manifest.input(&explain_dir.join("saliency.csv"))?;
    manifest.input(&explain_dir.join("meta.json"))?;
    manifest.output(&dir.join("channel_importance.json"))?;
    manifest.write()?;
    Ok(())
}
