use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::attribution::prune;
use prth_core::data::FoldId;

use super::aggregate::ImportanceFile;
use super::{read_json, write_json, Ctx};

/// Per-channel annotation emitted to importance.json.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelRow {
    pub name: String,
    pub psi: f64,
    pub abs_share: f64,
    pub kept: bool,
    pub exempt: bool,
}

/// Applies coverage pruning to the aggregated importance.
pub fn prune_stage(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let importance_path =
        ctx.out_dir.join("aggregate").join(fold.to_string()).join("channel_importance.json");
    ctx.require(&importance_path, "aggregate")?;
    let file: ImportanceFile = read_json(&importance_path)?;

    let (raw, _) = ctx.windowed()?;
    let (coverage, _) = ctx.config.prune_params();
    let set = prune(&file.importance, coverage, raw.channel_meta())
        .context("pruning failed")?;
    ctx.say(
        "prune",
        &format!(
            "{fold}: kept {} of {} channels (coverage {:.4}, tau {:.6})",
            set.kept_channels.len(),
            raw.n_channels(),
            set.coverage,
            set.tau
        ),
    );

    let total: f64 = file.importance.global.iter().map(|v| v.abs()).sum();
    let rows: Vec<ChannelRow> = file
        .importance
        .global
        .iter()
        .enumerate()
        .map(|(c, &psi)| ChannelRow {
            name: file.channel_names[c].clone(),
            psi,
            abs_share: if total > 0.0 { psi.abs() / total } else { 0.0 },
            kept: set.kept_channels.contains(&c),
            exempt: set.exempt_channels.contains(&c),
        })
        .collect();

    let dir = ctx.stage_dir("prune", Some(fold))?;
    write_json(&dir.join("importance.json"), &rows)?;
    write_json(&dir.join("pruned_set.json"), &set)?;

    let mut manifest = ctx.manifest("prune", &dir, Some(fold));
    manifest.input(&importance_path)?;
    manifest.output(&dir.join("importance.json"))?;
    manifest.output(&dir.join("pruned_set.json"))?;
    manifest.write()?;
    Ok(())
}
