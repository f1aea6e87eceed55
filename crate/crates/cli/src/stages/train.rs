use anyhow::{Context, Result};

use prth_core::data::FoldId;
use prth_core::nn::{save_checkpoint, train, ModelSpec};

use super::{read_json, write_json, Ctx};

/// Trains the configured model (or the refined spec from the refine stage)
/// on one fold and writes the checkpoint.
pub fn train_stage(ctx: &Ctx, fold: FoldId, refined: bool) -> Result<()> {
    let stage = if refined { "retrain" } else { "train" };
    let (normed, stats, split, _) = ctx.fold_data(fold)?;

    let spec: ModelSpec = if refined {
        let path = ctx.out_dir.join("refine").join(fold.to_string()).join("refined_spec.json");
        ctx.require(&path, "refine")?;
        read_json(&path)?
    } else {
        ctx.config.model_spec(&normed)?
    };
    let cfg = ctx.config.train_config()?;

    ctx.say(
        stage,
        &format!(
            "{fold}: {:?} with {} parameters on {} train / {} val instances",
            spec.variant,
            spec.param_count(),
            split.train.len(),
            split.val.len()
        ),
    );
    let model =
        train(&spec, &normed, &split, &stats, &cfg).context("training failed")?;
    if let Some(last) = model.train_log.last() {
        ctx.say(
            stage,
            &format!(
                "stopped at epoch {} (loss {:.5}, val F1 {:?})",
                last.epoch, last.train_loss, last.val_f1
            ),
        );
    }

    let dir = ctx.stage_dir(stage, Some(fold))?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&model, &ckpt).context("writing the checkpoint failed")?;
    write_json(&dir.join("train_log.json"), &model.train_log)?;

    let mut manifest = ctx.manifest(stage, &dir, Some(fold));
    for input in ctx.data_files()? {
        if input.exists() {
            manifest.input(&input)?;
        }
    }
    manifest.seed("train", cfg.seed);
    manifest.output(&ckpt)?;
    manifest.output(&dir.join("train_log.json"))?;
    manifest.write()?;
    Ok(())
}
