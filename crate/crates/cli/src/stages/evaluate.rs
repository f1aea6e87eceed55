use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::data::{apply_normalization, fold_split, FoldId};
use prth_core::eval::{prf1, ClassificationReport};
use prth_core::nn::{load_checkpoint, TrainedModel};

use super::{write_json, Ctx};

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub fold: String,
    pub reports: Vec<ThresholdReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub report: ClassificationReport,
}

fn evaluate_model(
    ctx: &Ctx,
    model: &TrainedModel,
    variant_label: &str,
    fold: FoldId,
    thresholds: &[f64],
) -> Result<Vec<ThresholdReport>> {
    let (raw, extent) = ctx.windowed()?;
    let fold_spec = ctx.fold_spec(extent, fold)?;
    let normed = apply_normalization(&raw, &model.norm_stats)?;
    let split = fold_split(&normed, &fold_spec);
    let probs = model.predict_dataset(&normed, &split.test);
    let labels: Vec<u8> = split.test.iter().map(|&n| normed.labels()[n]).collect();
    thresholds
        .iter()
        .map(|&t| {
            let mut report = prf1(&probs, &labels, t).context("metric computation failed")?;
            report.fold_id = Some(fold);
            report.model_variant = Some(variant_label.to_string());
            Ok(ThresholdReport { threshold: t, report })
        })
        .collect()
}

/// Test-split metrics for the trained model and, when present, the retrained
/// refined model.
pub fn evaluate(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let ckpt = ctx.out_dir.join("train").join(fold.to_string()).join("model.ckpt");
    ctx.require(&ckpt, "train")?;
    let (_, thresholds) = ctx.config.eval_params()?;

    let mut reports = Vec::new();
    let model = load_checkpoint(&ckpt)?;
    let label = format!("{:?}", model.spec.variant).to_lowercase();
    reports.extend(evaluate_model(ctx, &model, &label, fold, &thresholds)?);

    let refined_ckpt = ctx.out_dir.join("retrain").join(fold.to_string()).join("model.ckpt");
    if refined_ckpt.exists() {
        let refined = load_checkpoint(&refined_ckpt)?;
        let label = format!("{:?}_refined", refined.spec.variant).to_lowercase();
        reports.extend(evaluate_model(ctx, &refined, &label, fold, &thresholds)?);
    }

    for tr in &reports {
        ctx.say(
            "evaluate",
            &format!(
                "{fold} {} @{}: P {:.4} R {:.4} F1 {:.4}",
                tr.report.model_variant.as_deref().unwrap_or("?"),
                tr.threshold,
                tr.report.precision,
                tr.report.recall,
                tr.report.f1
            ),
        );
    }

    let dir = ctx.stage_dir("evaluate", Some(fold))?;
    write_json(&dir.join("metrics.json"), &MetricsFile { fold: fold.to_string(), reports })?;

    let mut manifest = ctx.manifest("evaluate", &dir, Some(fold));
    manifest.input(&ckpt)?;
    if refined_ckpt.exists() {
        manifest.input(&refined_ckpt)?;
    }
    manifest.output(&dir.join("metrics.json"))?;
    manifest.write()?;
    Ok(())
}
