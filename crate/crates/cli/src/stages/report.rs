use anyhow::{Context, Result};

use prth_core::data::FoldId;
use prth_core::eval::{report, write_shap_vs_value, ClassificationReport, FidelityCurve};
use prth_core::explain::read_saliency_store;

use super::aggregate::ImportanceFile;
use super::evaluate::MetricsFile;
use super::explain::Selection;
use super::{read_json, Ctx};

/// Collects per-fold metrics, fidelity curves, importance, and the
/// (feature value, attribution) pairs into the report bundle.
pub fn report_stage(ctx: &Ctx) -> Result<()> {
    let mut per_fold: Vec<ClassificationReport> = Vec::new();
    let mut present: Vec<FoldId> = Vec::new();
    let (_, thresholds) = ctx.config.eval_params()?;
    let primary = thresholds.first().copied().unwrap_or(0.5);
    for fold in FoldId::ALL {
        let path = ctx.out_dir.join("evaluate").join(fold.to_string()).join("metrics.json");
        if path.exists() {
            let metrics: MetricsFile = read_json(&path)?;
            per_fold.extend(
                metrics
                    .reports
                    .into_iter()
                    .filter(|t| t.threshold == primary)
                    .map(|t| t.report),
            );
            present.push(fold);
        }
    }
    if per_fold.is_empty() {
        anyhow::bail!("dependency missing: no evaluate/*/metrics.json (run `prth evaluate` first)");
    }

    let mut curves: Vec<FidelityCurve> = Vec::new();
    for fold in &present {
        let path = ctx.out_dir.join("fidelity").join(fold.to_string()).join("curves.json");
        if path.exists() {
            let fold_curves: Vec<FidelityCurve> = read_json(&path)?;
            curves.extend(fold_curves);
        }
    }

    let top_fold = *present.last().expect("non-empty");
    let importance_path = ctx
        .out_dir
        .join("aggregate")
        .join(top_fold.to_string())
        .join("channel_importance.json");
    let importance: Option<ImportanceFile> =
        importance_path.exists().then(|| read_json(&importance_path)).transpose()?;

    let dir = ctx.stage_dir("report", None)?;
    let channel_names =
        importance.as_ref().map(|i| i.channel_names.clone()).unwrap_or_default();
    report(
        &dir,
        &per_fold,
        &curves,
        importance.as_ref().map(|i| &i.importance),
        &channel_names,
    )
    .context("writing the report bundle failed")?;

    // (feature value, attribution) pairs from the top fold's explained
    // instances, in raw units.
    let explain_dir = ctx.out_dir.join("explain").join(top_fold.to_string());
    if explain_dir.join("meta.json").exists() && !channel_names.is_empty() {
        let maps = read_saliency_store(&explain_dir, &channel_names)?;
        let selection: Selection = read_json(&explain_dir.join("selected.json"))?;
        let (raw, _) = ctx.windowed()?;
        if maps.len() == selection.indices.len() {
            write_shap_vs_value(&dir, &maps, &raw, &selection.indices)?;
        }
    }
    ctx.say(
        "report",
        &format!("{} fold reports, {} curves -> {}", per_fold.len(), curves.len(), dir.display()),
    );

    let mut manifest = ctx.manifest("report", &dir, None);
    for name in ["summary.json", "boxplot.csv", "fidelity_curves.csv"] {
        manifest.output(&dir.join(name))?;
    }
    for name in ["importance_bar.csv", "shap_vs_value.csv"] {
        if dir.join(name).exists() {
            manifest.output(&dir.join(name))?;
        }
    }
    manifest.write()?;
    Ok(())
}
