use anyhow::{Context, Result};

use prth_core::data::{apply_normalization, fold_split, FoldId};
use prth_core::eval::{
    deletion_test, insertion_test, random_baseline_curve, FidelityCurve, FidelityMode,
};
use prth_core::explain::BackgroundSet;
use prth_core::nn::load_checkpoint;

use super::aggregate::ImportanceFile;
use super::{read_json, write_json, Ctx};

/// Insertion and deletion curves for the attribution ranking against the
/// mean random baseline.
pub fn fidelity(ctx: &Ctx, fold: FoldId) -> Result<()> {
    let ckpt = ctx.out_dir.join("train").join(fold.to_string()).join("model.ckpt");
    ctx.require(&ckpt, "train")?;
    let importance_path =
        ctx.out_dir.join("aggregate").join(fold.to_string()).join("channel_importance.json");
    ctx.require(&importance_path, "aggregate")?;

    let model = load_checkpoint(&ckpt)?;
    let file: ImportanceFile = read_json(&importance_path)?;
    let (raw, extent) = ctx.windowed()?;
    let fold_spec = ctx.fold_spec(extent, fold)?;
    let normed = apply_normalization(&raw, &model.norm_stats)?;
    let split = fold_split(&normed, &fold_spec);

    // Attribution ranking: channels by |psi| descending.
    let mut ranking: Vec<usize> = (0..normed.n_channels()).collect();
    ranking.sort_by(|&a, &b| {
        file.importance.global[b]
            .abs()
            .total_cmp(&file.importance.global[a].abs())
            .then(a.cmp(&b))
    });

    let (p_unused, seed, _, background_size) = ctx.config.explain_params()?;
    let _ = p_unused;
    let background = BackgroundSet::sample(&normed, &split.train, background_size, seed)?;
    let (random_seeds, _) = ctx.config.eval_params()?;

    let mut curves: Vec<FidelityCurve> = Vec::new();
    curves.push(
        insertion_test(&model, &normed, &split.test, &ranking, &background)
            .context("insertion test failed")?,
    );
    curves.push(
        deletion_test(&model, &normed, &split.test, &ranking, &background)
            .context("deletion test failed")?,
    );
    for mode in [FidelityMode::Insertion, FidelityMode::Deletion] {
        curves.push(random_baseline_curve(
            &model,
            &normed,
            &split.test,
            &background,
            mode,
            &random_seeds,
        )?);
    }
    for curve in &curves {
        ctx.say(
            "fidelity",
            &format!(
                "{fold} {:?}/{:?}: AUC {:.4}",
                curve.mode, curve.ranking_source, curve.auc
            ),
        );
    }

    let dir = ctx.stage_dir("fidelity", Some(fold))?;
    write_json(&dir.join("curves.json"), &curves)?;
    let mut csv = String::from("mode,ranking_source,step,fraction,f1,auc\n");
    for curve in &curves {
        let c = curve.steps.len().saturating_sub(1).max(1);
        for &(k, f1) in &curve.steps {
            csv.push_str(&format!(
                "{:?},{:?},{},{},{},{}\n",
                curve.mode,
                curve.ranking_source,
                k,
                k as f64 / c as f64,
                f1,
                curve.auc
            ));
        }
    }
    std::fs::write(dir.join("fidelity_curves.csv"), csv)?;

    let mut manifest = ctx.manifest("fidelity", &dir, Some(fold));
    manifest.input(&ckpt)?;
    manifest.input(&importance_path)?;
    for seed in &random_seeds {
        manifest.seed(&format!("random_{seed}"), *seed);
    }
    manifest.output(&dir.join("curves.json"))?;
    manifest.output(&dir.join("fidelity_curves.csv"))?;
    manifest.write()?;
    Ok(())
}
