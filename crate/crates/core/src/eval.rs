//! Classification metrics, insertion/deletion fidelity curves, and report
//! emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::ChannelImportance;
use crate::data::{FoldId, TimeSeriesDataset};
use crate::explain::{BackgroundSet, SaliencyMap};
use crate::nn::TrainedModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ranking is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("missing fold {0} in the report inputs")]
    MissingFold(FoldId),
    #[error("inconsistent model variants across folds: {0}")]
    InconsistentVariants(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Confusion-matrix metrics for the failure class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub tn: usize,
    pub fold_id: Option<FoldId>,
    pub model_variant: Option<String>,
}

/// Precision/recall/F1 at the given probability threshold. Degenerate
/// denominators score 0 by convention.
pub fn prf1(probabilities: &[f64], labels: &[u8], threshold: f64) -> Result<ClassificationReport> {
    if probabilities.is_empty() || probabilities.len() != labels.len() {
        return Err(EvalError::InvalidArgument(format!(
            "need equal non-empty inputs, got {} probabilities and {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_count, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in probabilities.iter().zip(labels) {
        let predicted = p >= threshold;
        match (predicted, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_count += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_count > 0 { tp as f64 / (tp + fn_count) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_count,
        tn,
        fold_id: None,
        model_variant: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMode {
    Insertion,
    Deletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingSource {
    Shap,
    Random,
}

/// F1 as a function of how many ranked channels are revealed (insertion) or
/// masked (deletion). Masking operates at channel granularity: all T
/// timesteps of a channel are replaced at once by the background mean of the
/// corresponding cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub mode: FidelityMode,
    pub ranking_source: RankingSource,
    /// (number of channels changed, F1) pairs, step 0 through C.
    pub steps: Vec<(usize, f64)>,
    /// Trapezoidal area over the normalized step axis.
    pub auc: f64,
    pub granularity: String,
}

fn check_permutation(ranking: &[usize], c: usize) -> Result<()> {
    if ranking.len() != c {
        return Err(EvalError::NotAPermutation(c));
    }
    let mut seen = vec![false; c];
    for &r in ranking {
        if r >= c || seen[r] {
            return Err(EvalError::NotAPermutation(c));
        }
        seen[r] = true;
    }
    Ok(())
}

fn trapezoid_auc(steps: &[(usize, f64)]) -> f64 {
    let c = steps.len() - 1;
    if c == 0 {
        return steps[0].1;
    }
    let mut auc = 0.0;
    for w in steps.windows(2) {
        auc += (w[0].1 + w[1].1) / 2.0;
    }
    auc / c as f64
}

fn masked_f1(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    eval_indices: &[usize],
    revealed: &[bool],
    cell_means: &Array2<f64>,
    threshold: f64,
) -> Result<f64> {
    let (c, t) = (dataset.n_channels(), dataset.t_len());
    let template = cell_means.clone();
    let labels: Vec<u8> = eval_indices.iter().map(|&n| dataset.labels()[n]).collect();
    let probs: Vec<f64> = eval_indices
        .iter()
        .map(|&n| {
            let mut x = template.clone();
            let instance = dataset.instance(n);
            for ci in 0..c {
                if revealed[ci] {
                    for ti in 0..t {
                        x[[ci, ti]] = instance[[ci, ti]];
                    }
                }
            }
            let static_row = dataset.static_row(n);
            model.predict_proba(x.view(), static_row.as_deref())
        })
        .collect();
    Ok(prf1(&probs, &labels, threshold)?.f1)
}

/// Reveals channels in ranked order, starting from an all-masked input.
/// Step k evaluates F1 with the top-k channels at their true values and the
/// rest at background means; higher AUC means the ranking surfaces the
/// informative channels first.
pub fn insertion_test(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    eval_indices: &[usize],
    ranking: &[usize],
    baseline: &BackgroundSet,
) -> Result<FidelityCurve> {
    fidelity_curve(model, dataset, eval_indices, ranking, baseline, FidelityMode::Insertion)
}

/// Masks channels in ranked order, starting from the untouched input. A
/// lower AUC means the ranking found the channels the model relies on.
pub fn deletion_test(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    eval_indices: &[usize],
    ranking: &[usize],
    baseline: &BackgroundSet,
) -> Result<FidelityCurve> {
    fidelity_curve(model, dataset, eval_indices, ranking, baseline, FidelityMode::Deletion)
}

fn fidelity_curve(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    eval_indices: &[usize],
    ranking: &[usize],
    baseline: &BackgroundSet,
    mode: FidelityMode,
) -> Result<FidelityCurve> {
    let c = dataset.n_channels();
    check_permutation(ranking, c)?;
    if eval_indices.is_empty() {
        return Err(EvalError::InvalidArgument("evaluation set is empty".into()));
    }
    let means = baseline.cell_means();
    let mut steps = Vec::with_capacity(c + 1);
    for k in 0..=c {
        let mut revealed = vec![mode == FidelityMode::Deletion; c];
        for &ch in &ranking[..k] {
            revealed[ch] = mode != FidelityMode::Deletion;
        }
        let f1 = masked_f1(model, dataset, eval_indices, &revealed, &means, 0.5)?;
        steps.push((k, f1));
    }
    let auc = trapezoid_auc(&steps);
    Ok(FidelityCurve { mode, ranking_source: RankingSource::Shap, steps, auc, granularity: "channel".into() })
}

/// Uniform random channel order, deterministic per seed.
pub fn random_ranking(c: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..c).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Mean curve over several random rankings, the variance-reduced baseline
/// the attribution ranking is compared against.
pub fn random_baseline_curve(
    model: &TrainedModel,
    dataset: &TimeSeriesDataset,
    eval_indices: &[usize],
    baseline: &BackgroundSet,
    mode: FidelityMode,
    seeds: &[u64],
) -> Result<FidelityCurve> {
    if seeds.is_empty() {
        return Err(EvalError::InvalidArgument("need at least one random seed".into()));
    }
    let c = dataset.n_channels();
    let mut mean_steps: Vec<(usize, f64)> = (0..=c).map(|k| (k, 0.0)).collect();
    for &seed in seeds {
        let ranking = random_ranking(c, seed);
        let curve = fidelity_curve(model, dataset, eval_indices, &ranking, baseline, mode)?;
        for (acc, step) in mean_steps.iter_mut().zip(curve.steps) {
            acc.1 += step.1;
        }
    }
    for step in &mut mean_steps {
        step.1 /= seeds.len() as f64;
    }
    let auc = trapezoid_auc(&mean_steps);
    Ok(FidelityCurve {
        mode,
        ranking_source: RankingSource::Random,
        steps: mean_steps,
        auc,
        granularity: "channel".into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub model_variant: String,
    pub folds: usize,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
}

/// Writes the report bundle: `summary.json` (per-variant mean and population
/// std across folds), `boxplot.csv` (per-fold F1 per variant),
/// `importance_bar.csv`, and `fidelity_curves.csv`. Fold ids must be
/// gap-free between the smallest and largest present, and every fold must
/// report the same variant set.
pub fn report(
    dir: &Path,
    per_fold: &[ClassificationReport],
    curves: &[FidelityCurve],
    importance: Option<&ChannelImportance>,
    channel_names: &[String],
) -> Result<()> {
    if per_fold.is_empty() {
        return Err(EvalError::InvalidArgument("need at least one fold report".into()));
    }
    let mut folds: Vec<FoldId> = per_fold.iter().filter_map(|r| r.fold_id).collect();
    folds.sort_unstable();
    folds.dedup();
    if folds.is_empty() {
        return Err(EvalError::InvalidArgument("fold reports carry no fold ids".into()));
    }
    let lo = folds[0].index();
    let hi = folds[folds.len() - 1].index();
    for i in lo..=hi {
        let id = FoldId::from_index(i).expect("bounded");
        if !folds.contains(&id) {
            return Err(EvalError::MissingFold(id));
        }
    }

    // Same variant set in every fold.
    let variants_of = |fold: FoldId| -> Vec<String> {
        let mut v: Vec<String> = per_fold
            .iter()
            .filter(|r| r.fold_id == Some(fold))
            .map(|r| r.model_variant.clone().unwrap_or_default())
            .collect();
        v.sort();
        v
    };
    let reference = variants_of(folds[0]);
    for &fold in &folds[1..] {
        let got = variants_of(fold);
        if got != reference {
            return Err(EvalError::InconsistentVariants(format!(
                "{fold} has {got:?}, {} has {reference:?}",
                folds[0]
            )));
        }
    }

    std::fs::create_dir_all(dir)?;
    let mut variants: Vec<String> = reference;
    variants.dedup();
    let summaries: Vec<VariantSummary> = variants
        .iter()
        .map(|variant| {
            let rows: Vec<&ClassificationReport> = per_fold
                .iter()
                .filter(|r| r.model_variant.as_deref() == Some(variant.as_str()))
                .collect();
            VariantSummary {
                model_variant: variant.clone(),
                folds: rows.len(),
                precision: summarize(&rows.iter().map(|r| r.precision).collect::<Vec<_>>()),
                recall: summarize(&rows.iter().map(|r| r.recall).collect::<Vec<_>>()),
                f1: summarize(&rows.iter().map(|r| r.f1).collect::<Vec<_>>()),
            }
        })
        .collect();
    let json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;

    let mut boxplot = BufWriter::new(File::create(dir.join("boxplot.csv"))?);
    writeln!(boxplot, "fold,model_variant,f1")?;
    for r in per_fold {
        writeln!(
            boxplot,
            "{},{},{}",
            r.fold_id.map(|f| f.to_string()).unwrap_or_default(),
            r.model_variant.clone().unwrap_or_default(),
            r.f1
        )?;
    }
    boxplot.flush()?;

    if let Some(imp) = importance {
        let total: f64 = imp.global.iter().map(|v| v.abs()).sum();
        let mut bar = BufWriter::new(File::create(dir.join("importance_bar.csv"))?);
        writeln!(bar, "channel,psi,abs_share")?;
        for (c, &psi) in imp.global.iter().enumerate() {
            let name = channel_names.get(c).cloned().unwrap_or_else(|| format!("ch{c}"));
            let share = if total > 0.0 { psi.abs() / total } else { 0.0 };
            writeln!(bar, "{name},{psi},{share}")?;
        }
        bar.flush()?;
    }

    let mut fid = BufWriter::new(File::create(dir.join("fidelity_curves.csv"))?);
    writeln!(fid, "mode,ranking_source,step,fraction,f1,auc")?;
    for curve in curves {
        let c = curve.steps.len().saturating_sub(1).max(1);
        for &(k, f1) in &curve.steps {
            writeln!(
                fid,
                "{:?},{:?},{},{},{},{}",
                curve.mode,
                curve.ranking_source,
                k,
                k as f64 / c as f64,
                f1,
                curve.auc
            )?;
        }
    }
    fid.flush()?;
    Ok(())
}

/// Underlying (feature value, attribution) pairs for distribution plots.
/// `dataset` should be in raw (denormalized) units; `selection` must be
/// parallel to `maps`.
pub fn write_shap_vs_value(
    dir: &Path,
    maps: &[SaliencyMap],
    dataset: &TimeSeriesDataset,
    selection: &[usize],
) -> Result<()> {
    if maps.len() != selection.len() {
        return Err(EvalError::InvalidArgument(format!(
            "{} maps vs {} selected instances",
            maps.len(),
            selection.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("shap_vs_value.csv"))?);
    writeln!(w, "instance_id,channel_name,t,feature_value,phi")?;
    for (map, &n) in maps.iter().zip(selection) {
        let instance = dataset.instance(n);
        for (ci, meta) in dataset.channel_meta().iter().enumerate() {
            for ti in 0..dataset.t_len() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    map.instance_id,
                    meta.name,
                    ti,
                    instance[[ci, ti]],
                    map.phi[[ci, ti]]
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
