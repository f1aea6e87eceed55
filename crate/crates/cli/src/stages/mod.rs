//! Stage implementations. Every stage reads its declared inputs from disk,
//! writes its outputs under `out_dir/<stage>/`, and records a manifest, so a
//! pipeline run and a stage-by-stage run produce identical bytes.

mod aggregate;
mod evaluate;
mod explain;
mod fidelity;
mod gen_data;
mod prune;
mod refine;
mod report;
mod train;

pub use aggregate::aggregate;
pub use evaluate::evaluate;
pub use explain::explain;
pub use fidelity::fidelity;
pub use gen_data::gen_data;
pub use prune::prune_stage;
pub use refine::refine;
pub use report::report_stage;
pub use train::train_stage;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use prth_core::data::{
    fold_split, load_dataset, make_windows, rolling_origin_folds, DailyDataset, FoldId, FoldSpec,
    SplitIndices, TimeSeriesDataset,
};

use crate::config::PipelineConfig;
use crate::manifest::ManifestBuilder;

pub struct Ctx {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub config_sha256: String,
    pub quiet: bool,
}

impl Ctx {
    pub fn say(&self, stage: &str, message: &str) {
        if !self.quiet {
            println!("[{stage}] {message}");
        }
    }

    pub fn stage_dir(&self, stage: &str, fold: Option<FoldId>) -> Result<PathBuf> {
        let mut dir = self.out_dir.join(stage);
        if let Some(f) = fold {
            dir = dir.join(f.to_string());
        }
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir)
    }

    pub fn manifest(&self, stage: &str, dir: &Path, fold: Option<FoldId>) -> ManifestBuilder {
        ManifestBuilder::new(
            stage,
            dir,
            &self.out_dir,
            fold.map(|f| f.to_string()),
            self.config_sha256.clone(),
        )
    }

    /// Dependency check: the artifact must already exist on disk.
    pub fn require(&self, path: &Path, produced_by: &str) -> Result<()> {
        if !path.exists() {
            bail!(
                "dependency missing: {} (run `prth {produced_by}` first)",
                path.display()
            );
        }
        Ok(())
    }

    /// The four data files a stage reads, in loader order.
    pub fn data_files(&self) -> Result<[PathBuf; 4]> {
        match self.config.data.source.as_deref() {
            Some("synthetic") => {
                let dir = self.out_dir.join("gen-data");
                Ok([
                    dir.join("rl_kpi.csv"),
                    dir.join("ws.csv"),
                    dir.join("static.csv"),
                    dir.join("distances.csv"),
                ])
            }
            Some("csv") => {
                let c = self.config.data.csv.as_ref().context("data.csv section missing")?;
                Ok([
                    c.rl_kpi.clone().context("data.csv.rl_kpi missing")?,
                    c.ws.clone().context("data.csv.ws missing")?,
                    c.static_features.clone().unwrap_or_else(|| PathBuf::from("/dev/null")),
                    c.distances.clone().context("data.csv.distances missing")?,
                ])
            }
            other => bail!("data.source must be synthetic or csv, got {other:?}"),
        }
    }

    pub fn load_daily(&self) -> Result<DailyDataset> {
        let [rl, ws, st, dist] = self.data_files()?;
        self.require(&rl, "gen-data")?;
        let static_path = st.exists().then_some(st.as_path());
        let schema = self.config.schema();
        load_dataset(&rl, &ws, static_path, &dist, &schema)
            .with_context(|| "loading the dataset failed".to_string())
    }

    /// Raw windowed dataset plus the fold axis extent (count of distinct
    /// window-end dates).
    pub fn windowed(&self) -> Result<(TimeSeriesDataset, usize)> {
        let daily = self.load_daily()?;
        let (windowed, report) = make_windows(&daily, self.config.n_days_window())?;
        if report.skipped_links > 0 {
            self.say("data", &format!("{} links too short for windowing", report.skipped_links));
        }
        let mut dates: Vec<_> =
            windowed.instance_meta().iter().map(|m| m.window_end_date).collect();
        dates.sort_unstable();
        dates.dedup();
        Ok((windowed, dates.len()))
    }

    pub fn fold_spec(&self, extent: usize, fold: FoldId) -> Result<FoldSpec> {
        let folds = rolling_origin_folds(extent, 5)?;
        Ok(folds[fold.index()].clone())
    }

    /// Windowed dataset normalized with the fold's training statistics, plus
    /// the split.
    pub fn fold_data(
        &self,
        fold: FoldId,
    ) -> Result<(TimeSeriesDataset, prth_core::data::NormStats, SplitIndices, FoldSpec)> {
        let (raw, extent) = self.windowed()?;
        let spec = self.fold_spec(extent, fold)?;
        let (normed, stats) = prth_core::data::normalize(&raw, &spec)?;
        let split = fold_split(&normed, &spec);
        Ok((normed, stats, split, spec))
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("cannot parse {}", path.display()))
}

/// Runs the full chain for one fold.
pub fn pipeline(ctx: &Ctx, fold: FoldId) -> Result<()> {
    if ctx.config.data.source.as_deref() == Some("synthetic") {
        gen_data(ctx)?;
    }
    train_stage(ctx, fold, false)?;
    explain(ctx, fold)?;
    aggregate(ctx, fold)?;
    prune_stage(ctx, fold)?;
    refine(ctx, fold)?;
    train_stage(ctx, fold, true)?;
    evaluate(ctx, fold)?;
    fidelity(ctx, fold)?;
    report_stage(ctx)?;
    Ok(())
}
