//! Pipeline configuration: one TOML file drives every stage. All randomness
//! is seeded from here; validation refuses configs with missing seeds.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use prth_core::data::SchemaConfig;
use prth_core::nn::{ClassWeighting, ModelSpec, TrainConfig, Variant};
use prth_core::synth::{Combination, FailureRule, SynthConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub prune: PruneSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Option<String>,
    pub synthetic: Option<SyntheticSection>,
    pub csv: Option<CsvSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub seed: Option<u64>,
    pub n_links: Option<usize>,
    pub n_stations: Option<usize>,
    pub n_days: Option<usize>,
    pub target_failure_rate: Option<f64>,
    pub geometry_extent_km: Option<f64>,
    pub k_neighbors: Option<usize>,
    pub trigger_channels: Option<Vec<String>>,
    pub thresholds: Option<Vec<f64>>,
    pub combination: Option<String>,
    pub noise_flip_prob: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    pub rl_kpi: Option<PathBuf>,
    pub ws: Option<PathBuf>,
    pub static_features: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    pub ws_attach: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Option<String>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_encoder_blocks: Option<usize>,
    pub lstm_layer_sizes: Option<Vec<usize>>,
    pub k_stations: Option<usize>,
    pub use_static_branch: Option<bool>,
    pub n_days_window: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub class_weighting: Option<String>,
    pub seed: Option<u64>,
    pub early_stop_patience: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub p_samples: Option<usize>,
    pub seed: Option<u64>,
    pub normalize: Option<bool>,
    pub background_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSection {
    pub coverage: Option<f64>,
    pub alpha: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub random_seeds: Option<Vec<u64>>,
    pub thresholds: Option<Vec<f64>>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&raw).with_context(|| format!("cannot parse {}", path.display()))?;
        Ok(config)
    }

    /// Collects every constraint violation instead of stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut need = |cond: bool, msg: &str| {
            if cond {
                v.push(msg.to_string());
            }
        };

        match self.data.source.as_deref() {
            Some("synthetic") => match &self.data.synthetic {
                None => need(true, "data.synthetic section missing for source = \"synthetic\""),
                Some(s) => {
                    if s.seed.is_none() {
                        v.push("data.synthetic.seed missing (all seeds must be explicit)".into());
                    }
                    if let Some(r) = s.target_failure_rate {
                        if !(r > 0.0 && r <= 0.5) {
                            v.push(format!(
                                "data.synthetic.target_failure_rate must be in (0, 0.5], got {r}"
                            ));
                        }
                    }
                    if let (Some(stations), Some(k)) = (s.n_stations, s.k_neighbors) {
                        if stations < k {
                            v.push(format!(
                                "data.synthetic.n_stations {stations} < k_neighbors {k}"
                            ));
                        }
                    }
                    if let Some(noise) = s.noise_flip_prob {
                        if !(0.0..=0.05).contains(&noise) {
                            v.push(format!(
                                "data.synthetic.noise_flip_prob must be in [0, 0.05], got {noise}"
                            ));
                        }
                    }
                    if let Some(c) = &s.combination {
                        if c != "and" && c != "or" {
                            v.push(format!(
                                "data.synthetic.combination must be \"and\" or \"or\", got \"{c}\""
                            ));
                        }
                    }
                }
            },
            Some("csv") => match &self.data.csv {
                None => need(true, "data.csv section missing for source = \"csv\""),
                Some(c) => {
                    for (name, path) in [
                        ("rl_kpi", &c.rl_kpi),
                        ("ws", &c.ws),
                        ("distances", &c.distances),
                    ] {
                        match path {
                            None => v.push(format!("data.csv.{name} missing")),
                            Some(p) if !p.exists() => {
                                v.push(format!("data.csv.{name} does not exist: {}", p.display()))
                            }
                            _ => {}
                        }
                    }
                }
            },
            Some(other) => {
                v.push(format!("data.source must be \"synthetic\" or \"csv\", got \"{other}\""))
            }
            None => v.push("data.source missing".into()),
        }

        match self.model.variant.as_deref() {
            Some("gentrap" | "ltrans" | "lstm_plus" | "llstm_plus") | None => {}
            Some(other) => v.push(format!(
                "model.variant must be one of gentrap|ltrans|lstm_plus|llstm_plus, got \"{other}\""
            )),
        }
        if self.model.variant.is_none() {
            v.push("model.variant missing".into());
        }
        if let (Some(d), Some(h)) = (self.model.d_model, self.model.n_heads) {
            if h == 0 || d % h != 0 {
                v.push(format!("model.d_model {d} not divisible by n_heads {h}"));
            }
        }
        if self.model.n_days_window == Some(0) {
            v.push("model.n_days_window must be >= 1".into());
        }

        if self.train.seed.is_none() {
            v.push("train.seed missing (all seeds must be explicit)".into());
        }
        if let Some(lr) = self.train.learning_rate {
            if !(lr > 0.0) {
                v.push(format!("train.learning_rate must be > 0, got {lr}"));
            }
        }
        if self.train.epochs == Some(0) {
            v.push("train.epochs must be >= 1".into());
        }
        if let Some(w) = self.train.class_weighting.as_deref() {
            if w != "none" && w != "inverse_frequency" {
                v.push(format!(
                    "train.class_weighting must be none|inverse_frequency, got \"{w}\""
                ));
            }
        }

        if self.explain.seed.is_none() {
            v.push("explain.seed missing (all seeds must be explicit)".into());
        }
        if self.explain.p_samples == Some(0) {
            v.push("explain.p_samples must be >= 1".into());
        }
        if self.explain.background_size == Some(0) {
            v.push("explain.background_size must be >= 1".into());
        }

        if let Some(c) = self.prune.coverage {
            if !(c > 0.0 && c <= 1.0) {
                v.push(format!("prune.coverage must be in (0, 1], got {c}"));
            }
        }
        if let Some(a) = self.prune.alpha {
            if a > 1 {
                v.push(format!("prune.alpha must be 0 or 1, got {a}"));
            }
        }

        match &self.eval.random_seeds {
            None => v.push("eval.random_seeds missing (all seeds must be explicit)".into()),
            Some(seeds) if seeds.is_empty() => {
                v.push("eval.random_seeds must not be empty".into())
            }
            _ => {}
        }
        v
    }

    /// Applies the global seed override: stage seeds become seed, seed+1,
    /// seed+2.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.data.synthetic {
            s.seed = Some(seed);
        }
        self.train.seed = Some(seed.wrapping_add(1));
        self.explain.seed = Some(seed.wrapping_add(2));
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = self
            .data
            .synthetic
            .as_ref()
            .context("config has no data.synthetic section")?;
        let rule = FailureRule {
            trigger_channels: s
                .trigger_channels
                .clone()
                .unwrap_or_else(|| vec!["unavail_second".into(), "bbe".into()]),
            thresholds: s.thresholds.clone(),
            combination: match s.combination.as_deref() {
                Some("or") => Combination::Or,
                _ => Combination::And,
            },
            noise_flip_prob: s.noise_flip_prob.unwrap_or(0.0),
        };
        Ok(SynthConfig {
            seed: s.seed.context("data.synthetic.seed missing")?,
            n_links: s.n_links.unwrap_or(50),
            n_stations: s.n_stations.unwrap_or(5),
            n_days: s.n_days.unwrap_or(200),
            target_failure_rate: s.target_failure_rate.unwrap_or(0.003),
            failure_rule: rule,
            geometry_extent_km: s.geometry_extent_km.unwrap_or(50.0),
            k_neighbors: s.k_neighbors.unwrap_or(1),
        })
    }

    pub fn schema(&self) -> SchemaConfig {
        let ws_attach = match self.data.source.as_deref() {
            Some("csv") => {
                self.data.csv.as_ref().and_then(|c| c.ws_attach).unwrap_or(1)
            }
            _ => self.data.synthetic.as_ref().and_then(|s| s.k_neighbors).unwrap_or(1),
        };
        SchemaConfig::ran_default().with_ws_attach(ws_attach)
    }

    pub fn n_days_window(&self) -> usize {
        self.model.n_days_window.unwrap_or(4)
    }

    pub fn variant(&self) -> Result<Variant> {
        Ok(match self.model.variant.as_deref() {
            Some("gentrap") => Variant::Gentrap,
            Some("ltrans") => Variant::Ltrans,
            Some("lstm_plus") => Variant::LstmPlus,
            Some("llstm_plus") => Variant::LlstmPlus,
            other => anyhow::bail!("unknown model.variant {other:?}"),
        })
    }

    /// Builds the model spec against a concrete dataset.
    pub fn model_spec(&self, dataset: &prth_core::data::TimeSeriesDataset) -> Result<ModelSpec> {
        let mut spec = match self.variant()? {
            Variant::Gentrap => {
                ModelSpec::gentrap_desk(dataset, self.model.k_stations.unwrap_or(1))
            }
            Variant::Ltrans => ModelSpec::ltrans_desk(dataset),
            Variant::LstmPlus => ModelSpec::lstm_plus_desk(dataset),
            Variant::LlstmPlus => ModelSpec::llstm_plus_desk(dataset),
        };
        if let Some(d) = self.model.d_model {
            spec.d_model = d;
        }
        if let Some(h) = self.model.n_heads {
            spec.n_heads = h;
        }
        if let Some(b) = self.model.n_encoder_blocks {
            spec.n_encoder_blocks = b;
        }
        if let Some(layers) = &self.model.lstm_layer_sizes {
            if !layers.is_empty() {
                spec.lstm_layer_sizes = layers.clone();
            }
        }
        if let Some(s) = self.model.use_static_branch {
            spec.use_static_branch = s && spec.static_dim > 0;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            batch_size: self.train.batch_size.unwrap_or(1024),
            learning_rate: self.train.learning_rate.unwrap_or(0.001),
            epochs: self.train.epochs.unwrap_or(150),
            class_weighting: match self.train.class_weighting.as_deref() {
                Some("none") => ClassWeighting::None,
                _ => ClassWeighting::InverseFrequency,
            },
            seed: self.train.seed.context("train.seed missing")?,
            early_stop_patience: self.train.early_stop_patience.unwrap_or(20),
        })
    }

    pub fn explain_params(&self) -> Result<(usize, u64, bool, usize)> {
        Ok((
            self.explain.p_samples.unwrap_or(150),
            self.explain.seed.context("explain.seed missing")?,
            self.explain.normalize.unwrap_or(true),
            self.explain.background_size.unwrap_or(16),
        ))
    }

    pub fn prune_params(&self) -> (f64, u8) {
        (self.prune.coverage.unwrap_or(0.95), self.prune.alpha.unwrap_or(0))
    }

    pub fn eval_params(&self) -> Result<(Vec<u64>, Vec<f64>)> {
        Ok((
            self.eval.random_seeds.clone().context("eval.random_seeds missing")?,
            self.eval.thresholds.clone().unwrap_or_else(|| vec![0.5]),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        r#"
out_dir = "out"

[data]
source = "synthetic"

[data.synthetic]
seed = 42
n_links = 10
n_days = 60
target_failure_rate = 0.02

[model]
variant = "ltrans"

[train]
seed = 7

[explain]
seed = 11

[prune]
coverage = 0.95

[eval]
random_seeds = [1, 2, 3]
"#
    }

    #[test]
    fn minimal_config_is_valid() {
        let config: PipelineConfig = toml::from_str(minimal_toml()).unwrap();
        assert_eq!(config.violations(), Vec::<String>::new());
        assert_eq!(config.synth_config().unwrap().n_links, 10);
    }

    #[test]
    fn coverage_out_of_range_is_named() {
        let raw = minimal_toml().replace("coverage = 0.95", "coverage = 1.2");
        let config: PipelineConfig = toml::from_str(&raw).unwrap();
        let violations = config.violations();
        assert!(violations.iter().any(|v| v.contains("prune.coverage")), "{violations:?}");
    }

    #[test]
    fn missing_seed_is_named() {
        let raw = minimal_toml().replace("seed = 7", "epochs = 5");
        let config: PipelineConfig = toml::from_str(&raw).unwrap();
        let violations = config.violations();
        assert!(violations.iter().any(|v| v.contains("train.seed")), "{violations:?}");
    }

    #[test]
    fn several_violations_collect() {
        let raw = minimal_toml()
            .replace("coverage = 0.95", "coverage = 0.0")
            .replace("random_seeds = [1, 2, 3]", "random_seeds = []")
            .replace("target_failure_rate = 0.02", "target_failure_rate = 0.9");
        let config: PipelineConfig = toml::from_str(&raw).unwrap();
        assert!(config.violations().len() >= 3);
    }

    #[test]
    fn seed_override_rewrites_stage_seeds() {
        let mut config: PipelineConfig = toml::from_str(minimal_toml()).unwrap();
        config.override_seed(100);
        assert_eq!(config.data.synthetic.as_ref().unwrap().seed, Some(100));
        assert_eq!(config.train.seed, Some(101));
        assert_eq!(config.explain.seed, Some(102));
    }
}
