use serde::{Deserialize, Serialize};

use super::{Result, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    And,
    Or,
}

/// The planted failure mechanism: day `d+1` is a failure day iff the trigger
/// channels exceed their thresholds on day `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRule {
    /// Channel names in the link's daily view. RL names trigger on the link's
    /// own series; WS names trigger on the serving station's series.
    pub trigger_channels: Vec<String>,
    /// Per-channel thresholds, parallel to `trigger_channels`. `None` means
    /// thresholds are resolved at generation time to the 99th percentile of
    /// the burst-free baseline.
    pub thresholds: Option<Vec<f64>>,
    pub combination: Combination,
    pub noise_flip_prob: f64,
}

impl FailureRule {
    pub fn default_and_rule() -> Self {
        FailureRule {
            trigger_channels: vec!["unavail_second".into(), "bbe".into()],
            thresholds: None,
            combination: Combination::And,
            noise_flip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trigger_channels.is_empty() {
            return Err(SynthError::InvalidConfig("trigger_channels must be non-empty".into()));
        }
        if let Some(t) = &self.thresholds {
            if t.len() != self.trigger_channels.len() {
                return Err(SynthError::InvalidConfig(format!(
                    "{} thresholds for {} trigger channels",
                    t.len(),
                    self.trigger_channels.len()
                )));
            }
        }
        if !(0.0..=0.05).contains(&self.noise_flip_prob) {
            return Err(SynthError::InvalidConfig(format!(
                "noise_flip_prob must be in [0, 0.05], got {}",
                self.noise_flip_prob
            )));
        }
        Ok(())
    }

    /// Evaluates the rule against per-trigger exceedance flags.
    pub fn fires(&self, exceeded: &[bool]) -> bool {
        match self.combination {
            Combination::And => exceeded.iter().all(|&e| e),
            Combination::Or => exceeded.iter().any(|&e| e),
        }
    }
}

/// Oracle handed to acceptance tests: which channels carry the planted signal
/// and where in the window it lives. The trigger always fires on the day
/// before the label day, i.e. the final window position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRelevance {
    /// Channel indices (into the daily channel order) of the trigger channels.
    pub relevant_channels: Vec<usize>,
    /// Window position of the trigger, counted backwards from the window end
    /// (0 = final timestep). Stored end-relative because windows of any length
    /// can be cut from the daily series.
    pub relevant_timestep_from_end: usize,
    /// Thresholds actually applied, parallel to `relevant_channels`.
    pub resolved_thresholds: Vec<f64>,
}

impl GroundTruthRelevance {
    /// Window position of the trigger for a window of length `t_len`.
    pub fn relevant_timestep(&self, t_len: usize) -> usize {
        t_len - 1 - self.relevant_timestep_from_end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_requires_all_triggers() {
        let rule = FailureRule::default_and_rule();
        assert!(rule.fires(&[true, true]));
        assert!(!rule.fires(&[true, false]));
    }

    #[test]
    fn or_requires_any_trigger() {
        let rule =
            FailureRule { combination: Combination::Or, ..FailureRule::default_and_rule() };
        assert!(rule.fires(&[false, true]));
        assert!(!rule.fires(&[false, false]));
    }

    #[test]
    fn noise_bound_is_enforced() {
        let rule =
            FailureRule { noise_flip_prob: 0.06, ..FailureRule::default_and_rule() };
        assert!(rule.validate().is_err());
    }

    #[test]
    fn relevant_timestep_maps_to_window_end() {
        let gt = GroundTruthRelevance {
            relevant_channels: vec![2, 3],
            relevant_timestep_from_end: 0,
            resolved_thresholds: vec![1.0, 2.0],
        };
        assert_eq!(gt.relevant_timestep(4), 3);
    }
}
