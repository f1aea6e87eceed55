//! Synthetic radio-link + weather-station data with a planted failure
//! mechanism.
//!
//! The generator plants a known rule: a day is a failure day iff the trigger
//! channels exceeded their thresholds on the previous day. Trigger excursions
//! are injected as bursts on AR(1) baselines, with the burst probability
//! calibrated by bisection to hit the target failure rate. Weather channels
//! follow smooth seasonal processes that are label-independent unless a WS
//! channel is listed as a trigger. Everything is a pure function of the
//! config; per-link and per-station random streams make the output
//! independent of generation order.

mod emit;
mod generator;
mod graph;
mod rule;

pub use emit::write_csv_bundle;
pub use generator::{generate, StationSeries, SynthOutput};
pub use graph::{knearest_stations, StationGraph};
pub use rule::{Combination, FailureRule, GroundTruthRelevance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(
        "failure rule cannot reach target rate {target} within {iterations} calibration \
         iterations (achieved {achieved})"
    )]
    InfeasibleRate { target: f64, achieved: f64, iterations: usize },
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_links: usize,
    pub n_stations: usize,
    pub n_days: usize,
    pub target_failure_rate: f64,
    pub failure_rule: FailureRule,
    pub geometry_extent_km: f64,
    /// Nearest stations per link; also the number of WS channel blocks
    /// attached to each link's daily series.
    pub k_neighbors: usize,
}

impl SynthConfig {
    /// Desk-scale defaults: the rule fires when both `unavail_second` and
    /// `bbe` exceed their 99th-percentile thresholds.
    pub fn desk_default(seed: u64) -> Self {
        SynthConfig {
            seed,
            n_links: 50,
            n_stations: 5,
            n_days: 200,
            target_failure_rate: 0.003,
            failure_rule: FailureRule::default_and_rule(),
            geometry_extent_km: 50.0,
            k_neighbors: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_links == 0 || self.n_days < 2 {
            return Err(SynthError::InvalidConfig(
                "need at least one link and two days".into(),
            ));
        }
        if !(self.target_failure_rate > 0.0 && self.target_failure_rate <= 0.5) {
            return Err(SynthError::InvalidConfig(format!(
                "target_failure_rate must be in (0, 0.5], got {}",
                self.target_failure_rate
            )));
        }
        if self.n_stations < self.k_neighbors {
            return Err(SynthError::InvalidConfig(format!(
                "n_stations {} < k_neighbors {}",
                self.n_stations, self.k_neighbors
            )));
        }
        if self.k_neighbors == 0 {
            return Err(SynthError::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.geometry_extent_km > 0.0) {
            return Err(SynthError::InvalidConfig("geometry_extent_km must be > 0".into()));
        }
        self.failure_rule.validate()?;
        Ok(())
    }
}

/// Derives an independent RNG seed for a named stream. Streams are keyed by
/// (run seed, domain, index) so per-link and per-station generation does not
/// depend on iteration order or worker count.
pub(crate) fn stream_seed(seed: u64, domain: u64, idx: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ domain) ^ idx)
}

pub(crate) mod domains {
    pub const GEOMETRY: u64 = 1;
    pub const LINK_RL: u64 = 2;
    pub const STATION_WS: u64 = 3;
    pub const LINK_STRESS: u64 = 4;
    pub const STATION_STRESS: u64 = 5;
    pub const LINK_BURST: u64 = 6;
    pub const STATION_BURST: u64 = 7;
    pub const LABEL_NOISE: u64 = 8;
    pub const LINK_STATIC: u64 = 9;
}
