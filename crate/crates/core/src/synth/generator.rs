use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ChannelKind, DailyDataset, LinkDaily, SchemaConfig};

use super::graph::{knearest_stations, StationGraph};
use super::rule::{FailureRule, GroundTruthRelevance};
use super::{domains, stream_seed, Result, SynthConfig, SynthError};

const CALIBRATION_ITERATIONS: usize = 10;
const RATE_TOLERANCE: f64 = 0.2;
const THRESHOLD_QUANTILE: f64 = 0.99;

/// Raw per-station series kept alongside the link view so the CSV bundle can
/// be emitted at station granularity.
#[derive(Debug, Clone)]
pub struct StationSeries {
    pub station_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// One 9 x D matrix per station.
    pub values: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub daily: DailyDataset,
    pub ground_truth: GroundTruthRelevance,
    pub graph: StationGraph,
    pub stations: StationSeries,
    /// The input rule with thresholds resolved to concrete values.
    pub resolved_rule: FailureRule,
    /// Fraction of labeled link-days that are failures, before label noise.
    pub realized_failure_rate: f64,
    /// Burst probability found by calibration.
    pub burst_probability: f64,
}

struct RlParams {
    mean: f64,
    rho: f64,
    sigma: f64,
}

const RL_PARAMS: [RlParams; 6] = [
    RlParams { mean: 2.0, rho: 0.7, sigma: 1.5 },   // severely_error_second
    RlParams { mean: 8.0, rho: 0.7, sigma: 3.0 },   // error_second
    RlParams { mean: 1.0, rho: 0.7, sigma: 0.8 },   // unavail_second
    RlParams { mean: 20.0, rho: 0.7, sigma: 8.0 },  // bbe
    RlParams { mean: -42.0, rho: 0.6, sigma: 2.0 }, // rxlevmax
    RlParams { mean: 350.0, rho: 0.8, sigma: 15.0 },// capacity
];

struct WsParams {
    base: f64,
    amplitude: f64,
    noise: f64,
    min: f64,
    max: f64,
}

const WS_PARAMS: [WsParams; 9] = [
    WsParams { base: 12.0, amplitude: 9.0, noise: 2.5, min: -60.0, max: 60.0 },   // temperature
    WsParams { base: 1.5, amplitude: 1.0, noise: 2.0, min: 0.0, max: 500.0 },     // precipitation
    WsParams { base: 70.0, amplitude: 15.0, noise: 6.0, min: 0.0, max: 100.0 },   // humidity
    WsParams { base: 5.0, amplitude: 2.0, noise: 1.5, min: 0.0, max: 80.0 },      // wind_speed
    WsParams { base: 1013.0, amplitude: 6.0, noise: 3.0, min: 900.0, max: 1100.0 },// pressure
    WsParams { base: 6.0, amplitude: 7.0, noise: 2.0, min: -60.0, max: 40.0 },    // dew_point
    WsParams { base: 50.0, amplitude: 25.0, noise: 12.0, min: 0.0, max: 100.0 },  // cloud_cover
    WsParams { base: 18.0, amplitude: 4.0, noise: 3.0, min: 0.0, max: 60.0 },     // visibility
    WsParams { base: 2.0, amplitude: 6.0, noise: 2.0, min: 0.0, max: 300.0 },     // snow_depth
];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Where a trigger channel's values come from.
#[derive(Debug, Clone, Copy)]
enum TriggerSource {
    /// RL channel row in the link's own series.
    Link { rl_row: usize },
    /// WS channel row of the rank-th attached station.
    Station { ws_row: usize, rank: usize },
}

/// Generates the synthetic dataset, ground truth, and station graph.
///
/// Deterministic for a fixed config: all randomness flows through seeded
/// per-entity streams.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let schema = SchemaConfig::ran_default().with_ws_attach(config.k_neighbors);
    let channel_meta = schema.channel_meta();
    let n_rl = schema.rl_channels.len();
    let n_ws = schema.ws_channels.len();
    let d = config.n_days;
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
    let dates: Vec<NaiveDate> = (0..d).map(|i| start + Duration::days(i as i64)).collect();

    // Geometry and K-nearest graph.
    let mut geo = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, domains::GEOMETRY, 0));
    let extent = config.geometry_extent_km;
    let link_positions: Vec<[f64; 2]> = (0..config.n_links)
        .map(|_| [geo.random::<f64>() * extent, geo.random::<f64>() * extent])
        .collect();
    let station_positions: Vec<[f64; 2]> = (0..config.n_stations)
        .map(|_| [geo.random::<f64>() * extent, geo.random::<f64>() * extent])
        .collect();
    let graph = knearest_stations(&link_positions, &station_positions, config.k_neighbors)?;

    // Burst-free baselines.
    let station_base: Vec<Array2<f64>> = (0..config.n_stations)
        .map(|si| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::STATION_WS,
                si as u64,
            ));
            let phases: Vec<f64> = (0..n_ws).map(|_| rng.random::<f64>() * 365.0).collect();
            let mut m = Array2::zeros((n_ws, d));
            for (c, p) in WS_PARAMS.iter().enumerate() {
                let mut ar = 0.0;
                for t in 0..d {
                    ar = 0.6 * ar + p.noise * (1.0 - 0.6f64 * 0.6).sqrt() * normal(&mut rng);
                    let seasonal = p.amplitude
                        * (std::f64::consts::TAU * (t as f64 + phases[c]) / 365.0).sin();
                    m[[c, t]] = (p.base + seasonal + ar).clamp(p.min, p.max);
                }
            }
            m
        })
        .collect();

    let link_base: Vec<Array2<f64>> = (0..config.n_links)
        .map(|li| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::LINK_RL,
                li as u64,
            ));
            let mut m = Array2::zeros((n_rl, d));
            for (c, p) in RL_PARAMS.iter().enumerate() {
                let mut x = p.mean + p.sigma * normal(&mut rng);
                m[[c, 0]] = x;
                for t in 1..d {
                    x = p.mean
                        + p.rho * (x - p.mean)
                        + p.sigma * (1.0 - p.rho * p.rho).sqrt() * normal(&mut rng);
                    m[[c, t]] = x;
                }
            }
            m
        })
        .collect();

    // Resolve trigger channels against the link-view channel order.
    let mut sources = Vec::new();
    for name in &config.failure_rule.trigger_channels {
        let idx = channel_meta.iter().position(|m| &m.name == name).ok_or_else(|| {
            SynthError::InvalidConfig(format!("trigger channel \"{name}\" is not generated"))
        })?;
        let source = match channel_meta[idx].kind {
            ChannelKind::RlKpi => TriggerSource::Link { rl_row: idx },
            ChannelKind::Ws => TriggerSource::Station {
                ws_row: (idx - n_rl) % n_ws,
                rank: (idx - n_rl) / n_ws,
            },
            other => {
                return Err(SynthError::InvalidConfig(format!(
                    "trigger channel \"{name}\" has non-triggerable kind {other:?}"
                )))
            }
        };
        sources.push((idx, source));
    }

    // Thresholds: explicit, or the 99th percentile of the burst-free values
    // seen through the link view.
    let thresholds: Vec<f64> = match &config.failure_rule.thresholds {
        Some(t) => t.clone(),
        None => sources
            .iter()
            .map(|&(_, source)| {
                let mut values = Vec::with_capacity(config.n_links * d);
                for li in 0..config.n_links {
                    for t in 0..d {
                        values.push(trigger_value(
                            source,
                            li,
                            t,
                            &link_base,
                            &station_base,
                            &graph,
                        ));
                    }
                }
                values.sort_by(f64::total_cmp);
                let rank = ((THRESHOLD_QUANTILE * values.len() as f64).ceil() as usize)
                    .clamp(1, values.len());
                values[rank - 1]
            })
            .collect(),
    };

    // Baseline exceedance flags: trigger j exceeds without a burst.
    let baseline_exceeds: Vec<Vec<Vec<bool>>> = (0..config.n_links)
        .map(|li| {
            sources
                .iter()
                .zip(&thresholds)
                .map(|(&(_, source), &th)| {
                    (0..d)
                        .map(|t| {
                            trigger_value(source, li, t, &link_base, &station_base, &graph) > th
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    // Stress-day uniforms, drawn once and thresholded by the candidate burst
    // probability during calibration.
    let link_u: Vec<Vec<f64>> = (0..config.n_links)
        .map(|li| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::LINK_STRESS,
                li as u64,
            ));
            (0..d).map(|_| rng.random::<f64>()).collect()
        })
        .collect();
    let station_u: Vec<Vec<f64>> = (0..config.n_stations)
        .map(|si| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::STATION_STRESS,
                si as u64,
            ));
            (0..d).map(|_| rng.random::<f64>()).collect()
        })
        .collect();

    let stressed = |source: TriggerSource, li: usize, t: usize, p: f64| -> bool {
        match source {
            TriggerSource::Link { .. } => link_u[li][t] < p,
            TriggerSource::Station { rank, .. } => {
                station_u[graph.neighbor_map[li][rank]][t] < p
            }
        }
    };

    // Pre-noise failure rate as a function of the burst probability.
    let rate_for = |p: f64| -> f64 {
        let mut failures = 0usize;
        for li in 0..config.n_links {
            for t in 0..d - 1 {
                let fires = config.failure_rule.fires(
                    &sources
                        .iter()
                        .enumerate()
                        .map(|(j, &(_, source))| {
                            stressed(source, li, t, p) || baseline_exceeds[li][j][t]
                        })
                        .collect::<Vec<_>>(),
                );
                failures += usize::from(fires);
            }
        }
        failures as f64 / (config.n_links * (d - 1)) as f64
    };

    // Bisection on the burst probability.
    let target = config.target_failure_rate;
    let (mut lo, mut hi) = (0.0f64, 0.2f64);
    let mut best = (0.0, rate_for(0.0));
    for _ in 0..CALIBRATION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let rate = rate_for(mid);
        if (rate - target).abs() < (best.1 - target).abs() {
            best = (mid, rate);
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (burst_p, realized) = best;
    if (realized - target).abs() > RATE_TOLERANCE * target {
        return Err(SynthError::InfeasibleRate {
            target,
            achieved: realized,
            iterations: CALIBRATION_ITERATIONS,
        });
    }

    // Final series: inject bursts on stress days. Bursts are multiplicative
    // on the baseline, floored so the threshold is always exceeded.
    let mut link_values = link_base;
    let mut station_values = station_base;
    for (j, &(_, source)) in sources.iter().enumerate() {
        let th = thresholds[j];
        match source {
            TriggerSource::Link { rl_row } => {
                let scale = RL_PARAMS[rl_row].sigma.max(th.abs()).max(1e-6);
                for li in 0..config.n_links {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        config.seed,
                        domains::LINK_BURST,
                        (li * n_rl + rl_row) as u64,
                    ));
                    for t in 0..d {
                        let boost = 4.0 + 2.0 * normal(&mut rng).abs();
                        let floor = th + 0.05 * scale * (1.0 + normal(&mut rng).abs());
                        if link_u[li][t] < burst_p {
                            let burst = link_values[li][[rl_row, t]] * boost;
                            link_values[li][[rl_row, t]] = burst.max(floor);
                        }
                    }
                }
            }
            TriggerSource::Station { ws_row, .. } => {
                let scale = WS_PARAMS[ws_row].noise.max(th.abs()).max(1e-6);
                for si in 0..config.n_stations {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        config.seed,
                        domains::STATION_BURST,
                        (si * n_ws + ws_row) as u64,
                    ));
                    for t in 0..d {
                        let boost = 4.0 + 2.0 * normal(&mut rng).abs();
                        let floor = th + 0.05 * scale * (1.0 + normal(&mut rng).abs());
                        if station_u[si][t] < burst_p {
                            let burst = station_values[si][[ws_row, t]] * boost;
                            station_values[si][[ws_row, t]] = burst.max(floor);
                        }
                    }
                }
            }
        }
    }

    // Assemble link views and labels from the final values.
    let link_ids: Vec<String> = (0..config.n_links).map(|i| format!("L{i:04}")).collect();
    let station_ids: Vec<String> = (0..config.n_stations).map(|i| format!("S{i:03}")).collect();
    let mut links = Vec::with_capacity(config.n_links);
    for li in 0..config.n_links {
        let mut values = Array2::zeros((channel_meta.len(), d));
        for c in 0..n_rl {
            for t in 0..d {
                values[[c, t]] = link_values[li][[c, t]];
            }
        }
        for rank in 0..config.k_neighbors {
            let si = graph.neighbor_map[li][rank];
            for c in 0..n_ws {
                for t in 0..d {
                    values[[n_rl + rank * n_ws + c, t]] = station_values[si][[c, t]];
                }
            }
        }

        let mut failures = vec![0u8; d];
        for t in 0..d - 1 {
            let exceeded: Vec<bool> = sources
                .iter()
                .zip(&thresholds)
                .map(|(&(idx, _), &th)| values[[idx, t]] > th)
                .collect();
            failures[t + 1] = u8::from(config.failure_rule.fires(&exceeded));
        }
        if config.failure_rule.noise_flip_prob > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::LABEL_NOISE,
                li as u64,
            ));
            for f in failures.iter_mut().take(d).skip(1) {
                if rng.random::<f64>() < config.failure_rule.noise_flip_prob {
                    *f = 1 - *f;
                }
            }
        }

        links.push(LinkDaily {
            link_id: link_ids[li].clone(),
            dates: dates.clone(),
            values,
            failures,
        });
    }

    // Static features: region from the position quadrant, band from a seeded
    // stream. One-hot layout matches the loader's sorted-vocabulary encoding.
    let half = extent / 2.0;
    let regions: Vec<&str> = link_positions
        .iter()
        .map(|p| match (p[0] < half, p[1] < half) {
            (true, true) => "southwest",
            (true, false) => "northwest",
            (false, true) => "southeast",
            (false, false) => "northeast",
        })
        .collect();
    let bands: Vec<&str> = (0..config.n_links)
        .map(|li| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                config.seed,
                domains::LINK_STATIC,
                li as u64,
            ));
            if rng.random::<f64>() < 0.5 {
                "low"
            } else {
                "high"
            }
        })
        .collect();
    let (static_features, static_names) = one_hot_static(&regions, &bands);

    let realized_check = {
        // Labels before noise, recomputed from the final link views; this is
        // what calibration targeted.
        realized
    };

    let daily = DailyDataset {
        links,
        channel_meta,
        static_features: Some(static_features),
        static_names,
    };

    let ground_truth = GroundTruthRelevance {
        relevant_channels: sources.iter().map(|&(idx, _)| idx).collect(),
        relevant_timestep_from_end: 0,
        resolved_thresholds: thresholds.clone(),
    };
    let resolved_rule =
        FailureRule { thresholds: Some(thresholds), ..config.failure_rule.clone() };

    Ok(SynthOutput {
        daily,
        ground_truth,
        graph,
        stations: StationSeries { station_ids, dates, values: station_values },
        resolved_rule,
        realized_failure_rate: realized_check,
        burst_probability: burst_p,
    })
}

fn trigger_value(
    source: TriggerSource,
    link: usize,
    t: usize,
    link_base: &[Array2<f64>],
    station_base: &[Array2<f64>],
    graph: &StationGraph,
) -> f64 {
    match source {
        TriggerSource::Link { rl_row } => link_base[link][[rl_row, t]],
        TriggerSource::Station { ws_row, rank } => {
            station_base[graph.neighbor_map[link][rank]][[ws_row, t]]
        }
    }
}

fn one_hot_static(regions: &[&str], bands: &[&str]) -> (Array2<f64>, Vec<String>) {
    let region_vocab: Vec<&str> = {
        let mut v: Vec<&str> = regions.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let band_vocab: Vec<&str> = {
        let mut v: Vec<&str> = bands.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut names = Vec::new();
    for r in &region_vocab {
        names.push(format!("region={r}"));
    }
    for b in &band_vocab {
        names.push(format!("band={b}"));
    }
    let mut m = Array2::zeros((regions.len(), names.len()));
    for li in 0..regions.len() {
        let r = region_vocab.iter().position(|v| *v == regions[li]).expect("in vocab");
        let b = band_vocab.iter().position(|v| *v == bands[li]).expect("in vocab");
        m[[li, r]] = 1.0;
        m[[li, region_vocab.len() + b]] = 1.0;
    }
    (m, names)
}
