use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::generator::SynthOutput;

/// Writes the CSV bundle consumed by the loader plus `ground_truth.json`.
///
/// Float cells use Rust's shortest round-trip formatting, so loading the
/// bundle reproduces the in-memory dataset bit for bit.
pub fn write_csv_bundle(out: &SynthOutput, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let daily = &out.daily;
    let n_rl = daily
        .channel_meta
        .iter()
        .filter(|m| m.kind == crate::data::ChannelKind::RlKpi)
        .count();

    // rl_kpi.csv: link_id,date,<kpis...>,failure
    {
        let mut w = BufWriter::new(File::create(dir.join("rl_kpi.csv"))?);
        let kpi_names: Vec<&str> =
            daily.channel_meta[..n_rl].iter().map(|m| m.name.as_str()).collect();
        writeln!(w, "link_id,date,{},failure", kpi_names.join(","))?;
        for link in &daily.links {
            for (t, date) in link.dates.iter().enumerate() {
                write!(w, "{},{}", link.link_id, date)?;
                for c in 0..n_rl {
                    write!(w, ",{}", link.values[[c, t]])?;
                }
                writeln!(w, ",{}", link.failures[t])?;
            }
        }
    }

    // ws.csv: station_id,date,hour,<channels...>; daily-resolution synthetic
    // weather is emitted as a single hour-0 observation per day.
    {
        let mut w = BufWriter::new(File::create(dir.join("ws.csv"))?);
        let ws_names = [
            "temperature",
            "precipitation",
            "humidity",
            "wind_speed",
            "pressure",
            "dew_point",
            "cloud_cover",
            "visibility",
            "snow_depth",
        ];
        writeln!(w, "station_id,date,hour,{}", ws_names.join(","))?;
        for (si, station) in out.stations.station_ids.iter().enumerate() {
            for (t, date) in out.stations.dates.iter().enumerate() {
                write!(w, "{station},{date},0")?;
                for c in 0..ws_names.len() {
                    write!(w, ",{}", out.stations.values[si][[c, t]])?;
                }
                writeln!(w)?;
            }
        }
    }

    // static.csv: decode the one-hot rows back to category strings.
    {
        let mut w = BufWriter::new(File::create(dir.join("static.csv"))?);
        let groups = column_groups(&daily.static_names);
        let headers: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
        writeln!(w, "link_id,{}", headers.join(","))?;
        if let Some(rows) = &daily.static_features {
            for (li, link) in daily.links.iter().enumerate() {
                write!(w, "{}", link.link_id)?;
                for (_, cols) in &groups {
                    let hot = cols
                        .iter()
                        .find(|&&c| rows[[li, c]] == 1.0)
                        .expect("one-hot row has a set bit per group");
                    let value = daily.static_names[*hot].split_once('=').expect("col=value").1;
                    write!(w, ",{value}")?;
                }
                writeln!(w)?;
            }
        }
    }

    // distances.csv: all link-station pairs.
    {
        let mut w = BufWriter::new(File::create(dir.join("distances.csv"))?);
        writeln!(w, "link_id,station_id,distance_km")?;
        for (li, link) in daily.links.iter().enumerate() {
            for (si, station) in out.stations.station_ids.iter().enumerate() {
                writeln!(w, "{},{},{}", link.link_id, station, out.graph.distance(li, si))?;
            }
        }
    }

    let gt = GroundTruthFile {
        trigger_channels: &out.resolved_rule.trigger_channels,
        thresholds: out.resolved_rule.thresholds.as_deref().unwrap_or(&[]),
        combination: format!("{:?}", out.resolved_rule.combination).to_lowercase(),
        noise_flip_prob: out.resolved_rule.noise_flip_prob,
        relevant_channel_indices: &out.ground_truth.relevant_channels,
        relevant_timestep_from_end: out.ground_truth.relevant_timestep_from_end,
        realized_failure_rate: out.realized_failure_rate,
        burst_probability: out.burst_probability,
    };
    let json = serde_json::to_string_pretty(&gt).expect("serializable");
    std::fs::write(dir.join("ground_truth.json"), json + "\n")?;
    Ok(())
}

/// Groups one-hot column indices by their `col=` prefix, preserving order.
fn column_groups(names: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let col = name.split_once('=').map(|(c, _)| c).unwrap_or(name);
        match groups.last_mut() {
            Some((g, idx)) if g == col => idx.push(i),
            _ => groups.push((col.to_string(), vec![i])),
        }
    }
    groups
}

#[derive(Serialize)]
struct GroundTruthFile<'a> {
    trigger_channels: &'a [String],
    thresholds: &'a [f64],
    combination: String,
    noise_flip_prob: f64,
    relevant_channel_indices: &'a [usize],
    relevant_timestep_from_end: usize,
    realized_failure_rate: f64,
    burst_probability: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, SchemaConfig};
    use crate::synth::{generate, SynthConfig};
    use tempfile::TempDir;

    #[test]
    fn csv_bundle_roundtrips_exactly() {
        let mut config = SynthConfig::desk_default(13);
        config.n_links = 6;
        config.n_days = 60;
        config.n_stations = 4;
        config.k_neighbors = 2;
        config.target_failure_rate = 0.02;
        let out = generate(&config).unwrap();

        let dir = TempDir::new().unwrap();
        write_csv_bundle(&out, dir.path()).unwrap();

        let schema = SchemaConfig::ran_default().with_ws_attach(2);
        let loaded = load_dataset(
            &dir.path().join("rl_kpi.csv"),
            &dir.path().join("ws.csv"),
            Some(&dir.path().join("static.csv")),
            &dir.path().join("distances.csv"),
            &schema,
        )
        .unwrap();

        assert_eq!(loaded.channel_meta, out.daily.channel_meta);
        assert_eq!(loaded.static_names, out.daily.static_names);
        assert_eq!(loaded.links.len(), out.daily.links.len());
        for (a, b) in loaded.links.iter().zip(&out.daily.links) {
            assert_eq!(a.link_id, b.link_id);
            assert_eq!(a.dates, b.dates);
            assert_eq!(a.failures, b.failures);
            assert_eq!(a.values, b.values, "link {} values drifted", a.link_id);
        }
        assert_eq!(
            loaded.static_features.as_ref().unwrap(),
            out.daily.static_features.as_ref().unwrap()
        );
        assert!(dir.path().join("ground_truth.json").exists());
    }
}
