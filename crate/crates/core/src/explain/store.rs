//! Saliency store: `saliency.csv` with one row per (instance, channel,
//! timestep), a `meta.json` sidecar with per-instance bookkeeping, and a
//! bulk N x C x T tensor export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::tensor_io;

use super::{ExplainError, Result, SaliencyMap};

#[derive(Debug, Serialize, Deserialize)]
struct MetaEntry {
    instance_id: String,
    base_value: f64,
    model_output: f64,
    p: usize,
    seed: u64,
}

pub fn write_saliency_store(
    dir: &Path,
    maps: &[SaliencyMap],
    channel_names: &[String],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err)?;

    let mut csv = BufWriter::new(File::create(dir.join("saliency.csv")).map_err(io_err)?);
    writeln!(csv, "instance_id,channel_name,t,phi").map_err(io_err)?;
    for map in maps {
        let (c, t) = map.phi.dim();
        if c != channel_names.len() {
            return Err(ExplainError::Shape(format!(
                "map has {c} channels, {} names given",
                channel_names.len()
            )));
        }
        for ci in 0..c {
            for ti in 0..t {
                writeln!(
                    csv,
                    "{},{},{},{}",
                    map.instance_id,
                    channel_names[ci],
                    ti,
                    map.phi[[ci, ti]]
                )
                .map_err(io_err)?;
            }
        }
    }
    csv.flush().map_err(io_err)?;

    let meta: Vec<MetaEntry> = maps
        .iter()
        .map(|m| MetaEntry {
            instance_id: m.instance_id.clone(),
            base_value: m.base_value,
            model_output: m.model_output,
            p: m.p_used,
            seed: m.seed,
        })
        .collect();
    let json = serde_json::to_string_pretty(&meta).map_err(|e| ExplainError::Store(e.to_string()))?;
    std::fs::write(dir.join("meta.json"), json + "\n").map_err(io_err)?;

    if let Some(first) = maps.first() {
        let (c, t) = first.phi.dim();
        let mut bulk = Array3::zeros((maps.len(), c, t));
        for (n, map) in maps.iter().enumerate() {
            bulk.index_axis_mut(ndarray::Axis(0), n).assign(&map.phi);
        }
        let mut w = BufWriter::new(File::create(dir.join("saliency.prth")).map_err(io_err)?);
        tensor_io::write_array3(&mut w, bulk.view())
            .map_err(|e| ExplainError::Store(e.to_string()))?;
    }
    Ok(())
}

/// Reads the store back. The CSV carries full-precision decimal floats, so
/// maps round-trip exactly; the bulk tensor is only a f32 export and is not
/// consulted here.
pub fn read_saliency_store(dir: &Path, channel_names: &[String]) -> Result<Vec<SaliencyMap>> {
    let meta_raw = std::fs::read_to_string(dir.join("meta.json")).map_err(io_err)?;
    let meta: Vec<MetaEntry> =
        serde_json::from_str(&meta_raw).map_err(|e| ExplainError::Store(e.to_string()))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(dir.join("saliency.csv"))
        .map_err(|e| ExplainError::Store(e.to_string()))?;
    // instance_id -> (channel index, t) -> phi
    let mut cells: std::collections::BTreeMap<String, Vec<(usize, usize, f64)>> =
        Default::default();
    let mut t_max = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| ExplainError::Store(e.to_string()))?;
        let id = record.get(0).unwrap_or_default().to_string();
        let channel = record.get(1).unwrap_or_default();
        let ci = channel_names.iter().position(|n| n == channel).ok_or_else(|| {
            ExplainError::Store(format!("unknown channel \"{channel}\" in saliency.csv"))
        })?;
        let ti: usize = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| ExplainError::Store("bad t".into()))?;
        let phi: f64 = record
            .get(3)
            .unwrap_or_default()
            .parse()
            .map_err(|_| ExplainError::Store("bad phi".into()))?;
        t_max = t_max.max(ti + 1);
        cells.entry(id).or_default().push((ci, ti, phi));
    }

    let mut maps = Vec::with_capacity(meta.len());
    for entry in meta {
        let rows = cells.remove(&entry.instance_id).ok_or_else(|| {
            ExplainError::Store(format!("instance {} missing from saliency.csv", entry.instance_id))
        })?;
        let mut phi = Array2::zeros((channel_names.len(), t_max));
        for (ci, ti, v) in rows {
            phi[[ci, ti]] = v;
        }
        maps.push(SaliencyMap {
            phi,
            base_value: entry.base_value,
            model_output: entry.model_output,
            instance_id: entry.instance_id,
            p_used: entry.p,
            seed: entry.seed,
        });
    }
    Ok(maps)
}

fn io_err(e: std::io::Error) -> ExplainError {
    ExplainError::Store(e.to_string())
}
