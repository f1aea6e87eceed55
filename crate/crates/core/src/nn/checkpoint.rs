//! Model checkpoint file: an 8-byte magic, a length-prefixed JSON header
//! (spec, norm stats, parameter count, seed, train log, tensor directory),
//! then one tensor block per named weight in directory order. Weights are
//! stored at `f32` precision; a load-save cycle is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::tensor_io;

use super::network::{EpochRecord, TrainedModel};
use super::params::NetParams;
use super::spec::ModelSpec;
use super::{NnError, Result};

const MAGIC: &[u8; 8] = b"PRTHCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    norm_stats: NormStats,
    param_count: usize,
    seed: u64,
    train_log: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let tensors = model.params.tensors();
    let header = Header {
        format_version: FORMAT_VERSION,
        spec: model.spec.clone(),
        norm_stats: model.norm_stats.clone(),
        param_count: model.param_count,
        seed: model.seed,
        train_log: model.train_log.clone(),
        tensors: tensors
            .iter()
            .map(|(name, dims, _)| TensorEntry { name: name.clone(), dims: dims.clone() })
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for (_, dims, data) in &tensors {
        let f32s: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        tensor_io::write_block(&mut w, dims, &f32s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!(
            "bad checkpoint magic in {}",
            path.display()
        )));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header =
        serde_json::from_slice(&header_json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.format_version
        )));
    }
    header.spec.validate()?;

    let mut params = NetParams::zeros_like(&header.spec);
    for ((name, data), entry) in params.tensors_mut().into_iter().zip(&header.tensors) {
        if name != entry.name {
            return Err(NnError::Checkpoint(format!(
                "tensor order mismatch: expected {name}, header has {}",
                entry.name
            )));
        }
        let (dims, values) = tensor_io::read_block(&mut r)?;
        if dims != entry.dims || values.len() != data.len() {
            return Err(NnError::Checkpoint(format!("tensor {name} has dims {dims:?}")));
        }
        for (dst, src) in data.iter_mut().zip(values) {
            *dst = f64::from(src);
        }
    }
    if params.param_count() != header.param_count {
        return Err(NnError::Checkpoint(format!(
            "parameter count mismatch: weights {} vs header {}",
            params.param_count(),
            header.param_count
        )));
    }
    Ok(TrainedModel::new(
        header.spec,
        params,
        header.norm_stats,
        header.train_log,
        header.seed,
    ))
}
