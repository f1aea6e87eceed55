//! Binary tensor file format.
//!
//! Layout: magic `"PRTH"`, version `u32`, rank `u32`, dims `u64[rank]`, then
//! row-major 32-bit little-endian floats. Values are stored as `f32` even
//! though in-memory computation uses `f64`; writing is therefore lossy at the
//! `f32` precision boundary, but a read-write cycle of an existing file is
//! byte-identical.

use std::io::{Read, Write};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PRTH";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes: expected \"PRTH\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("rank mismatch: expected {expected}, got {actual}")]
    RankMismatch { expected: usize, actual: usize },
    #[error("data length {len} does not match dims {dims:?}")]
    LengthMismatch { len: usize, dims: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, TensorIoError>;

/// Writes one tensor block: header plus row-major f32 payload.
pub fn write_block<W: Write>(w: &mut W, dims: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(TensorIoError::LengthMismatch { len: data.len(), dims: dims.to_vec() });
    }
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one tensor block written by [`write_block`].
pub fn read_block<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(TensorIoError::BadMagic(magic));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(TensorIoError::UnsupportedVersion(version));
    }
    r.read_exact(&mut buf4)?;
    let rank = u32::from_le_bytes(buf4) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8)?;
        dims.push(u64::from_le_bytes(buf8) as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut buf4)?;
        data.push(f32::from_le_bytes(buf4));
    }
    Ok((dims, data))
}

pub fn write_array2<W: Write>(w: &mut W, a: ArrayView2<'_, f64>) -> Result<()> {
    let data: Vec<f32> = a.iter().map(|&v| v as f32).collect();
    write_block(w, &[a.nrows(), a.ncols()], &data)
}

pub fn write_array3<W: Write>(w: &mut W, a: ArrayView3<'_, f64>) -> Result<()> {
    let (n, c, t) = a.dim();
    let data: Vec<f32> = a.iter().map(|&v| v as f32).collect();
    write_block(w, &[n, c, t], &data)
}

pub fn read_array2<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let (dims, data) = read_block(r)?;
    if dims.len() != 2 {
        return Err(TensorIoError::RankMismatch { expected: 2, actual: dims.len() });
    }
    let values: Vec<f64> = data.into_iter().map(f64::from).collect();
    Ok(Array2::from_shape_vec((dims[0], dims[1]), values).expect("dims match payload length"))
}

pub fn read_array3<R: Read>(r: &mut R) -> Result<Array3<f64>> {
    let (dims, data) = read_block(r)?;
    if dims.len() != 3 {
        return Err(TensorIoError::RankMismatch { expected: 3, actual: dims.len() });
    }
    let values: Vec<f64> = data.into_iter().map(f64::from).collect();
    Ok(Array3::from_shape_vec((dims[0], dims[1], dims[2]), values)
        .expect("dims match payload length"))
}
