//! `.fvecs` / `.ivecs` files: repeated records of a little-endian `i32`
//! dimension followed by that many 4-byte little-endian elements.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::{Metric, VectorSet};

/// Rows of 32-bit integers read from an `.ivecs` file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntRows {
    dim: usize,
    data: Vec<i32>,
}

impl IntRows {
    pub fn new(dim: usize, data: Vec<i32>) -> Result<Self> {
        if (dim == 0 && !data.is_empty()) || (dim > 0 && !data.len().is_multiple_of(dim)) {
            return Err(Error::usage("data length is not a multiple of dimension"));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }
}

fn decode_records(bytes: &[u8]) -> Result<(usize, Vec<[u8; 4]>)> {
    let mut dim: Option<usize> = None;
    let mut elems = Vec::with_capacity(bytes.len() / 4);
    let mut pos = 0usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::format(pos as u64, "truncated record header"));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::format(pos as u64, format!("invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(
                    pos as u64,
                    format!("inconsistent dimension {d}, expected {expected}"),
                ))
            }
            _ => {}
        }
        let body = pos + 4;
        let need = d * 4;
        if bytes.len() - body < need {
            return Err(Error::format(
                body as u64,
                format!(
                    "truncated record: need {need} bytes, {} left",
                    bytes.len() - body
                ),
            ));
        }
        elems.extend(
            bytes[body..body + need]
                .chunks_exact(4)
                .map(|c| <[u8; 4]>::try_from(c).unwrap()),
        );
        pos = body + need;
    }
    Ok((dim.unwrap_or(0), elems))
}

fn encode_records(dim: usize, elems: impl Iterator<Item = [u8; 4]>, rows: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(rows * (dim + 1) * 4);
    let header = (dim as i32).to_le_bytes();
    for (i, e) in elems.enumerate() {
        if i % dim == 0 {
            out.extend_from_slice(&header);
        }
        out.extend_from_slice(&e);
    }
    out
}

pub fn decode_fvecs(bytes: &[u8]) -> Result<VectorSet> {
    let (dim, elems) = decode_records(bytes)?;
    let data = elems.into_iter().map(f32::from_le_bytes).collect();
    VectorSet::new(dim, data, Metric::L2)
}

pub fn encode_fvecs(set: &VectorSet) -> Vec<u8> {
    encode_records(
        set.dim(),
        set.as_slice().iter().map(|x| x.to_le_bytes()),
        set.len(),
    )
}

pub fn decode_ivecs(bytes: &[u8]) -> Result<IntRows> {
    let (dim, elems) = decode_records(bytes)?;
    IntRows::new(dim, elems.into_iter().map(i32::from_le_bytes).collect())
}

pub fn encode_ivecs(rows: &IntRows) -> Vec<u8> {
    encode_records(
        rows.dim(),
        rows.as_slice().iter().map(|x| x.to_le_bytes()),
        rows.len(),
    )
}

/// Reads an `.fvecs` file. The returned set is tagged L2; callers that
/// want another metric retag it (see [`super::load_dataset`]).
pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorSet> {
    decode_fvecs(&fs::read(path)?)
}

pub fn write_fvecs(set: &VectorSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_fvecs(set))?;
    Ok(())
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<IntRows> {
    decode_ivecs(&fs::read(path)?)
}

pub fn write_ivecs(rows: &IntRows, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ivecs(rows))?;
    Ok(())
}
