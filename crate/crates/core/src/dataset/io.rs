//! TexMex `fvecs` / `bvecs` / `ivecs` readers and writers.
//!
//! Every record is a little-endian `u32` dimension followed by that many
//! values: `f32` for fvecs, `u8` for bvecs, `i32` for ivecs.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::VectorDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VecFormat {
    Fvecs,
    Bvecs,
}

impl VecFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecFormat::Fvecs),
            "bvecs" => Some(VecFormat::Bvecs),
            _ => None,
        }
    }
}

pub fn load_vectors(path: impl AsRef<Path>, format: VecFormat) -> Result<VectorDataset> {
    let f = File::open(path)?;
    read_vecs(BufReader::new(f), format)
}

/// Reads a dimension prefix, distinguishing clean EOF from a torn prefix.
fn read_dim(r: &mut impl Read) -> Result<Option<usize>> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(Error::Io(std::io::Error::new(
                    ErrorKind::UnexpectedEof,
                    "truncated dimension prefix",
                )))
            }
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(u32::from_le_bytes(buf) as usize))
}

pub fn read_vecs(mut r: impl Read, format: VecFormat) -> Result<VectorDataset> {
    let mut values = Vec::new();
    let mut d = None;
    let mut record = 0usize;
    let mut bytes = Vec::new();
    while let Some(dim) = read_dim(&mut r)? {
        match d {
            None => {
                if dim == 0 {
                    return Err(Error::Format("record 0 declares dimension 0".into()));
                }
                d = Some(dim);
            }
            Some(expected) if expected != dim => {
                return Err(Error::Format(format!(
                    "record {record} declares dimension {dim}, expected {expected}"
                )));
            }
            _ => {}
        }
        match format {
            VecFormat::Fvecs => {
                let start = values.len();
                values.resize(start + dim, 0.0f32);
                r.read_f32_into::<LittleEndian>(&mut values[start..])?;
            }
            VecFormat::Bvecs => {
                bytes.resize(dim, 0);
                r.read_exact(&mut bytes)?;
                values.extend(bytes.iter().map(|&b| b as f32));
            }
        }
        record += 1;
    }
    let d = d.ok_or_else(|| Error::Format("empty vector file".into()))?;
    VectorDataset::new(d, values)
}

pub fn write_fvecs(w: impl Write, ds: &VectorDataset) -> Result<()> {
    let mut w = BufWriter::new(w);
    for i in 0..ds.n() {
        w.write_u32::<LittleEndian>(ds.d() as u32)?;
        for &v in ds.row(i) {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Values are rounded and clamped to `0..=255`.
pub fn write_bvecs(w: impl Write, ds: &VectorDataset) -> Result<()> {
    let mut w = BufWriter::new(w);
    for i in 0..ds.n() {
        w.write_u32::<LittleEndian>(ds.d() as u32)?;
        for &v in ds.row(i) {
            w.write_u8(v.round().clamp(0.0, 255.0) as u8)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows may have different lengths.
pub fn read_ivecs(mut r: impl Read) -> Result<Vec<Vec<i32>>> {
    let mut rows = Vec::new();
    while let Some(dim) = read_dim(&mut r)? {
        let mut row = vec![0i32; dim];
        r.read_i32_into::<LittleEndian>(&mut row)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_ivecs(w: impl Write, rows: &[Vec<i32>]) -> Result<()> {
    let mut w = BufWriter::new(w);
    for row in rows {
        w.write_u32::<LittleEndian>(row.len() as u32)?;
        for &v in row {
            w.write_i32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}
