//! Little-endian binary layouts for partition and attribute index files.
//!
//! Partition file:
//!
//! ```text
//! magic "OSQP" | u32 version | u32 partition | u64 n_p | u32 d | u32 S | u64 b | u64 G
//! allocation        d × u8 bits
//! quantizers        per dim: u32 boundary count, f64 boundaries,
//!                            u32 centroid count, f64 centroids, u8 degenerate
//! KLT               d f64 mean, d·d f64 basis (row = eigenvector), d f64 eigenvalues
//! standardization   d f64 mean, d f64 std, d u8 zero-variance flags
//! segments          u64 byte length, n_p · G · S/8 bytes
//! low-bit index     u64 byte length, n_p · ⌈d/S⌉ · S/8 bytes
//! ids               n_p u32 global ids, ascending
//! ```
//!
//! Attribute file:
//!
//! ```text
//! magic "OSQA" | u32 version | u64 n | u32 A
//! per attribute: u8 kind (0 numeric, 1 categorical), u32 cells,
//!                (cells + 1) f64 boundaries,
//!                categorical only: cells × (u32 length, UTF-8 label),
//!                n u32 codes
//! ```

use std::io::{Cursor, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::PartitionIndex;
use crate::error::{Error, Result};
use crate::hybrid_filter::AttributeQIndex;
use crate::osq::{LowBitIndex, SegmentMatrix};
use crate::quantizer::{BitAllocation, QuantBoundaries};
use crate::transform::{KltModel, StandardizeModel};

pub const PARTITION_MAGIC: &[u8; 4] = b"OSQP";
pub const ATTRIBUTE_MAGIC: &[u8; 4] = b"OSQA";
pub const FORMAT_VERSION: u32 = 1;

/// Fixed-size leading fields of a partition file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionHeader {
    pub version: u32,
    pub partition: u32,
    pub n: u64,
    pub d: u32,
    pub segment_size: u32,
    pub budget: u64,
    pub segments_per_row: u64,
}

impl PartitionHeader {
    pub const BYTES: usize = 4 + 4 + 4 + 8 + 4 + 4 + 8 + 8;

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PARTITION_MAGIC {
            return Err(Error::Format("not a partition index file".into()));
        }
        let h = Self {
            version: r.read_u32::<LE>()?,
            partition: r.read_u32::<LE>()?,
            n: r.read_u64::<LE>()?,
            d: r.read_u32::<LE>()?,
            segment_size: r.read_u32::<LE>()?,
            budget: r.read_u64::<LE>()?,
            segments_per_row: r.read_u64::<LE>()?,
        };
        if h.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", h.version)));
        }
        Ok(h)
    }
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

fn get_bools(r: &mut impl Read, n: usize) -> Result<Vec<bool>> {
    let mut v = vec![0u8; n];
    r.read_exact(&mut v)?;
    Ok(v.into_iter().map(|b| b != 0).collect())
}

fn get_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = r.read_u64::<LE>()? as usize;
    let mut v = vec![0u8; len];
    r.read_exact(&mut v)?;
    Ok(v)
}

pub fn encode_partition(p: &PartitionIndex) -> Result<Vec<u8>> {
    let d = p.d();
    let mut w = Vec::new();
    w.write_all(PARTITION_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u32::<LE>(p.id as u32)?;
    w.write_u64::<LE>(p.n() as u64)?;
    w.write_u32::<LE>(d as u32)?;
    w.write_u32::<LE>(p.alloc.segment_size)?;
    w.write_u64::<LE>(p.alloc.total_budget())?;
    w.write_u64::<LE>(p.alloc.segments() as u64)?;
    for &b in &p.alloc.bits {
        w.write_u8(b as u8)?;
    }
    for j in 0..d {
        w.write_u32::<LE>(p.quantizers.bounds[j].len() as u32)?;
        put_f64s(&mut w, &p.quantizers.bounds[j])?;
        w.write_u32::<LE>(p.quantizers.centroids[j].len() as u32)?;
        put_f64s(&mut w, &p.quantizers.centroids[j])?;
        w.write_u8(p.quantizers.degenerate[j] as u8)?;
    }
    put_f64s(&mut w, &p.klt.mean)?;
    put_f64s(&mut w, &p.klt.basis)?;
    put_f64s(&mut w, &p.klt.eigenvalues)?;
    put_f64s(&mut w, &p.standardize.mean)?;
    put_f64s(&mut w, &p.standardize.std)?;
    for &z in &p.standardize.zero_variance {
        w.write_u8(z as u8)?;
    }
    w.write_u64::<LE>(p.segments.as_bytes().len() as u64)?;
    w.write_all(p.segments.as_bytes())?;
    w.write_u64::<LE>(p.lowbit.as_bytes().len() as u64)?;
    w.write_all(p.lowbit.as_bytes())?;
    for &g in &p.global_ids {
        w.write_u32::<LE>(g)?;
    }
    Ok(w)
}

pub fn decode_partition(bytes: &[u8]) -> Result<PartitionIndex> {
    let mut r = Cursor::new(bytes);
    let h = PartitionHeader::read(&mut r)?;
    let (n, d, s) = (h.n as usize, h.d as usize, h.segment_size);
    let mut bits = vec![0u8; d];
    r.read_exact(&mut bits)?;
    let alloc = BitAllocation::new(bits.into_iter().map(u32::from).collect(), s)?;
    if alloc.total_budget() != h.budget || alloc.segments() as u64 != h.segments_per_row {
        return Err(Error::Format("allocation disagrees with header".into()));
    }
    let mut quantizers = QuantBoundaries {
        bounds: Vec::with_capacity(d),
        centroids: Vec::with_capacity(d),
        degenerate: Vec::with_capacity(d),
    };
    for _ in 0..d {
        let nb = r.read_u32::<LE>()? as usize;
        quantizers.bounds.push(get_f64s(&mut r, nb)?);
        let nc = r.read_u32::<LE>()? as usize;
        quantizers.centroids.push(get_f64s(&mut r, nc)?);
        quantizers.degenerate.push(r.read_u8()? != 0);
    }
    let klt = KltModel {
        mean: get_f64s(&mut r, d)?,
        basis: get_f64s(&mut r, d * d)?,
        eigenvalues: get_f64s(&mut r, d)?,
    };
    let standardize = StandardizeModel {
        mean: get_f64s(&mut r, d)?,
        std: get_f64s(&mut r, d)?,
        zero_variance: get_bools(&mut r, d)?,
    };
    let segments = SegmentMatrix::from_bytes(n, s, alloc.segments(), get_bytes(&mut r)?)?;
    let lowbit = LowBitIndex::from_bytes(n, d, s, get_bytes(&mut r)?)?;
    let mut global_ids = vec![0u32; n];
    r.read_u32_into::<LE>(&mut global_ids)?;
    if (r.position() as usize) != bytes.len() {
        return Err(Error::Format("trailing bytes in partition file".into()));
    }
    Ok(PartitionIndex {
        id: h.partition as usize,
        global_ids,
        klt,
        standardize,
        alloc,
        quantizers,
        segments,
        lowbit,
    })
}

pub fn encode_attributes(aq: &AttributeQIndex) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    w.write_all(ATTRIBUTE_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u64::<LE>(aq.n() as u64)?;
    w.write_u32::<LE>(aq.a_count() as u32)?;
    for a in 0..aq.a_count() {
        let labels = aq.labels(a);
        w.write_u8(labels.is_some() as u8)?;
        w.write_u32::<LE>(aq.cells(a) as u32)?;
        put_f64s(&mut w, &aq.bounds(a))?;
        if let Some(labels) = labels {
            for l in labels {
                w.write_u32::<LE>(l.len() as u32)?;
                w.write_all(l.as_bytes())?;
            }
        }
        for &c in aq.codes(a) {
            w.write_u32::<LE>(c)?;
        }
    }
    Ok(w)
}

pub fn decode_attributes(bytes: &[u8]) -> Result<AttributeQIndex> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ATTRIBUTE_MAGIC {
        return Err(Error::Format("not an attribute index file".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = r.read_u64::<LE>()? as usize;
    let a_count = r.read_u32::<LE>()? as usize;
    let (mut bounds, mut codes, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..a_count {
        let categorical = r.read_u8()? != 0;
        let cells = r.read_u32::<LE>()? as usize;
        bounds.push(get_f64s(&mut r, cells + 1)?);
        if categorical {
            let mut ls = Vec::with_capacity(cells);
            for _ in 0..cells {
                let len = r.read_u32::<LE>()? as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                ls.push(String::from_utf8(buf).map_err(|_| Error::Format("label is not UTF-8".into()))?);
            }
            labels.push(Some(ls));
        } else {
            labels.push(None);
        }
        let mut c = vec![0u32; n];
        r.read_u32_into::<LE>(&mut c)?;
        codes.push(c);
    }
    AttributeQIndex::from_parts(n, bounds, codes, labels)
}
