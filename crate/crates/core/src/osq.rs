//! Shared-segment packing of variable-width codes, columnar extraction, and
//! the one-bit sign index.
//!
//! A packed row is the big-endian bit string of every dimension's code
//! (`B[j]` bits, MSB first, in dimension order), zero-padded to `G · S` bits
//! with `G = ⌈b / S⌉`. Segment `k` is bits `[k·S, (k+1)·S)` of that string.
//! Segment widths are whole bytes, so a row occupies exactly `G · S / 8`
//! bytes in memory and on disk.

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::quantizer::{BitAllocation, CodeMatrix};

fn check_segment_size(s: u32) -> Result<()> {
    if s == 0 || s > 64 || !s.is_multiple_of(8) {
        return Err(Error::Encoding(format!(
            "segment size {s} must be a multiple of 8 in 8..=64"
        )));
    }
    Ok(())
}

/// Reads segment `k` of a packed row.
#[inline]
fn read_segment(row: &[u8], k: usize, seg_bytes: usize) -> u64 {
    row[k * seg_bytes..(k + 1) * seg_bytes]
        .iter()
        .fold(0u64, |acc, &b| (acc << 8) | b as u64)
}

/// Packed `n × G` segment matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMatrix {
    n: usize,
    segment_size: u32,
    segments_per_row: usize,
    bytes: Vec<u8>,
}

impl SegmentMatrix {
    pub fn from_bytes(n: usize, segment_size: u32, segments_per_row: usize, bytes: Vec<u8>) -> Result<Self> {
        check_segment_size(segment_size)?;
        if bytes.len() != n * segments_per_row * (segment_size as usize / 8) {
            return Err(Error::Format(format!(
                "{} bytes for {n} rows of {segments_per_row} segments of {segment_size} bits",
                bytes.len()
            )));
        }
        Ok(Self {
            n,
            segment_size,
            segments_per_row,
            bytes,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn segment_size(&self) -> u32 {
        self.segment_size
    }

    /// `G`.
    #[inline]
    pub fn segments_per_row(&self) -> usize {
        self.segments_per_row
    }

    #[inline]
    pub fn row_bytes(&self) -> usize {
        self.segments_per_row * self.segment_size as usize / 8
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.bytes[i * rb..(i + 1) * rb]
    }

    #[inline]
    pub fn segment(&self, i: usize, k: usize) -> u64 {
        read_segment(self.row(i), k, self.segment_size as usize / 8)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Rows `ids` only, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut bytes = Vec::with_capacity(ids.len() * self.row_bytes());
        for &i in ids {
            bytes.extend_from_slice(self.row(i));
        }
        Self {
            n: ids.len(),
            bytes,
            ..*self
        }
    }
}

struct BitWriter<'a> {
    out: &'a mut [u8],
    pos: usize,
}

impl BitWriter<'_> {
    /// Appends the low `width` bits of `value`, MSB first.
    fn put(&mut self, value: u64, width: u32) {
        for b in (0..width).rev() {
            if (value >> b) & 1 == 1 {
                self.out[self.pos / 8] |= 0x80 >> (self.pos % 8);
            }
            self.pos += 1;
        }
    }
}

pub fn pack(codes: &CodeMatrix, alloc: &BitAllocation) -> Result<SegmentMatrix> {
    check_segment_size(alloc.segment_size)?;
    if codes.d != alloc.d() {
        return Err(Error::DimensionMismatch {
            expected: alloc.d(),
            actual: codes.d,
        });
    }
    let g = alloc.segments();
    let rb = g * alloc.segment_size as usize / 8;
    let mut bytes = vec![0u8; codes.n * rb];
    for i in 0..codes.n {
        let mut w = BitWriter {
            out: &mut bytes[i * rb..(i + 1) * rb],
            pos: 0,
        };
        for (j, &c) in codes.row(i).iter().enumerate() {
            let bits = alloc.bits[j];
            if bits < 64 && c >> bits != 0 {
                return Err(Error::Encoding(format!(
                    "code {c} of row {i} dimension {j} needs more than {bits} bits"
                )));
            }
            w.put(c, bits);
        }
    }
    SegmentMatrix::from_bytes(codes.n, alloc.segment_size, g, bytes)
}

/// Part of one dimension's code stored in one segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Piece {
    pub segment: usize,
    /// Bits to discard from the segment's MSB side.
    pub skip: u32,
    pub width: u32,
    /// Left shift placing the piece in the merged code (`B[j] − bits so far − width`).
    pub residue_shift: u32,
}

/// Precomputed shift recipe for every dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractPlan {
    segment_size: u32,
    dims: Vec<Vec<Piece>>,
}

impl ExtractPlan {
    pub fn new(alloc: &BitAllocation) -> Self {
        let s = alloc.segment_size;
        let mut offset = 0u64;
        let dims = alloc
            .bits
            .iter()
            .map(|&bj| {
                let mut pieces = Vec::new();
                let mut done = 0u32;
                while done < bj {
                    let segment = (offset / s as u64) as usize;
                    let skip = (offset % s as u64) as u32;
                    let width = (s - skip).min(bj - done);
                    pieces.push(Piece {
                        segment,
                        skip,
                        width,
                        residue_shift: bj - done - width,
                    });
                    done += width;
                    offset += width as u64;
                }
                pieces
            })
            .collect();
        Self {
            segment_size: s,
            dims,
        }
    }

    pub fn pieces(&self, j: usize) -> &[Piece] {
        &self.dims[j]
    }

    /// Code of dimension `j` from one packed row: each piece is isolated with
    /// a left shift (drop leading bits) and a right shift (drop trailing
    /// bits), moved to its residue position and OR-ed in.
    #[inline]
    pub fn extract(&self, row: &[u8], j: usize) -> u64 {
        let s = self.segment_size;
        let sb = s as usize / 8;
        let mut code = 0u128;
        for p in &self.dims[j] {
            let seg = read_segment(row, p.segment, sb) as u128;
            let left = seg << (128 - s + p.skip);
            let piece = left >> (128 - p.width);
            code |= piece << p.residue_shift;
        }
        code as u64
    }
}

/// Codes of dimension `j` for every row (or only rows set in `rows`, in
/// ascending order).
pub fn extract_dim(
    segments: &SegmentMatrix,
    alloc: &BitAllocation,
    j: usize,
    rows: Option<&Bitmap>,
) -> Vec<u64> {
    let plan = ExtractPlan::new(alloc);
    match rows {
        None => (0..segments.n()).map(|i| plan.extract(segments.row(i), j)).collect(),
        Some(sel) => sel.iter_ones().map(|i| plan.extract(segments.row(i), j)).collect(),
    }
}

/// Unpacks every dimension of every row.
pub fn unpack(segments: &SegmentMatrix, alloc: &BitAllocation) -> CodeMatrix {
    let plan = ExtractPlan::new(alloc);
    let d = alloc.d();
    let mut codes = Vec::with_capacity(segments.n() * d);
    for i in 0..segments.n() {
        let row = segments.row(i);
        codes.extend((0..d).map(|j| plan.extract(row, j)));
    }
    CodeMatrix {
        n: segments.n(),
        d,
        codes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// One or more whole segments per dimension.
    Sq,
    /// Dimensions share segments.
    Osq,
}

/// Segments per vector when each dimension is stored on its own
/// (`max(1, ⌈B[j]/S⌉)` each).
pub fn sq_segments(alloc: &BitAllocation) -> u64 {
    let s = alloc.segment_size as u64;
    alloc
        .bits
        .iter()
        .map(|&b| (b as u64).div_ceil(s).max(1))
        .sum()
}

/// Unused bits per vector under the given storage scheme.
pub fn bit_wastage(alloc: &BitAllocation, scheme: Scheme) -> u64 {
    let s = alloc.segment_size as u64;
    match scheme {
        Scheme::Sq => sq_segments(alloc) * s - alloc.total_budget(),
        Scheme::Osq => alloc.segments() as u64 * s - alloc.total_budget(),
    }
}

/// One sign bit per dimension, packed like [`SegmentMatrix`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowBitIndex {
    n: usize,
    d: usize,
    segment_size: u32,
    bytes: Vec<u8>,
}

impl LowBitIndex {
    pub fn from_bytes(n: usize, d: usize, segment_size: u32, bytes: Vec<u8>) -> Result<Self> {
        check_segment_size(segment_size)?;
        let me = Self {
            n,
            d,
            segment_size,
            bytes,
        };
        if me.bytes.len() != n * me.row_bytes() {
            return Err(Error::Format("low-bit index size mismatch".into()));
        }
        Ok(me)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// `⌈d / S⌉`.
    #[inline]
    pub fn segments_per_row(&self) -> usize {
        self.d.div_ceil(self.segment_size as usize)
    }

    #[inline]
    pub fn row_bytes(&self) -> usize {
        self.segments_per_row() * self.segment_size as usize / 8
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.bytes[i * rb..(i + 1) * rb]
    }

    pub fn segment_size(&self) -> u32 {
        self.segment_size
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut bytes = Vec::with_capacity(ids.len() * self.row_bytes());
        for &i in ids {
            bytes.extend_from_slice(self.row(i));
        }
        Self {
            n: ids.len(),
            bytes,
            ..*self
        }
    }
}

/// Sign bits of one row (`1` iff `> 0`), padded to `⌈d/S⌉` segments.
pub fn binarize(row: &[f64], segment_size: u32) -> Vec<u8> {
    let s = segment_size as usize;
    let mut out = vec![0u8; row.len().div_ceil(s) * s / 8];
    for (j, &x) in row.iter().enumerate() {
        if x > 0.0 {
            out[j / 8] |= 0x80 >> (j % 8);
        }
    }
    out
}

pub fn build_lowbit(standardized: &[f64], d: usize, segment_size: u32) -> Result<LowBitIndex> {
    check_segment_size(segment_size)?;
    if d == 0 || !standardized.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: standardized.len() % d.max(1),
        });
    }
    let n = standardized.len() / d;
    let mut bytes = Vec::with_capacity(n * d.div_ceil(segment_size as usize) * segment_size as usize / 8);
    for row in standardized.chunks_exact(d) {
        bytes.extend(binarize(row, segment_size));
    }
    LowBitIndex::from_bytes(n, d, segment_size, bytes)
}

/// Number of differing bits among the first `d` positions.
#[inline]
pub fn hamming(x: &[u8], y: &[u8], d: usize) -> u32 {
    let full = d / 8;
    let mut dist = 0u32;
    let mut xs = x[..full].chunks_exact(8);
    let mut ys = y[..full].chunks_exact(8);
    for (a, b) in (&mut xs).zip(&mut ys) {
        let a = u64::from_ne_bytes(a.try_into().unwrap());
        let b = u64::from_ne_bytes(b.try_into().unwrap());
        dist += (a ^ b).count_ones();
    }
    for (a, b) in xs.remainder().iter().zip(ys.remainder()) {
        dist += (a ^ b).count_ones();
    }
    let rem = d % 8;
    if rem != 0 {
        let mask = !(0xFFu8 >> rem);
        dist += ((x[full] ^ y[full]) & mask).count_ones();
    }
    dist
}
