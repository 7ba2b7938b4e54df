//! Index build pipeline and on-disk artifacts.
//!
//! A built index directory holds:
//!
//! - `manifest.json`: parameters, centroids, threshold, file names and a
//!   content version string;
//! - `residency.bin`: the per-partition residency bitmaps;
//! - `attributes.bin`: the quantized attribute index;
//! - `partition_NNNN.bin`: one OSQ index per partition (see [`format`]);
//! - `vectors.f32`: full-precision vectors, `id · d · 4` byte stride.
//!
//! Every file is a deterministic function of the inputs and parameters.

pub mod format;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitmap::Bitmap;
use crate::dataset::{AttributeTable, VectorDataset};
use crate::error::{Error, Result};
use crate::hybrid_filter::AttributeQIndex;
use crate::osq::{binarize, build_lowbit, pack, LowBitIndex, SegmentMatrix};
use crate::par::{self, Exec};
use crate::partitioner::{balanced_partition, compute_threshold, PartitionSet, ThresholdModel};
use crate::quantizer::{
    allocate_bits, design_quantizers, quantize, quantize_attributes, AttrQuantConfig,
    BitAllocation, QuantBoundaries, MAX_ALLOCATED_BITS,
};
use crate::transform::{apply_klt, fit_klt, standardize, KltModel, StandardizeModel};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESIDENCY_FILE: &str = "residency.bin";
pub const ATTRIBUTES_FILE: &str = "attributes.bin";
pub const VECTORS_FILE: &str = "vectors.f32";
const RESIDENCY_MAGIC: &[u8; 4] = b"OSQR";

pub fn partition_file_name(p: usize) -> String {
    format!("partition_{p:04}.bin")
}

/// Build-time parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildParams {
    /// Number of coarse partitions `P`.
    pub partitions: usize,
    /// Capacity slack of the balanced partitioner.
    pub slack: f64,
    pub seed: u64,
    /// Segment width `S` in bits.
    pub segment_size: u32,
    /// Bits per vector `b`; `None` means `4 · d`.
    pub bit_budget: Option<u32>,
    pub beta: f64,
    /// Replaces the fitted threshold `T`.
    pub threshold_override: Option<f64>,
    pub attributes: AttrQuantConfig,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            partitions: 10,
            slack: 0.05,
            seed: 42,
            segment_size: 8,
            bit_budget: None,
            beta: 0.001,
            threshold_override: None,
            attributes: AttrQuantConfig::default(),
        }
    }
}

impl BuildParams {
    pub fn budget_for(&self, d: usize) -> u32 {
        self.bit_budget.unwrap_or(4 * d as u32)
    }
}

/// OSQ index of one partition. Rows are ordered by ascending global id.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionIndex {
    pub id: usize,
    pub global_ids: Vec<u32>,
    pub klt: KltModel,
    pub standardize: StandardizeModel,
    pub alloc: BitAllocation,
    pub quantizers: QuantBoundaries,
    pub segments: SegmentMatrix,
    pub lowbit: LowBitIndex,
}

impl PartitionIndex {
    #[inline]
    pub fn n(&self) -> usize {
        self.global_ids.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.alloc.d()
    }

    /// Query in this partition's rotated space.
    pub fn transform_query(&self, q: &[f32]) -> Vec<f64> {
        self.klt.transform(q)
    }

    /// Sign bits of the standardized rotated query.
    pub fn query_bits(&self, y: &[f64]) -> Vec<u8> {
        let mut z = vec![0.0; y.len()];
        self.standardize.apply_into(y, &mut z);
        for (zj, &flat) in z.iter_mut().zip(&self.standardize.zero_variance) {
            if flat {
                *zj = 0.0;
            }
        }
        binarize(&z, self.alloc.segment_size)
    }
}

/// Builds the OSQ index for the rows `members` (ascending global ids).
pub fn build_partition(
    exec: Exec,
    id: usize,
    ds: &VectorDataset,
    members: &[u32],
    budget: u32,
    segment_size: u32,
) -> Result<PartitionIndex> {
    let d = ds.d();
    if members.is_empty() {
        return Err(Error::InsufficientData(format!("partition {id} is empty")));
    }
    let mut rows = Vec::with_capacity(members.len() * d);
    for &g in members {
        rows.extend_from_slice(ds.row(g as usize));
    }
    let klt = if members.len() >= 2 {
        fit_klt(exec, &rows, d)?
    } else {
        let mut m = KltModel::identity(d);
        m.mean = rows.iter().map(|&x| x as f64).collect();
        m
    };
    let y = apply_klt(exec, &klt, &rows, d)?;
    let n = members.len();
    let mut variances = vec![0.0f64; d];
    let mut means = vec![0.0f64; d];
    for row in y.chunks_exact(d) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    for row in y.chunks_exact(d) {
        for ((var, v), m) in variances.iter_mut().zip(row).zip(&means) {
            *var += (v - m) * (v - m);
        }
    }
    // flat dimensions still take bits once every other dimension is saturated
    let variances: Vec<f64> = variances
        .iter()
        .map(|v| (v / n as f64).max(f64::MIN_POSITIVE))
        .collect();
    let alloc = allocate_bits(&variances, budget, segment_size)?;
    let quantizers = design_quantizers(exec, &y, &alloc)?;
    let codes = quantize(exec, &y, &quantizers)?;
    let segments = pack(&codes, &alloc)?;
    let (standardize, z) = standardize(&y, d)?;
    let lowbit = build_lowbit(&z, d, segment_size)?;
    Ok(PartitionIndex {
        id,
        global_ids: members.to_vec(),
        klt,
        standardize,
        alloc,
        quantizers,
        segments,
        lowbit,
    })
}

/// Partition routing data: everything an allocator needs to pick partitions
/// and build local candidate bitmaps.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseIndex {
    pub partitions: PartitionSet,
    /// `P_V[p]` over global ids.
    pub residency: Vec<Bitmap>,
    /// Global id → row inside its partition.
    pub local_rows: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl CoarseIndex {
    pub fn new(partitions: PartitionSet) -> Self {
        Self {
            residency: partitions.residency(),
            local_rows: partitions.local_rows(),
            sizes: partitions.sizes(),
            partitions,
        }
    }

    pub fn p(&self) -> usize {
        self.partitions.p()
    }

    pub fn n(&self) -> usize {
        self.partitions.n()
    }
}

/// Complete in-memory index.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridIndex {
    pub params: BuildParams,
    pub version: String,
    pub coarse: CoarseIndex,
    pub threshold: ThresholdModel,
    pub attributes: AttributeQIndex,
    pub parts: Vec<PartitionIndex>,
}

impl HybridIndex {
    pub fn d(&self) -> usize {
        self.coarse.partitions.d
    }

    pub fn n(&self) -> usize {
        self.coarse.n()
    }

    /// `T` used for partition selection.
    pub fn t(&self) -> f64 {
        self.params.threshold_override.unwrap_or(self.threshold.t)
    }
}

/// Partitions, rotates, quantizes and packs `ds`; quantizes `attrs`.
/// Dataset ids must be `0..n` in row order.
pub fn build(exec: Exec, ds: &VectorDataset, attrs: &AttributeTable, params: &BuildParams) -> Result<HybridIndex> {
    if !ds.has_identity_ids() {
        return Err(Error::Config("index build expects ids 0..n in row order".into()));
    }
    if attrs.n() != ds.n() {
        return Err(Error::Format(format!(
            "{} attribute rows for {} vectors",
            attrs.n(),
            ds.n()
        )));
    }
    let d = ds.d();
    let budget = params.budget_for(d);
    if budget as u64 > d as u64 * MAX_ALLOCATED_BITS as u64 {
        return Err(Error::Config(format!(
            "bit budget {budget} exceeds {MAX_ALLOCATED_BITS} bits per dimension"
        )));
    }
    let set = balanced_partition(exec, ds, params.partitions, params.slack, params.seed)?;
    let threshold = compute_threshold(exec, ds, &set, params.beta)?;
    let attributes = quantize_attributes(exec, attrs, params.attributes)?;
    let coarse = CoarseIndex::new(set);
    let members: Vec<Vec<u32>> = (0..coarse.p()).map(|p| coarse.partitions.members(p)).collect();
    let parts = par::map_range(exec, coarse.p(), |p| {
        build_partition(exec, p, ds, &members[p], budget, params.segment_size)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut index = HybridIndex {
        params: params.clone(),
        version: String::new(),
        coarse,
        threshold,
        attributes,
        parts,
    };
    index.version = content_version(&index)?;
    Ok(index)
}

fn content_version(index: &HybridIndex) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&index.params)?);
    for c in &index.coarse.partitions.centroids {
        h.update(c.to_le_bytes());
    }
    h.update(format::encode_attributes(&index.attributes)?);
    for p in &index.parts {
        h.update(format::encode_partition(p)?);
    }
    let digest = h.finalize();
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// `manifest.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub version: String,
    pub n: usize,
    pub d: usize,
    pub params: BuildParams,
    pub threshold: ThresholdModel,
    /// `P × d`, row-major.
    pub centroids: Vec<f64>,
    pub partition_sizes: Vec<usize>,
    pub partition_files: Vec<String>,
    pub residency_file: String,
    pub attributes_file: String,
    pub vectors_file: String,
    pub klt_applied: bool,
}

impl Manifest {
    pub fn p(&self) -> usize {
        self.partition_files.len()
    }

    pub fn t(&self) -> f64 {
        self.params.threshold_override.unwrap_or(self.threshold.t)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes)?;
        if m.format_version != format::FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.format_version)));
        }
        Ok(m)
    }
}

pub fn encode_residency(residency: &[Bitmap], n: usize) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    w.write_all(RESIDENCY_MAGIC)?;
    w.write_u64::<LE>(n as u64)?;
    w.write_u32::<LE>(residency.len() as u32)?;
    for b in residency {
        for &word in b.words() {
            w.write_u64::<LE>(word)?;
        }
    }
    Ok(w)
}

pub fn decode_residency(bytes: &[u8]) -> Result<Vec<Bitmap>> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != RESIDENCY_MAGIC {
        return Err(Error::Format("not a residency file".into()));
    }
    let n = r.read_u64::<LE>()? as usize;
    let p = r.read_u32::<LE>()? as usize;
    (0..p)
        .map(|_| {
            let mut words = vec![0u64; n.div_ceil(64)];
            r.read_u64_into::<LE>(&mut words)?;
            Ok(Bitmap::from_words(n, words))
        })
        .collect()
}

/// Rebuilds the coarse index from the manifest and residency bitmaps.
pub fn coarse_from_parts(manifest: &Manifest, residency: Vec<Bitmap>) -> Result<CoarseIndex> {
    if residency.len() != manifest.p() {
        return Err(Error::Format("residency count differs from partition count".into()));
    }
    let mut assignment = vec![u32::MAX; manifest.n];
    for (p, b) in residency.iter().enumerate() {
        for g in b.iter_ones() {
            if assignment[g] != u32::MAX {
                return Err(Error::Format(format!("id {g} resides in two partitions")));
            }
            assignment[g] = p as u32;
        }
    }
    if assignment.contains(&u32::MAX) {
        return Err(Error::Format("residency bitmaps do not cover every id".into()));
    }
    let set = PartitionSet::from_assignment(manifest.d, manifest.centroids.clone(), assignment)?;
    Ok(CoarseIndex {
        local_rows: set.local_rows(),
        sizes: set.sizes(),
        residency,
        partitions: set,
    })
}

pub fn write_vector_store(path: impl AsRef<Path>, ds: &VectorDataset) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for &x in ds.values() {
        w.write_f32::<LE>(x)?;
    }
    w.flush()?;
    Ok(())
}

impl HybridIndex {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: format::FORMAT_VERSION,
            version: self.version.clone(),
            n: self.n(),
            d: self.d(),
            params: self.params.clone(),
            threshold: self.threshold.clone(),
            centroids: self.coarse.partitions.centroids.clone(),
            partition_sizes: self.coarse.sizes.clone(),
            partition_files: (0..self.parts.len()).map(partition_file_name).collect(),
            residency_file: RESIDENCY_FILE.into(),
            attributes_file: ATTRIBUTES_FILE.into(),
            vectors_file: VECTORS_FILE.into(),
            klt_applied: true,
        }
    }

    /// Writes every artifact into `dir` (created if missing), including the
    /// full-precision vector store for `ds`.
    pub fn save(&self, dir: impl AsRef<Path>, ds: &VectorDataset) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
            Ok(())
        };
        let manifest = self.manifest();
        for (p, part) in self.parts.iter().enumerate() {
            put(&manifest.partition_files[p], &format::encode_partition(part)?)?;
        }
        put(ATTRIBUTES_FILE, &format::encode_attributes(&self.attributes)?)?;
        put(RESIDENCY_FILE, &encode_residency(&self.coarse.residency, self.n())?)?;
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        put(MANIFEST_FILE, &json)?;
        let vectors = dir.join(VECTORS_FILE);
        write_vector_store(&vectors, ds)?;
        written.push(vectors);
        Ok(written)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(dir)?;
        let residency = decode_residency(&std::fs::read(dir.join(&manifest.residency_file))?)?;
        let coarse = coarse_from_parts(&manifest, residency)?;
        let attributes = format::decode_attributes(&std::fs::read(dir.join(&manifest.attributes_file))?)?;
        let parts = manifest
            .partition_files
            .iter()
            .map(|f| format::decode_partition(&std::fs::read(dir.join(f))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: manifest.params,
            version: manifest.version,
            coarse,
            threshold: manifest.threshold,
            attributes,
            parts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_attributes, synth::ClusteredModel};

    fn small() -> (VectorDataset, AttributeTable) {
        let ds = ClusteredModel::new(16, 4, 6, 1).unwrap().sample(600, 2).unwrap();
        let attrs = generate_attributes(600, 2, 3).unwrap();
        (ds, attrs)
    }

    #[test]
    fn build_save_load_round_trip() {
        let (ds, attrs) = small();
        let params = BuildParams {
            partitions: 3,
            bit_budget: Some(60),
            ..Default::default()
        };
        let mut index = build(Exec::Parallel, &ds, &attrs, &params).unwrap();
        assert_eq!(index.parts.len(), 3);
        for p in &index.parts {
            assert_eq!(p.alloc.total_budget(), 60);
            assert_eq!(p.segments.segments_per_row(), 8);
        }
        let dir = tempfile::tempdir().unwrap();
        index.save(dir.path(), &ds).unwrap();
        let back = HybridIndex::load(dir.path()).unwrap();
        // iteration costs are build diagnostics and are not persisted
        index.coarse.partitions.cost_history.clear();
        assert_eq!(back, index);
        let header = format::PartitionHeader::read(
            &std::fs::read(dir.path().join(partition_file_name(0))).unwrap()[..],
        )
        .unwrap();
        assert_eq!((header.budget, header.segments_per_row, header.d), (60, 8, 16));
    }

    #[test]
    fn build_is_deterministic_across_modes() {
        let (ds, attrs) = small();
        let params = BuildParams {
            partitions: 2,
            ..Default::default()
        };
        let a = build(Exec::Parallel, &ds, &attrs, &params).unwrap();
        let b = build(Exec::Sequential, &ds, &attrs, &params).unwrap();
        assert_eq!(a.version, b.version);
        assert_eq!(a, b);
    }
}
