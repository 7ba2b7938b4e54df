//! Full-precision vector stores used for refinement.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;
use std::sync::{Arc, Mutex};

use byteorder::{ByteOrder, LittleEndian};

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

/// Random access to full-precision vectors by global id.
pub trait VectorStore: Send + Sync {
    fn d(&self) -> usize;

    fn read(&self, id: u32, out: &mut [f32]) -> Result<()>;

    /// Bytes moved by one [`VectorStore::read`].
    fn record_bytes(&self) -> usize {
        self.d() * 4
    }
}

/// Store backed by an in-memory dataset with ids `0..n`.
#[derive(Clone, Debug)]
pub struct MemVectorStore {
    ds: Arc<VectorDataset>,
}

impl MemVectorStore {
    pub fn new(ds: Arc<VectorDataset>) -> Result<Self> {
        if !ds.has_identity_ids() {
            return Err(Error::Config("vector store expects ids 0..n in row order".into()));
        }
        Ok(Self { ds })
    }
}

impl VectorStore for MemVectorStore {
    fn d(&self) -> usize {
        self.ds.d()
    }

    fn read(&self, id: u32, out: &mut [f32]) -> Result<()> {
        if id as usize >= self.ds.n() {
            return Err(Error::Format(format!("vector id {id} out of range")));
        }
        out.copy_from_slice(self.ds.row(id as usize));
        Ok(())
    }
}

/// Fixed-stride file of little-endian `f32`; record `id` starts at byte
/// `id · d · 4`.
#[derive(Debug)]
pub struct FileVectorStore {
    d: usize,
    n: usize,
    file: Mutex<File>,
}

impl FileVectorStore {
    pub fn open(path: impl AsRef<Path>, d: usize) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len() as usize;
        if d == 0 || !len.is_multiple_of(d * 4) {
            return Err(Error::Format(format!(
                "vector store of {len} bytes is not a whole number of {d}-dim records"
            )));
        }
        Ok(Self {
            d,
            n: len / (d * 4),
            file: Mutex::new(file),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl VectorStore for FileVectorStore {
    fn d(&self) -> usize {
        self.d
    }

    fn read(&self, id: u32, out: &mut [f32]) -> Result<()> {
        if id as usize >= self.n {
            return Err(Error::Format(format!("vector id {id} out of range")));
        }
        let mut buf = vec![0u8; self.d * 4];
        {
            let mut f = self.file.lock().expect("vector store lock");
            f.seek(SeekFrom::Start((id as u64) * (self.d as u64) * 4))?;
            f.read_exact(&mut buf)?;
        }
        LittleEndian::read_f32_into(&buf, out);
        Ok(())
    }
}
