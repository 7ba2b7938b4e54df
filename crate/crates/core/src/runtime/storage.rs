//! Object storage holding index artifacts, with GET accounting.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{
    encode_residency, format, HybridIndex, Manifest, ATTRIBUTES_FILE, MANIFEST_FILE, RESIDENCY_FILE,
};

/// Whole-object reads by key.
pub trait ObjectStore: Send + Sync {
    fn get(&self, key: &str) -> Result<Vec<u8>>;

    /// GETs served so far.
    fn gets(&self) -> u64;
}

/// Objects are files under a directory.
#[derive(Debug)]
pub struct DirObjectStore {
    root: PathBuf,
    gets: AtomicU64,
}

impl DirObjectStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            gets: AtomicU64::new(0),
        }
    }
}

impl ObjectStore for DirObjectStore {
    fn get(&self, key: &str) -> Result<Vec<u8>> {
        if key.contains("..") || key.starts_with('/') {
            return Err(Error::Config(format!("object key {key:?} escapes the store")));
        }
        self.gets.fetch_add(1, Ordering::Relaxed);
        let path = self.root.join(key);
        std::fs::read(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    }

    fn gets(&self) -> u64 {
        self.gets.load(Ordering::Relaxed)
    }
}

/// In-memory objects.
#[derive(Debug, Default)]
pub struct MemObjectStore {
    objects: HashMap<String, Arc<Vec<u8>>>,
    gets: AtomicU64,
}

impl MemObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, bytes: Vec<u8>) {
        self.objects.insert(key.into(), Arc::new(bytes));
    }

    /// Every index artifact of `index` under its file name.
    pub fn from_index(index: &HybridIndex) -> Result<Self> {
        let mut s = Self::new();
        let manifest: Manifest = index.manifest();
        for (p, part) in index.parts.iter().enumerate() {
            s.put(manifest.partition_files[p].clone(), format::encode_partition(part)?);
        }
        s.put(ATTRIBUTES_FILE, format::encode_attributes(&index.attributes)?);
        s.put(RESIDENCY_FILE, encode_residency(&index.coarse.residency, index.n())?);
        s.put(MANIFEST_FILE, serde_json::to_vec(&manifest)?);
        Ok(s)
    }
}

impl ObjectStore for MemObjectStore {
    fn get(&self, key: &str) -> Result<Vec<u8>> {
        self.gets.fetch_add(1, Ordering::Relaxed);
        self.objects
            .get(key)
            .map(|b| b.as_ref().clone())
            .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, key.to_string())))
    }

    fn gets(&self) -> u64 {
        self.gets.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_gets() {
        let mut s = MemObjectStore::new();
        s.put("a", vec![1, 2]);
        assert_eq!(s.get("a").unwrap(), vec![1, 2]);
        assert!(s.get("b").is_err());
        assert_eq!(s.gets(), 2);
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), b"hi").unwrap();
        let d = DirObjectStore::new(dir.path());
        assert_eq!(d.get("x").unwrap(), b"hi");
        assert!(d.get("../x").is_err());
        assert_eq!(d.gets(), 1);
    }
}
