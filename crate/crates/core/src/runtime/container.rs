//! Simulated function containers and data retention across invocations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_filter::AttributeQIndex;
use crate::index::{CoarseIndex, Manifest, PartitionIndex};

/// Which function a container runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionId {
    Coordinator,
    Allocator,
    Processor(usize),
}

/// Identity of retained index data: the index version plus, for processors,
/// the partition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataKey {
    pub version: String,
    pub partition: Option<usize>,
}

/// Everything an allocator needs to filter and select partitions.
#[derive(Debug)]
pub struct AllocatorData {
    pub manifest: Manifest,
    pub coarse: CoarseIndex,
    pub attributes: AttributeQIndex,
}

#[derive(Clone, Debug)]
pub enum Retained {
    Allocator(Arc<AllocatorData>),
    Processor(Arc<PartitionIndex>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fetch {
    Warm,
    Cold,
}

/// One container. The retained slot survives between invocations.
#[derive(Debug)]
pub struct RuntimeContainer {
    pub id: u64,
    pub function: FunctionId,
    pub slot: usize,
    pub invocations: u64,
    retained: Option<(DataKey, Retained)>,
}

impl RuntimeContainer {
    pub fn new(id: u64, function: FunctionId, slot: usize) -> Self {
        Self {
            id,
            function,
            slot,
            invocations: 0,
            retained: None,
        }
    }

    /// True once the container has served an invocation.
    pub fn is_warm(&self) -> bool {
        self.invocations > 0
    }

    pub fn retained_key(&self) -> Option<&DataKey> {
        self.retained.as_ref().map(|(k, _)| k)
    }
}

fn check_identity(function: FunctionId, key: &DataKey) -> Result<()> {
    match (function, key.partition) {
        (FunctionId::Allocator, None) => Ok(()),
        (FunctionId::Processor(p), Some(q)) if p == q => Ok(()),
        _ => Err(Error::Contract(format!(
            "{function:?} container cannot retain data for partition {:?}",
            key.partition
        ))),
    }
}

/// Returns the retained payload for `key`, loading and retaining it on a
/// miss. A payload under any other key is replaced.
pub fn dre_fetch<F>(container: &mut RuntimeContainer, key: &DataKey, loader: F) -> Result<(Retained, Fetch)>
where
    F: FnOnce() -> Result<Retained>,
{
    check_identity(container.function, key)?;
    if let Some((k, data)) = &container.retained {
        if k == key {
            return Ok((data.clone(), Fetch::Warm));
        }
    }
    let data = loader()?;
    let kind_ok = matches!(
        (&data, container.function),
        (Retained::Allocator(_), FunctionId::Allocator) | (Retained::Processor(_), FunctionId::Processor(_))
    );
    if !kind_ok {
        return Err(Error::Contract("loaded payload does not match the container function".into()));
    }
    container.retained = Some((key.clone(), data.clone()));
    Ok((data, Fetch::Cold))
}

/// Registry of containers keyed by function and routing slot. Holding a
/// container's lock is owning it for one invocation.
type Registry = HashMap<(FunctionId, usize), Arc<Mutex<RuntimeContainer>>>;

#[derive(Debug, Default)]
pub struct ContainerPool {
    containers: Mutex<Registry>,
    next_id: AtomicU64,
}

impl ContainerPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// The container serving `(function, slot)`, created fresh if absent.
    pub fn container(&self, function: FunctionId, slot: usize) -> Arc<Mutex<RuntimeContainer>> {
        let mut map = self.containers.lock().expect("container registry");
        map.entry((function, slot))
            .or_insert_with(|| {
                let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                Arc::new(Mutex::new(RuntimeContainer::new(id, function, slot)))
            })
            .clone()
    }

    pub fn len(&self) -> usize {
        self.containers.lock().expect("container registry").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every container, so the next invocations start cold.
    pub fn clear(&self) {
        self.containers.lock().expect("container registry").clear();
    }
}
