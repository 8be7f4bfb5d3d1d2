//! Lazy column snapshots for the analytical replica, plus the two baseline
//! consistency mechanisms (full-replica copies and per-tuple MVCC).
//!
//! A column's snapshot chain gains a version only when a query needs the
//! column after it changed. Queries arriving between two updates share
//! the head version. A version is dropped once no query holds it, except
//! the head.

mod full_copy;
mod mvcc;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::application::{ColumnData, ColumnSlot};
use crate::storage::ColumnRef;

pub use full_copy::{copy_time_ns, full_copy_snapshot, FullCopySnapshotter, ReplicaCopy};
pub use mvcc::{mvcc_read, MvccRead, MvccStore, TupleVersionChain};

pub type QueryId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsistencyError {
    #[error("column {0} is not registered")]
    UnknownColumn(ColumnRef),
    #[error("query {0} holds no snapshot")]
    DoubleRelease(QueryId),
    #[error("no version visible at timestamp {ts}")]
    NoVisibleVersion { ts: u64 },
    #[error("version timestamp {ts} is not newer than head {head}")]
    NonIncreasingTimestamp { ts: u64, head: u64 },
}

/// Immutable copy of one column taken at snapshot time.
#[derive(Debug, PartialEq, Eq)]
pub struct ColumnVersion {
    pub version_id: u64,
    pub column: ColumnRef,
    pub data: ColumnData,
}

#[derive(Debug)]
struct ChainNode {
    version: Arc<ColumnVersion>,
    readers: usize,
}

/// Per-column version chain, oldest first; the last node is the head.
#[derive(Debug)]
pub struct SnapshotChain {
    nodes: Vec<ChainNode>,
    dirty: bool,
    slot: Arc<ColumnSlot>,
}

impl SnapshotChain {
    pub fn head(&self) -> &Arc<ColumnVersion> {
        &self.nodes.last().expect("chain keeps its head").version
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub fn readers(&self, version_id: u64) -> Option<usize> {
        self.nodes.iter().find(|n| n.version.version_id == version_id).map(|n| n.readers)
    }
}

/// Outcome of [`SnapshotManager::acquire_snapshot`].
#[derive(Debug, Clone)]
pub struct Acquired {
    /// One version per requested column, in request order.
    pub versions: Vec<Arc<ColumnVersion>>,
    /// Versions materialized by this call.
    pub created: usize,
    /// Bytes the copy unit moved to materialize them.
    pub copied_bytes: u64,
}

#[derive(Debug, Default)]
pub struct SnapshotManager {
    chains: BTreeMap<ColumnRef, SnapshotChain>,
    held: BTreeMap<QueryId, Vec<(ColumnRef, u64)>>,
    next_version: u64,
    snapshots_created: u64,
    bytes_copied: u64,
}

fn copy_version(version_id: u64, column: ColumnRef, slot: &ColumnSlot) -> ColumnVersion {
    let cur = slot.load();
    ColumnVersion { version_id, column, data: (*cur).clone() }
}

impl SnapshotManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts tracking a column; its current main-replica content becomes
    /// the clean head version.
    pub fn register(&mut self, column: ColumnRef, slot: Arc<ColumnSlot>) {
        let id = self.next_version;
        self.next_version += 1;
        let v = Arc::new(copy_version(id, column, &slot));
        self.chains.insert(column, SnapshotChain { nodes: vec![ChainNode { version: v, readers: 0 }], dirty: false, slot });
    }

    pub fn chain(&self, column: ColumnRef) -> Option<&SnapshotChain> {
        self.chains.get(&column)
    }

    pub fn columns(&self) -> impl Iterator<Item = ColumnRef> + '_ {
        self.chains.keys().copied()
    }

    pub fn snapshots_created(&self) -> u64 {
        self.snapshots_created
    }

    pub fn bytes_copied(&self) -> u64 {
        self.bytes_copied
    }

    /// Records that the main replica of `column` changed. Never copies.
    pub fn mark_dirty(&mut self, column: ColumnRef) -> Result<(), ConsistencyError> {
        self.chains.get_mut(&column).ok_or(ConsistencyError::UnknownColumn(column))?.dirty = true;
        Ok(())
    }

    /// Pins one version of every column for `query`. Dirty columns get a
    /// fresh head copied from the main replica; clean ones share the
    /// current head. Either every column is pinned or none is.
    pub fn acquire_snapshot(&mut self, query: QueryId, columns: &[ColumnRef]) -> Result<Acquired, ConsistencyError> {
        if let Some(c) = columns.iter().find(|c| !self.chains.contains_key(c)) {
            return Err(ConsistencyError::UnknownColumn(*c));
        }
        let mut out = Acquired { versions: Vec::with_capacity(columns.len()), created: 0, copied_bytes: 0 };
        for &c in columns {
            let chain = self.chains.get_mut(&c).expect("checked above");
            if chain.dirty {
                let v = Arc::new(copy_version(self.next_version, c, &chain.slot));
                self.next_version += 1;
                out.created += 1;
                out.copied_bytes += v.data.byte_size();
                chain.nodes.push(ChainNode { version: v, readers: 0 });
                chain.dirty = false;
            }
            let head = chain.nodes.last_mut().expect("chain keeps its head");
            head.readers += 1;
            self.held.entry(query).or_default().push((c, head.version.version_id));
            out.versions.push(head.version.clone());
        }
        self.snapshots_created += out.created as u64;
        self.bytes_copied += out.copied_bytes;
        Ok(out)
    }

    /// Unpins everything `query` holds and collects non-head versions with
    /// no readers. Returns the number of versions removed.
    pub fn release_snapshot(&mut self, query: QueryId) -> Result<usize, ConsistencyError> {
        let held = self.held.remove(&query).ok_or(ConsistencyError::DoubleRelease(query))?;
        let mut removed = 0;
        for (c, vid) in held {
            let chain = self.chains.get_mut(&c).expect("held columns stay registered");
            if let Some(n) = chain.nodes.iter_mut().find(|n| n.version.version_id == vid) {
                n.readers -= 1;
            }
            let head = chain.nodes.len() - 1;
            let before = chain.nodes.len();
            let mut i = 0;
            chain.nodes.retain(|n| {
                let keep = i == head || n.readers > 0;
                i += 1;
                keep
            });
            removed += before - chain.nodes.len();
        }
        Ok(removed)
    }

    pub fn active_queries(&self) -> usize {
        self.held.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::application::apply_optimized;
    use crate::propagation::BufferedUpdate;
    use crate::storage::EncodedColumn;
    use crate::txn::{CommitId, UpdateKind};

    fn setup() -> (SnapshotManager, Arc<ColumnSlot>, ColumnRef) {
        let c = ColumnRef::new(0, 0);
        let slot = Arc::new(ColumnSlot::new(vec![EncodedColumn::encode_values(&[Some(10), Some(20), Some(30)])]));
        let mut m = SnapshotManager::new();
        m.register(c, slot.clone());
        (m, slot, c)
    }

    fn update(slot: &ColumnSlot, row: u64, v: i64) {
        let cur = slot.load();
        let u = BufferedUpdate { row_id: row, offset: row, kind: UpdateKind::Modify, value: v, commit: CommitId(1) };
        let out = apply_optimized(&cur.partitions[0], &[u]).unwrap();
        slot.publish(out.partitions);
    }

    #[test]
    fn mark_dirty_is_lazy() {
        let (mut m, slot, c) = setup();
        update(&slot, 0, 1);
        m.mark_dirty(c).unwrap();
        m.mark_dirty(c).unwrap();
        assert!(m.chain(c).unwrap().is_dirty());
        assert_eq!(m.chain(c).unwrap().len(), 1);
        assert_eq!(m.snapshots_created(), 0);
        assert_eq!(m.mark_dirty(ColumnRef::new(9, 9)), Err(ConsistencyError::UnknownColumn(ColumnRef::new(9, 9))));
    }

    #[test]
    fn clean_column_returns_head() {
        let (mut m, _, c) = setup();
        let a = m.acquire_snapshot(1, &[c]).unwrap();
        assert_eq!(a.created, 0);
        assert_eq!(a.versions[0].version_id, 0);
        assert_eq!(m.chain(c).unwrap().readers(0), Some(1));
    }

    #[test]
    fn dirty_column_gets_new_head_and_is_shared() {
        let (mut m, slot, c) = setup();
        update(&slot, 1, 15);
        m.mark_dirty(c).unwrap();
        let a = m.acquire_snapshot(1, &[c]).unwrap();
        assert_eq!(a.created, 1);
        assert!(a.copied_bytes > 0);
        assert!(!m.chain(c).unwrap().is_dirty());
        let b = m.acquire_snapshot(2, &[c]).unwrap();
        assert_eq!(b.created, 0);
        assert!(Arc::ptr_eq(&a.versions[0], &b.versions[0]));
        assert_eq!(a.versions[0].data.decode_all(), vec![Some(10), Some(15), Some(30)]);
    }

    #[test]
    fn readers_keep_their_version_across_updates() {
        let (mut m, slot, c) = setup();
        let a = m.acquire_snapshot(1, &[c]).unwrap();
        update(&slot, 0, 99);
        m.mark_dirty(c).unwrap();
        assert_eq!(a.versions[0].data.decode_all(), vec![Some(10), Some(20), Some(30)]);
        let b = m.acquire_snapshot(2, &[c]).unwrap();
        assert_eq!(b.versions[0].data.decode_all(), vec![Some(99), Some(20), Some(30)]);
    }

    #[test]
    fn gc_drops_unread_non_head() {
        let (mut m, slot, c) = setup();
        m.acquire_snapshot(1, &[c]).unwrap();
        update(&slot, 0, 5);
        m.mark_dirty(c).unwrap();
        m.acquire_snapshot(2, &[c]).unwrap();
        assert_eq!(m.chain(c).unwrap().len(), 2);
        assert_eq!(m.release_snapshot(1).unwrap(), 1);
        assert_eq!(m.chain(c).unwrap().len(), 1);
        assert_eq!(m.chain(c).unwrap().head().version_id, 1);
        // last reader of the head: head stays
        assert_eq!(m.release_snapshot(2).unwrap(), 0);
        assert_eq!(m.chain(c).unwrap().len(), 1);
        assert_eq!(m.release_snapshot(2), Err(ConsistencyError::DoubleRelease(2)));
    }

    #[test]
    fn acquire_is_all_or_nothing() {
        let (mut m, _, c) = setup();
        let bad = ColumnRef::new(3, 3);
        assert_eq!(m.acquire_snapshot(1, &[c, bad]).unwrap_err(), ConsistencyError::UnknownColumn(bad));
        assert_eq!(m.chain(c).unwrap().readers(0), Some(0));
        assert_eq!(m.active_queries(), 0);
    }
}
