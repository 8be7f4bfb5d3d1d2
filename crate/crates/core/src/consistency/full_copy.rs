//! Whole-replica snapshots for the SI-SS baseline.

use std::sync::Arc;

use crate::application::ColumnData;

/// A deep copy of every column of the analytical replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaCopy {
    pub columns: Vec<ColumnData>,
    pub bytes: u64,
}

/// Copies every code vector so the snapshot shares no storage with the
/// live replica.
pub fn full_copy_snapshot(replica: &[Arc<ColumnData>]) -> ReplicaCopy {
    let columns: Vec<ColumnData> = replica
        .iter()
        .map(|c| ColumnData {
            version: c.version,
            partitions: c
                .partitions
                .iter()
                .map(|p| crate::storage::EncodedColumn::new(p.codes.as_ref().clone(), Arc::new((*p.dict).clone())))
                .collect(),
        })
        .collect();
    let bytes = columns.iter().map(ColumnData::byte_size).sum();
    ReplicaCopy { columns, bytes }
}

/// Transfer time of `bytes` over a channel of `bw` bytes/ns.
pub fn copy_time_ns(bytes: u64, bw: f64) -> f64 {
    bytes as f64 / bw
}

/// Takes a full copy per analytical query, skipping it when nothing
/// changed since the previous copy.
#[derive(Debug, Clone, Default)]
pub struct FullCopySnapshotter {
    dirty: bool,
    taken: u64,
    bytes: u64,
}

impl FullCopySnapshotter {
    pub fn new() -> Self {
        // the first query always copies
        FullCopySnapshotter { dirty: true, taken: 0, bytes: 0 }
    }

    pub fn mark_dirty(&mut self) {
        self.dirty = true;
    }

    /// Bytes to charge for a snapshot of a replica of `replica_bytes`.
    pub fn snapshot_if_dirty(&mut self, replica_bytes: u64) -> Option<u64> {
        if !self.dirty {
            return None;
        }
        self.dirty = false;
        self.taken += 1;
        self.bytes += replica_bytes;
        Some(replica_bytes)
    }

    pub fn snapshots_taken(&self) -> u64 {
        self.taken
    }

    pub fn bytes_copied(&self) -> u64 {
        self.bytes
    }
}
