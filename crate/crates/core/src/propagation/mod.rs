//! Update gathering and shipping.
//!
//! Three stages: merge the per-thread logs into one commit-ordered final log
//! ([`merge_logs`]), resolve each entry's column partition through the
//! [`HashIndex`], and ship the entries into per-partition [`ColumnBuffer`]s
//! ([`ship`]). [`gather_and_ship`] runs one full round against a
//! [`TxnEngine`] and reports the work each stage performed so the cost model
//! can price it.

mod index;
mod merge;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::storage::{RecordKey, RowId, Value};
use crate::txn::{CommitId, TxnEngine, UpdateKind, UpdateLogEntry};

pub use index::{bucket_count, hash_key, retire_in_order, CellLocation, ColumnLocation, HashIndex, HASH_MULTIPLIER, KEYS_PER_BUCKET};
pub use merge::{merge_logs, FinalLog, MergeOutput, MERGE_FAN_IN};

/// Depth of each merge-unit input FIFO. Only affects cost accounting.
pub const FIFO_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropagationError {
    #[error("input log {log} is not sorted by commit id at entry {index}")]
    UnsortedInputLog { log: usize, index: usize },
    #[error("key {0:?} is not in the hash index")]
    KeyNotIndexed(RecordKey),
}

/// One update as it sits in a column buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedUpdate {
    pub row_id: RowId,
    /// Row position inside the target partition.
    pub offset: u64,
    pub kind: UpdateKind,
    pub value: Value,
    pub commit: CommitId,
}

/// Updates destined for one column partition, in commit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnBuffer {
    pub location: ColumnLocation,
    pub updates: Vec<BufferedUpdate>,
}

impl ColumnBuffer {
    pub fn byte_size(&self) -> u64 {
        self.updates.len() as u64 * UpdateLogEntry::BYTES
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShipOutput {
    /// Sorted by location.
    pub buffers: Vec<ColumnBuffer>,
    /// Chain nodes visited per final-log entry, in log order.
    pub probe_nodes: Vec<u32>,
}

/// Partitions the final log into column buffers.
///
/// The partition is stable: each buffer keeps final-log order.
pub fn ship(final_log: &FinalLog, index: &HashIndex) -> Result<ShipOutput, PropagationError> {
    let mut by_loc: BTreeMap<ColumnLocation, Vec<BufferedUpdate>> = BTreeMap::new();
    let mut probe_nodes = Vec::with_capacity(final_log.len());
    for e in &final_log.entries {
        let (cell, nodes) = index.lookup_column(&e.key)?;
        probe_nodes.push(nodes);
        by_loc.entry(cell.location).or_default().push(BufferedUpdate {
            row_id: e.key.row_id,
            offset: cell.offset,
            kind: e.kind,
            value: e.data,
            commit: e.commit,
        });
    }
    Ok(ShipOutput {
        buffers: by_loc.into_iter().map(|(location, updates)| ColumnBuffer { location, updates }).collect(),
        probe_nodes,
    })
}

/// Work performed by one propagation round, for the cost model.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PropagationStats {
    pub entries: usize,
    pub input_logs: usize,
    pub passes: usize,
    pub comparisons: u64,
    pub probe_nodes: Vec<u32>,
}

impl PropagationStats {
    pub fn log_bytes(&self) -> u64 {
        self.entries as u64 * UpdateLogEntry::BYTES
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationRound {
    pub final_log: FinalLog,
    pub buffers: Vec<ColumnBuffer>,
    pub stats: PropagationStats,
}

impl PropagationRound {
    /// Newest commit shipped in this round.
    pub fn watermark(&self) -> Option<CommitId> {
        self.final_log.watermark()
    }
}

/// Runs one gather-and-ship round over the engine's unshipped log entries
/// and advances the shipped watermarks. Rows inserted since the index was
/// built are registered before shipping.
pub fn gather_and_ship(engine: &mut TxnEngine, index: &mut HashIndex) -> Result<PropagationRound, PropagationError> {
    let logs: Vec<&[UpdateLogEntry]> = engine.logs().iter().map(|l| l.unshipped()).collect();
    let merged = merge_logs(&logs, engine.capacity())?;
    for e in &merged.final_log.entries {
        if e.kind == UpdateKind::Insert {
            index.register_insert(e.key)?;
        }
    }
    let shipped = ship(&merged.final_log, index)?;
    let stats = PropagationStats {
        entries: merged.final_log.len(),
        input_logs: logs.len(),
        passes: merged.passes,
        comparisons: merged.comparisons,
        probe_nodes: shipped.probe_nodes,
    };
    engine.mark_shipped(&merged.consumed);
    Ok(PropagationRound { final_log: merged.final_log, buffers: shipped.buffers, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{ColumnRef, NsmTable};
    use crate::txn::TxnOp;

    fn entry(c: u64, col: u16, row: u64) -> UpdateLogEntry {
        UpdateLogEntry { commit: CommitId(c), kind: UpdateKind::Modify, data: c as i64, key: RecordKey::new(0, row, col) }
    }

    fn index(cols: u16, rows: usize) -> HashIndex {
        let parts = [rows];
        HashIndex::build((0..cols).map(|c| (ColumnRef::new(0, c), &parts[..])).collect::<Vec<_>>())
    }

    #[test]
    fn interleaved_columns_split_stably() {
        let f = FinalLog { entries: vec![entry(1, 0, 1), entry(2, 1, 1), entry(3, 0, 2), entry(4, 1, 0)], capacity: 1024 };
        let out = ship(&f, &index(2, 4)).unwrap();
        assert_eq!(out.buffers.len(), 2);
        let commits: Vec<Vec<u64>> = out.buffers.iter().map(|b| b.updates.iter().map(|u| u.commit.0).collect()).collect();
        assert_eq!(commits, vec![vec![1, 3], vec![2, 4]]);
        assert_eq!(out.probe_nodes.len(), 4);
    }

    #[test]
    fn empty_final_log_ships_nothing() {
        let out = ship(&FinalLog::new(1024), &index(1, 4)).unwrap();
        assert!(out.buffers.is_empty());
    }

    #[test]
    fn one_column_keeps_log_order() {
        let entries: Vec<_> = (0..1024).map(|i| entry(i + 1, 0, (i * 7) % 100)).collect();
        let f = FinalLog { entries: entries.clone(), capacity: 1024 };
        let out = ship(&f, &index(1, 100)).unwrap();
        assert_eq!(out.buffers.len(), 1);
        let got: Vec<u64> = out.buffers[0].updates.iter().map(|u| u.commit.0).collect();
        let want: Vec<u64> = entries.iter().map(|e| e.commit.0).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn unindexed_key_propagates() {
        let f = FinalLog { entries: vec![entry(1, 5, 0)], capacity: 8 };
        assert!(matches!(ship(&f, &index(1, 4)), Err(PropagationError::KeyNotIndexed(_))));
    }

    #[test]
    fn excess_entries_wait_for_next_round() {
        let t = NsmTable::from_rows(0, 1, vec![vec![0]; 10]).unwrap();
        let mut eng = TxnEngine::with_capacity(vec![t], 2, 4);
        for i in 0..6 {
            eng.execute_txn_query(i % 2, &[TxnOp::Modify(RecordKey::new(0, i as u64, 0), 1)]).unwrap();
        }
        let mut idx = index(1, 10);
        let r1 = gather_and_ship(&mut eng, &mut idx).unwrap();
        assert_eq!(r1.final_log.len(), 4);
        assert_eq!(r1.watermark(), Some(CommitId(4)));
        assert_eq!(eng.pending_update_count(), 2);
        let r2 = gather_and_ship(&mut eng, &mut idx).unwrap();
        assert_eq!(r2.final_log.entries.iter().map(|e| e.commit.0).collect::<Vec<_>>(), vec![5, 6]);
        assert_eq!(eng.pending_update_count(), 0);
    }
}
