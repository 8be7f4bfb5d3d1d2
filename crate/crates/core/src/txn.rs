//! Row-store transactional engine.
//!
//! Queries are single-statement batches of reads and writes. Every batch
//! that writes gets one commit id from a global counter, and every written
//! cell is appended to the issuing thread's update log. The logs are the
//! only channel through which the analytical side learns about changes.

use thiserror::Error;

use crate::storage::{ColumnId, NsmTable, RecordKey, RowId, StorageError, TableId, Value};

/// Default number of pending log entries that triggers propagation.
pub const DEFAULT_LOG_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UpdateKind {
    Insert,
    Delete,
    Modify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CommitId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateLogEntry {
    pub commit: CommitId,
    pub kind: UpdateKind,
    pub data: Value,
    pub key: RecordKey,
}

impl UpdateLogEntry {
    /// Bytes one entry occupies in memory (commit, kind, data, key).
    pub const BYTES: u64 = 32;
}

/// Append-only log owned by one transactional thread.
#[derive(Debug, Clone, Default)]
pub struct ThreadUpdateLog {
    pub thread_id: usize,
    pub entries: Vec<UpdateLogEntry>,
    /// Entries before this index were already handed to propagation.
    shipped: usize,
}

impl ThreadUpdateLog {
    pub fn new(thread_id: usize) -> Self {
        ThreadUpdateLog { thread_id, entries: Vec::new(), shipped: 0 }
    }

    pub fn from_entries(thread_id: usize, entries: Vec<UpdateLogEntry>) -> Self {
        ThreadUpdateLog { thread_id, entries, shipped: 0 }
    }

    pub fn unshipped(&self) -> &[UpdateLogEntry] {
        &self.entries[self.shipped..]
    }

    pub fn pending(&self) -> usize {
        self.entries.len() - self.shipped
    }

    pub fn shipped(&self) -> usize {
        self.shipped
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxnError {
    #[error("invalid key {0:?}")]
    InvalidKey(RecordKey),
    #[error("table {0} does not exist")]
    UnknownTable(TableId),
    #[error("row {row} of table {table} is deleted")]
    MissingRow { table: TableId, row: RowId },
    #[error("delete of missing row {row} in table {table}")]
    DeleteOfMissingRow { table: TableId, row: RowId },
    #[error("unknown transactional thread {0}")]
    UnknownThread(usize),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// One operation inside a transactional batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxnOp {
    Read(RecordKey),
    Modify(RecordKey, Value),
    Delete { table: TableId, row: RowId },
    Insert { table: TableId, values: Vec<Value> },
}

impl TxnOp {
    pub fn is_write(&self) -> bool {
        !matches!(self, TxnOp::Read(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TxnOutcome {
    /// Present when the batch wrote anything.
    pub commit: Option<CommitId>,
    /// One entry per `Read`, in op order.
    pub reads: Vec<Value>,
    /// Row ids assigned to `Insert`s, in op order.
    pub inserted: Vec<RowId>,
    /// Log entries appended by this batch.
    pub logged: usize,
}

enum Undo {
    Set(RecordKey, Value),
    Restore(TableId, RowId, Vec<Value>),
    Truncate(TableId, usize),
}

/// The transactional island: NSM tables plus per-thread update logs.
#[derive(Debug, Clone)]
pub struct TxnEngine {
    tables: Vec<NsmTable>,
    logs: Vec<ThreadUpdateLog>,
    next_commit: u64,
    capacity: usize,
}

impl TxnEngine {
    pub fn new(tables: Vec<NsmTable>, n_threads: usize) -> Self {
        Self::with_capacity(tables, n_threads, DEFAULT_LOG_CAPACITY)
    }

    pub fn with_capacity(tables: Vec<NsmTable>, n_threads: usize, capacity: usize) -> Self {
        TxnEngine {
            tables,
            logs: (0..n_threads).map(ThreadUpdateLog::new).collect(),
            next_commit: 1,
            capacity,
        }
    }

    pub fn tables(&self) -> &[NsmTable] {
        &self.tables
    }

    pub fn table(&self, id: TableId) -> Option<&NsmTable> {
        self.tables.get(id as usize)
    }

    pub fn logs(&self) -> &[ThreadUpdateLog] {
        &self.logs
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Id that the next writing batch will receive.
    pub fn next_commit(&self) -> CommitId {
        CommitId(self.next_commit)
    }

    /// Highest commit id handed out so far (0 if none).
    pub fn last_commit(&self) -> CommitId {
        CommitId(self.next_commit - 1)
    }

    /// Executes one batch atomically. On error no state changes and no
    /// commit id is consumed.
    pub fn execute_txn_query(&mut self, thread_id: usize, ops: &[TxnOp]) -> Result<TxnOutcome, TxnError> {
        if thread_id >= self.logs.len() {
            return Err(TxnError::UnknownThread(thread_id));
        }
        let commit = CommitId(self.next_commit);
        let mut undo = Vec::new();
        let mut staged = Vec::new();
        let mut out = TxnOutcome::default();
        if let Err(e) = self.apply_ops(commit, ops, &mut undo, &mut staged, &mut out) {
            self.rollback(undo);
            return Err(e);
        }
        if ops.iter().any(TxnOp::is_write) {
            self.next_commit += 1;
            out.commit = Some(commit);
        }
        out.logged = staged.len();
        self.logs[thread_id].entries.extend(staged);
        Ok(out)
    }

    fn apply_ops(
        &mut self,
        commit: CommitId,
        ops: &[TxnOp],
        undo: &mut Vec<Undo>,
        staged: &mut Vec<UpdateLogEntry>,
        out: &mut TxnOutcome,
    ) -> Result<(), TxnError> {
        for op in ops {
            match op {
                TxnOp::Read(key) => {
                    let v = self.cell(key)?;
                    out.reads.push(v);
                }
                TxnOp::Modify(key, value) => {
                    self.cell(key)?;
                    let old = self.tables[key.table_id as usize]
                        .set(key.row_id, key.column_id, *value)
                        .expect("cell checked above");
                    undo.push(Undo::Set(*key, old));
                    staged.push(UpdateLogEntry { commit, kind: UpdateKind::Modify, data: *value, key: *key });
                }
                TxnOp::Delete { table, row } => {
                    let t = self.tables.get_mut(*table as usize).ok_or(TxnError::UnknownTable(*table))?;
                    let old = t.delete(*row).ok_or(TxnError::DeleteOfMissingRow { table: *table, row: *row })?;
                    for c in 0..old.len() {
                        let key = RecordKey::new(*table, *row, c as ColumnId);
                        staged.push(UpdateLogEntry { commit, kind: UpdateKind::Delete, data: 0, key });
                    }
                    undo.push(Undo::Restore(*table, *row, old));
                }
                TxnOp::Insert { table, values } => {
                    let t = self.tables.get_mut(*table as usize).ok_or(TxnError::UnknownTable(*table))?;
                    let before = t.n_rows();
                    let row = t.push_row(values.clone())?;
                    undo.push(Undo::Truncate(*table, before));
                    for (c, v) in values.iter().enumerate() {
                        let key = RecordKey::new(*table, row, c as ColumnId);
                        staged.push(UpdateLogEntry { commit, kind: UpdateKind::Insert, data: *v, key });
                    }
                    out.inserted.push(row);
                }
            }
        }
        Ok(())
    }

    fn rollback(&mut self, undo: Vec<Undo>) {
        for u in undo.into_iter().rev() {
            match u {
                Undo::Set(k, v) => {
                    self.tables[k.table_id as usize].set(k.row_id, k.column_id, v);
                }
                Undo::Restore(t, r, vals) => self.tables[t as usize].restore(r, vals),
                Undo::Truncate(t, n) => self.tables[t as usize].truncate(n),
            }
        }
    }

    fn cell(&self, key: &RecordKey) -> Result<Value, TxnError> {
        let t = self.tables.get(key.table_id as usize).ok_or(TxnError::InvalidKey(*key))?;
        if key.row_id as usize >= t.n_rows() || key.column_id as usize >= t.n_columns() {
            return Err(TxnError::InvalidKey(*key));
        }
        t.get(key.row_id, key.column_id)
            .ok_or(TxnError::MissingRow { table: key.table_id, row: key.row_id })
    }

    /// Unshipped entries summed over all thread logs.
    pub fn pending_update_count(&self) -> usize {
        self.logs.iter().map(ThreadUpdateLog::pending).sum()
    }

    /// True once enough entries are pending to fill the final log.
    pub fn should_propagate(&self) -> bool {
        self.pending_update_count() >= self.capacity
    }

    /// Advances each thread's shipped watermark by `consumed[i]` entries.
    pub fn mark_shipped(&mut self, consumed: &[usize]) {
        for (log, &n) in self.logs.iter_mut().zip(consumed) {
            log.shipped = (log.shipped + n).min(log.entries.len());
        }
    }
}

/// Replays log entries (in the given order) on top of `tables`.
///
/// Entries of one insert share a commit id and arrive column by column; the
/// row is materialized once all of its columns were seen.
pub fn replay(tables: &mut [NsmTable], entries: &[UpdateLogEntry]) -> Result<(), TxnError> {
    let mut pending_insert: Option<(TableId, RowId, Vec<Value>)> = None;
    for e in entries {
        let k = e.key;
        let t = tables.get_mut(k.table_id as usize).ok_or(TxnError::UnknownTable(k.table_id))?;
        match e.kind {
            UpdateKind::Modify => {
                t.set(k.row_id, k.column_id, e.data).ok_or(TxnError::InvalidKey(k))?;
            }
            UpdateKind::Delete => {
                if k.column_id == 0 {
                    t.delete(k.row_id).ok_or(TxnError::DeleteOfMissingRow { table: k.table_id, row: k.row_id })?;
                }
            }
            UpdateKind::Insert => {
                let slot = pending_insert.get_or_insert_with(|| (k.table_id, k.row_id, Vec::new()));
                slot.2.push(e.data);
                if slot.2.len() == t.n_columns() {
                    let (_, row, vals) = pending_insert.take().unwrap();
                    let got = t.push_row(vals)?;
                    if got != row {
                        return Err(TxnError::InvalidKey(k));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn engine() -> TxnEngine {
        let t = NsmTable::from_rows(0, 2, (0..5).map(|i| vec![i, 10 * i]).collect()).unwrap();
        TxnEngine::new(vec![t], 2)
    }

    #[test]
    fn modify_then_read() {
        let mut e = engine();
        let key = RecordKey::new(0, 3, 1);
        let out = e.execute_txn_query(0, &[TxnOp::Modify(key, 42)]).unwrap();
        assert_eq!(out.commit, Some(CommitId(1)));
        assert_eq!(e.logs()[0].entries, vec![UpdateLogEntry { commit: CommitId(1), kind: UpdateKind::Modify, data: 42, key }]);
        let out = e.execute_txn_query(1, &[TxnOp::Read(key)]).unwrap();
        assert_eq!(out.reads, vec![42]);
        assert_eq!(out.commit, None);
    }

    #[test]
    fn double_delete_fails() {
        let mut e = engine();
        e.execute_txn_query(0, &[TxnOp::Delete { table: 0, row: 2 }]).unwrap();
        assert_eq!(
            e.execute_txn_query(0, &[TxnOp::Delete { table: 0, row: 2 }]),
            Err(TxnError::DeleteOfMissingRow { table: 0, row: 2 })
        );
        // one entry per column of the deleted row
        assert_eq!(e.pending_update_count(), 2);
    }

    #[test]
    fn invalid_key_rejected_without_side_effects() {
        let mut e = engine();
        let good = RecordKey::new(0, 1, 0);
        let bad = RecordKey::new(0, 99, 0);
        let r = e.execute_txn_query(0, &[TxnOp::Modify(good, 7), TxnOp::Read(bad)]);
        assert_eq!(r, Err(TxnError::InvalidKey(bad)));
        assert_eq!(e.table(0).unwrap().get(1, 0), Some(1));
        assert_eq!(e.pending_update_count(), 0);
        assert_eq!(e.next_commit(), CommitId(1));
    }

    #[test]
    fn insert_logs_every_column() {
        let mut e = engine();
        let out = e.execute_txn_query(1, &[TxnOp::Insert { table: 0, values: vec![7, 8] }]).unwrap();
        assert_eq!(out.inserted, vec![5]);
        let log = &e.logs()[1].entries;
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|x| x.commit == CommitId(1) && x.kind == UpdateKind::Insert));
    }

    #[test]
    fn trigger_threshold() {
        let t = NsmTable::from_rows(0, 1, vec![vec![0]; 4]).unwrap();
        let mut e = TxnEngine::new(vec![t], 1);
        assert_eq!(e.pending_update_count(), 0);
        assert!(!e.should_propagate());
        for i in 0..1023 {
            e.execute_txn_query(0, &[TxnOp::Modify(RecordKey::new(0, 0, 0), i)]).unwrap();
        }
        assert_eq!(e.pending_update_count(), 1023);
        assert!(!e.should_propagate());
        e.execute_txn_query(0, &[TxnOp::Modify(RecordKey::new(0, 1, 0), 5)]).unwrap();
        assert!(e.should_propagate());
        e.mark_shipped(&[1000]);
        assert_eq!(e.pending_update_count(), 24);
    }

    proptest! {
        #[test]
        fn replay_reproduces_state(ops in prop::collection::vec((0usize..3, 0u8..4, 0u64..6, 0u16..2, -50i64..50), 0..120)) {
            let mut e = engine();
            let initial = e.tables().to_vec();
            for (thread, kind, row, col, v) in ops {
                let thread = thread % 2;
                let op = match kind {
                    0 => TxnOp::Read(RecordKey::new(0, row, col)),
                    1 => TxnOp::Delete { table: 0, row },
                    2 => TxnOp::Insert { table: 0, values: vec![v, v + 1] },
                    _ => TxnOp::Modify(RecordKey::new(0, row, col), v),
                };
                let _ = e.execute_txn_query(thread, &[op]);
            }
            let mut all: Vec<UpdateLogEntry> = e.logs().iter().flat_map(|l| l.entries.clone()).collect();
            for l in e.logs() {
                prop_assert!(l.entries.windows(2).all(|w| w[0].commit <= w[1].commit));
            }
            all.sort_by_key(|x| x.commit);
            let mut replayed = initial;
            replay(&mut replayed, &all).unwrap();
            prop_assert_eq!(replayed.as_slice(), e.tables());
        }
    }
}
