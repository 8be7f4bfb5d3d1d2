//! Stage 2: the `(column, row)` hash index that maps every cell of the
//! analytical replica to its column partition.
//!
//! Bucket hashing with separate chaining. Chains are kept in insertion order
//! and a lookup reports how many chain nodes it touched so the cost model
//! can charge one memory access per node.

use std::collections::BTreeMap;

use crate::storage::{ColumnId, ColumnRef, RecordKey, RowId, TableId};

use super::PropagationError;

/// Multiplier that folds the column id into the row id before the modulo.
pub const HASH_MULTIPLIER: u64 = 2_654_435_761;

/// Target average chain length used when sizing the bucket array.
pub const KEYS_PER_BUCKET: usize = 4;

/// `(column_id * 2654435761 + row_id) mod n_buckets`.
pub fn hash_key(column_id: ColumnId, row_id: RowId, n_buckets: usize) -> usize {
    assert!(n_buckets >= 1, "hash index needs at least one bucket");
    let k = (column_id as u64).wrapping_mul(HASH_MULTIPLIER).wrapping_add(row_id);
    (k % n_buckets as u64) as usize
}

/// Bucket count for an index over `n_keys` cells.
pub fn bucket_count(n_keys: usize) -> usize {
    n_keys.div_ceil(KEYS_PER_BUCKET).next_power_of_two().max(1)
}

/// One column partition of the analytical replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnLocation {
    pub table_id: TableId,
    pub column_id: ColumnId,
    pub partition: u32,
}

impl ColumnLocation {
    pub fn column(&self) -> ColumnRef {
        ColumnRef::new(self.table_id, self.column_id)
    }
}

/// Where a single cell lives: its partition and the row offset inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellLocation {
    pub location: ColumnLocation,
    pub offset: u64,
}

#[derive(Debug, Clone)]
pub struct HashIndex {
    buckets: Vec<Vec<(RecordKey, CellLocation)>>,
    len: usize,
    // next free slot in the tail partition of each column, for inserts
    tails: BTreeMap<ColumnRef, (u32, u64)>,
}

impl HashIndex {
    pub fn with_buckets(n_buckets: usize) -> Self {
        HashIndex { buckets: vec![Vec::new(); n_buckets.max(1)], len: 0, tails: BTreeMap::new() }
    }

    /// Indexes every cell of the given columns. `partitions[i]` is the row
    /// count of partition `i`; partitions cover contiguous row ranges.
    pub fn build<'a, I>(columns: I) -> Self
    where
        I: IntoIterator<Item = (ColumnRef, &'a [usize])> + Clone,
    {
        let n_keys: usize = columns.clone().into_iter().map(|(_, p)| p.iter().sum::<usize>()).sum();
        let mut idx = HashIndex::with_buckets(bucket_count(n_keys));
        for (col, parts) in columns {
            let mut row: RowId = 0;
            for (p, &len) in parts.iter().enumerate() {
                for off in 0..len as u64 {
                    let loc = ColumnLocation { table_id: col.table_id, column_id: col.column_id, partition: p as u32 };
                    idx.insert(RecordKey::new(col.table_id, row, col.column_id), CellLocation { location: loc, offset: off });
                    row += 1;
                }
            }
            let last = parts.len().saturating_sub(1);
            idx.tails.insert(col, (last as u32, parts.get(last).copied().unwrap_or(0) as u64));
        }
        idx
    }

    pub fn n_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends `key` to its bucket's chain. An existing key is overwritten
    /// in place.
    pub fn insert(&mut self, key: RecordKey, loc: CellLocation) {
        let b = hash_key(key.column_id, key.row_id, self.buckets.len());
        let chain = &mut self.buckets[b];
        if let Some(slot) = chain.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = loc;
        } else {
            chain.push((key, loc));
            self.len += 1;
        }
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.lookup_column(key).is_ok()
    }

    /// Walks the key's chain; returns the location and the number of chain
    /// nodes visited.
    pub fn lookup_column(&self, key: &RecordKey) -> Result<(CellLocation, u32), PropagationError> {
        let b = hash_key(key.column_id, key.row_id, self.buckets.len());
        for (i, (k, loc)) in self.buckets[b].iter().enumerate() {
            if k == key {
                return Ok((*loc, i as u32 + 1));
            }
        }
        Err(PropagationError::KeyNotIndexed(*key))
    }

    pub fn chain_len(&self, bucket: usize) -> usize {
        self.buckets[bucket].len()
    }

    /// Assigns a freshly inserted row to the tail partition of its column.
    pub fn register_insert(&mut self, key: RecordKey) -> Result<CellLocation, PropagationError> {
        if let Ok((loc, _)) = self.lookup_column(&key) {
            return Ok(loc);
        }
        let tail = self.tails.get_mut(&key.column()).ok_or(PropagationError::KeyNotIndexed(key))?;
        let loc = CellLocation {
            location: ColumnLocation { table_id: key.table_id, column_id: key.column_id, partition: tail.0 },
            offset: tail.1,
        };
        tail.1 += 1;
        self.insert(key, loc);
        Ok(loc)
    }
}

/// Completion times of lookups retired through an in-order reorder buffer:
/// a lookup retires only after every earlier one has.
pub fn retire_in_order(completions: &[f64]) -> Vec<f64> {
    let mut last = f64::NEG_INFINITY;
    completions
        .iter()
        .map(|&c| {
            last = last.max(c);
            last
        })
        .collect()
}
