//! Per-tuple multi-version chains for the SI-MVCC baseline.
//!
//! Chains are newest first and never garbage collected, so a reader with an
//! old timestamp walks past every version installed after it started.

use std::collections::{HashMap, VecDeque};

use crate::storage::{RecordKey, Value};

use super::ConsistencyError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TupleVersionChain {
    // (timestamp, value), timestamps strictly decreasing
    versions: VecDeque<(u64, Value)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MvccRead {
    pub value: Value,
    /// Chain nodes visited, including the one returned.
    pub traversed: usize,
}

impl TupleVersionChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    pub fn head_ts(&self) -> Option<u64> {
        self.versions.front().map(|v| v.0)
    }

    /// Prepends a version; `ts` must exceed the current head.
    pub fn install(&mut self, ts: u64, value: Value) -> Result<(), ConsistencyError> {
        if let Some(head) = self.head_ts() {
            if ts <= head {
                return Err(ConsistencyError::NonIncreasingTimestamp { ts, head });
            }
        }
        self.versions.push_front((ts, value));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u64, Value)> {
        self.versions.iter()
    }
}

/// Newest version with timestamp `<= ts`.
pub fn mvcc_read(chain: &TupleVersionChain, ts: u64) -> Result<MvccRead, ConsistencyError> {
    for (i, &(vts, value)) in chain.versions.iter().enumerate() {
        if vts <= ts {
            return Ok(MvccRead { value, traversed: i + 1 });
        }
    }
    Err(ConsistencyError::NoVisibleVersion { ts })
}

/// Version chains for every tuple written during a run.
#[derive(Debug, Clone, Default)]
pub struct MvccStore {
    chains: HashMap<RecordKey, TupleVersionChain>,
    reads: u64,
    traversed: u64,
}

impl MvccStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a version. A tuple's first write also records `base` at
    /// timestamp 0 so older readers still find a version.
    pub fn write(&mut self, key: RecordKey, ts: u64, value: Value, base: Value) -> Result<(), ConsistencyError> {
        let chain = self.chains.entry(key).or_default();
        if chain.is_empty() {
            chain.install(0, base)?;
        }
        chain.install(ts, value)
    }

    /// Reads `key` as of `ts`. Tuples never written return `None`.
    pub fn read(&mut self, key: &RecordKey, ts: u64) -> Result<Option<MvccRead>, ConsistencyError> {
        let Some(chain) = self.chains.get(key) else { return Ok(None) };
        let r = mvcc_read(chain, ts)?;
        self.reads += 1;
        self.traversed += r.traversed as u64;
        Ok(Some(r))
    }

    pub fn chain(&self, key: &RecordKey) -> Option<&TupleVersionChain> {
        self.chains.get(key)
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_versions(&self) -> usize {
        self.chains.values().map(TupleVersionChain::len).sum()
    }

    /// Mean chain nodes traversed per versioned read; 0 before any read.
    pub fn mean_traversed(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.traversed as f64 / self.reads as f64
        }
    }
}
