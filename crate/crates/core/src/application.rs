//! Applying shipped column buffers to dictionary-encoded columns.
//!
//! Two algorithms produce the same decoded column:
//!
//! * [`apply_naive`] decodes the whole column, applies the updates, sorts
//!   the result into a fresh dictionary and re-encodes every row.
//! * [`apply_optimized`] never decodes the column. It sorts only the update
//!   values ([`build_update_dictionary`]), merges that with the existing
//!   dictionary in one linear pass ([`merge_dictionaries`]) and rewrites
//!   each code through the resulting old-code to new-code map.
//!
//! The optimized dictionary may keep values no row references any more;
//! [`UpdateApplier`] rebuilds through the naive path once stale entries
//! outnumber live ones by the compaction factor.
//!
//! Columns split across vaults share one dictionary, so the `_partitioned`
//! variants take every partition of a column at once.

use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::propagation::BufferedUpdate;
use crate::storage::{Code, Dictionary, EncodedColumn, Value, TOMBSTONE};
use crate::txn::UpdateKind;

/// Largest number of distinct update values sorted in one round.
pub const SORTER_CAPACITY: usize = 1024;

/// Default ratio of dictionary size to referenced values that triggers a
/// rebuild.
pub const DEFAULT_COMPACTION_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("update targets row offset {offset} of a partition with {len} rows")]
    RowOutOfRange { offset: u64, len: usize },
    #[error("{partitions} partitions but {buffers} update buffers")]
    PartitionMismatch { partitions: usize, buffers: usize },
}

/// Old-code and update-value translation produced by a dictionary merge.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecodeMap {
    /// `old_to_new[old_code]` is the code of the same value in the merged
    /// dictionary.
    pub old_to_new: Vec<Code>,
    /// `update_to_new[i]` is the merged code of the i-th update-dictionary
    /// value.
    pub update_to_new: Vec<Code>,
}

impl RecodeMap {
    pub fn recode(&self, old: Code) -> Code {
        if old == TOMBSTONE {
            TOMBSTONE
        } else {
            self.old_to_new[old as usize]
        }
    }
}

/// Operation counts charged by an application algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ApplyCost {
    /// Dictionary or index lookups that land at unpredictable addresses.
    pub random_accesses: u64,
    /// Comparisons spent sorting and merging.
    pub comparisons: u64,
    /// Codes streamed sequentially (read plus write).
    pub sequential_codes: u64,
}

impl ApplyCost {
    pub fn total(&self) -> u64 {
        self.random_accesses + self.comparisons
    }

    fn add(&mut self, o: ApplyCost) {
        self.random_accesses += o.random_accesses;
        self.comparisons += o.comparisons;
        self.sequential_codes += o.sequential_codes;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub partitions: Vec<EncodedColumn>,
    pub cost: ApplyCost,
    pub rounds: usize,
    pub compacted: bool,
}

fn log2_ceil(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

fn carries_value(kind: UpdateKind) -> bool {
    matches!(kind, UpdateKind::Insert | UpdateKind::Modify)
}

fn apply_to_slot<T: Copy>(rows: &mut Vec<T>, u: &BufferedUpdate, v: T) -> Result<(), ApplyError> {
    let len = rows.len();
    match u.kind {
        UpdateKind::Insert if u.offset as usize == len => rows.push(v),
        UpdateKind::Insert => return Err(ApplyError::RowOutOfRange { offset: u.offset, len }),
        _ => *rows.get_mut(u.offset as usize).ok_or(ApplyError::RowOutOfRange { offset: u.offset, len })? = v,
    }
    Ok(())
}

/// Sorted distinct values carried by inserts and modifies.
pub fn build_update_dictionary(updates: &[BufferedUpdate]) -> Dictionary {
    Dictionary::from_values(updates.iter().filter(|u| carries_value(u.kind)).map(|u| u.value))
}

/// Linear-scan union of two sorted dictionaries.
pub fn merge_dictionaries(old: &Dictionary, upd: &Dictionary) -> (Dictionary, RecodeMap) {
    let (a, b) = (old.values(), upd.values());
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let mut map = RecodeMap { old_to_new: Vec::with_capacity(a.len()), update_to_new: Vec::with_capacity(b.len()) };
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let code = merged.len() as Code;
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                merged.push(*x);
                map.old_to_new.push(code);
                map.update_to_new.push(code);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                merged.push(*x);
                map.old_to_new.push(code);
                i += 1;
            }
            (Some(x), None) => {
                merged.push(*x);
                map.old_to_new.push(code);
                i += 1;
            }
            (_, Some(y)) => {
                merged.push(*y);
                map.update_to_new.push(code);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (Dictionary::from_sorted_unchecked(merged), map)
}

/// Naive algorithm over a single column.
pub fn apply_naive(col: &EncodedColumn, updates: &[BufferedUpdate]) -> Result<Applied, ApplyError> {
    apply_naive_partitioned(std::slice::from_ref(col), &[updates])
}

/// Optimized algorithm over a single column.
pub fn apply_optimized(col: &EncodedColumn, updates: &[BufferedUpdate]) -> Result<Applied, ApplyError> {
    apply_optimized_partitioned(std::slice::from_ref(col), &[updates])
}

fn check_shapes(parts: &[EncodedColumn], buffers: &[&[BufferedUpdate]]) -> Result<(), ApplyError> {
    if parts.len() != buffers.len() {
        return Err(ApplyError::PartitionMismatch { partitions: parts.len(), buffers: buffers.len() });
    }
    Ok(())
}

/// Decode, update, sort into a new dictionary, re-encode.
pub fn apply_naive_partitioned(parts: &[EncodedColumn], buffers: &[&[BufferedUpdate]]) -> Result<Applied, ApplyError> {
    check_shapes(parts, buffers)?;
    let mut cost = ApplyCost::default();
    // Step 1: decode every code (one dictionary lookup each).
    let mut decoded: Vec<Vec<Option<Value>>> = parts
        .iter()
        .map(|p| {
            cost.random_accesses += p.len() as u64;
            p.decode_all().expect("published columns only hold valid codes")
        })
        .collect();
    // Step 2: apply updates in commit order.
    for (rows, buf) in decoded.iter_mut().zip(buffers) {
        for u in buf.iter() {
            let v = if carries_value(u.kind) { Some(u.value) } else { None };
            apply_to_slot(rows, u, v)?;
            cost.random_accesses += 1;
        }
    }
    // Step 3: sort the whole updated column to build the dictionary.
    let total: u64 = decoded.iter().map(|r| r.len() as u64).sum();
    cost.comparisons += total * log2_ceil(total);
    let dict = Arc::new(Dictionary::from_values(decoded.iter().flatten().flatten().copied()));
    // Step 4: re-encode with a binary search per row.
    let probes = log2_ceil(dict.len() as u64).max(1);
    let partitions = decoded
        .iter()
        .map(|rows| {
            cost.random_accesses += rows.len() as u64 * probes;
            cost.sequential_codes += rows.len() as u64;
            let codes = rows
                .iter()
                .map(|v| v.map_or(TOMBSTONE, |v| dict.encode(v).expect("dictionary built from these rows")))
                .collect();
            EncodedColumn::new(codes, dict.clone())
        })
        .collect();
    Ok(Applied { partitions, cost, rounds: 1, compacted: false })
}

/// Splits updates (already in commit order) into rounds whose distinct
/// payload values fit the sorter.
fn rounds(buffers: &[&[BufferedUpdate]]) -> Vec<Vec<Vec<BufferedUpdate>>> {
    let mut all: Vec<(usize, BufferedUpdate)> =
        buffers.iter().enumerate().flat_map(|(p, b)| b.iter().map(move |u| (p, *u))).collect();
    // Stable: equal commits keep buffer order.
    all.sort_by_key(|(_, u)| u.commit);
    let mut out = Vec::new();
    let mut cur: Vec<Vec<BufferedUpdate>> = vec![Vec::new(); buffers.len()];
    let mut seen = std::collections::BTreeSet::new();
    let mut any = false;
    for (p, u) in all {
        if carries_value(u.kind) && !seen.contains(&u.value) && seen.len() == SORTER_CAPACITY {
            out.push(std::mem::replace(&mut cur, vec![Vec::new(); buffers.len()]));
            seen.clear();
        }
        if carries_value(u.kind) {
            seen.insert(u.value);
        }
        cur[p].push(u);
        any = true;
    }
    if any || out.is_empty() {
        out.push(cur);
    }
    out
}

/// Two-stage dictionary construction plus recoding through the merge map.
pub fn apply_optimized_partitioned(parts: &[EncodedColumn], buffers: &[&[BufferedUpdate]]) -> Result<Applied, ApplyError> {
    check_shapes(parts, buffers)?;
    if buffers.iter().all(|b| b.is_empty()) {
        return Ok(Applied { partitions: parts.to_vec(), cost: ApplyCost::default(), rounds: 0, compacted: false });
    }
    let mut current: Vec<EncodedColumn> = parts.to_vec();
    let mut cost = ApplyCost::default();
    let plan = rounds(buffers);
    let n_rounds = plan.len();
    for round in plan {
        let (next, c) = optimized_round(&current, &round)?;
        cost.add(c);
        current = next;
    }
    Ok(Applied { partitions: current, cost, rounds: n_rounds, compacted: false })
}

fn optimized_round(parts: &[EncodedColumn], round: &[Vec<BufferedUpdate>]) -> Result<(Vec<EncodedColumn>, ApplyCost), ApplyError> {
    let mut cost = ApplyCost::default();
    let old = parts.first().map(|p| p.dict.clone()).unwrap_or_default();
    let all: Vec<BufferedUpdate> = round.iter().flatten().copied().collect();
    let upd = build_update_dictionary(&all);
    let m = upd.len() as u64;
    cost.comparisons += m * log2_ceil(m);
    let (dict, map) = merge_dictionaries(&old, &upd);
    cost.comparisons += (old.len() + upd.len()) as u64;
    let dict = Arc::new(dict);

    let mut out = Vec::with_capacity(parts.len());
    for (p, ups) in parts.iter().zip(round) {
        // one index lookup per existing code
        let mut codes: Vec<Code> = p.codes.iter().map(|&c| map.recode(c)).collect();
        cost.random_accesses += p.len() as u64;
        cost.sequential_codes += p.len() as u64;
        for u in ups {
            let code = if carries_value(u.kind) {
                let i = upd.encode(u.value).expect("update dictionary holds every payload");
                map.update_to_new[i as usize]
            } else {
                TOMBSTONE
            };
            apply_to_slot(&mut codes, u, code)?;
            cost.random_accesses += 1;
        }
        out.push(EncodedColumn::new(codes, dict.clone()));
    }
    Ok((out, cost))
}

/// Optimized application with dictionary compaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateApplier {
    /// Rebuild when `dict_len > factor * referenced`; `None` never rebuilds.
    pub compaction_factor: Option<usize>,
}

impl Default for UpdateApplier {
    fn default() -> Self {
        UpdateApplier { compaction_factor: Some(DEFAULT_COMPACTION_FACTOR) }
    }
}

impl UpdateApplier {
    pub fn apply(&self, parts: &[EncodedColumn], buffers: &[&[BufferedUpdate]]) -> Result<Applied, ApplyError> {
        let mut applied = apply_optimized_partitioned(parts, buffers)?;
        if let Some(factor) = self.compaction_factor {
            let dict_len = applied.partitions.first().map_or(0, |p| p.dict.len());
            let referenced = referenced_values(&applied.partitions);
            if dict_len > factor * referenced.max(1) {
                let empty: Vec<&[BufferedUpdate]> = vec![&[]; applied.partitions.len()];
                let rebuilt = apply_naive_partitioned(&applied.partitions, &empty)?;
                applied.cost.add(rebuilt.cost);
                applied.partitions = rebuilt.partitions;
                applied.compacted = true;
            }
        }
        Ok(applied)
    }
}

/// Distinct dictionary entries referenced across partitions sharing a
/// dictionary.
pub fn referenced_values(parts: &[EncodedColumn]) -> usize {
    let Some(first) = parts.first() else { return 0 };
    let mut seen = vec![false; first.dict.len()];
    for p in parts {
        for &c in p.codes.iter() {
            if c != TOMBSTONE {
                seen[c as usize] = true;
            }
        }
    }
    seen.into_iter().filter(|s| *s).count()
}

/// Immutable published state of one column: its partitions in row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnData {
    pub version: u64,
    pub partitions: Vec<EncodedColumn>,
}

impl ColumnData {
    pub fn n_rows(&self) -> usize {
        self.partitions.iter().map(EncodedColumn::len).sum()
    }

    pub fn dict(&self) -> Arc<Dictionary> {
        self.partitions.first().map(|p| p.dict.clone()).unwrap_or_default()
    }

    pub fn byte_size(&self) -> u64 {
        self.partitions.iter().map(EncodedColumn::byte_size).sum()
    }

    pub fn decode_all(&self) -> Vec<Option<Value>> {
        self.partitions.iter().flat_map(|p| p.decode_all().expect("valid codes")).collect()
    }
}

/// Main-replica slot of a column. Readers load an `Arc` and keep a
/// consistent (codes, dictionary) pair for as long as they hold it; a new
/// version becomes visible with a single pointer swap.
#[derive(Debug)]
pub struct ColumnSlot {
    current: RwLock<Arc<ColumnData>>,
}

impl ColumnSlot {
    pub fn new(partitions: Vec<EncodedColumn>) -> Self {
        ColumnSlot { current: RwLock::new(Arc::new(ColumnData { version: 0, partitions })) }
    }

    pub fn load(&self) -> Arc<ColumnData> {
        self.current.read().expect("slot lock poisoned").clone()
    }

    /// Phase 2: publish fully built partitions. Returns the new version.
    pub fn publish(&self, partitions: Vec<EncodedColumn>) -> u64 {
        let mut cur = self.current.write().expect("slot lock poisoned");
        let version = cur.version + 1;
        *cur = Arc::new(ColumnData { version, partitions });
        version
    }
}
