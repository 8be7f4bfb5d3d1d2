//! Column placement over vaults.
//!
//! Columns are assigned round-robin by ordinal:
//!
//! * `Local`: the whole column and its dictionary live in vault
//!   `ordinal % n_vaults`.
//! * `Distributed`: the column is split evenly over every vault; the single
//!   dictionary copy lives in vault `ordinal % n_vaults`.
//! * `Hybrid`: the column is split evenly over the vaults of group
//!   `ordinal % n_groups`; small dictionaries are copied into every vault
//!   of that group, larger ones stay in the group's first vault.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::storage::ColumnRef;
use crate::vault::{TopologyConfig, VaultId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlacementStrategy {
    Local,
    Distributed,
    Hybrid,
}

impl PlacementStrategy {
    pub const ALL: [PlacementStrategy; 3] = [PlacementStrategy::Local, PlacementStrategy::Distributed, PlacementStrategy::Hybrid];
}

impl fmt::Display for PlacementStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementStrategy::Local => "local",
            PlacementStrategy::Distributed => "distributed",
            PlacementStrategy::Hybrid => "hybrid",
        })
    }
}

impl FromStr for PlacementStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlacementStrategy::ALL.into_iter().find(|p| p.to_string() == s).ok_or_else(|| format!("unknown placement `{s}`"))
    }
}

/// Contiguous row range of a column stored in one vault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    pub vault: VaultId,
    pub start_row: u64,
    pub len: usize,
}

impl Partition {
    pub fn end_row(&self) -> u64 {
        self.start_row + self.len as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnPlacement {
    pub column: ColumnRef,
    pub ordinal: usize,
    pub strategy: PlacementStrategy,
    pub partitions: Vec<Partition>,
    /// Vault holding the authoritative dictionary.
    pub dict_owner: VaultId,
    /// Every vault holding a dictionary copy, including the owner.
    pub dict_vaults: Vec<VaultId>,
}

impl ColumnPlacement {
    pub fn n_rows(&self) -> u64 {
        self.partitions.last().map_or(0, Partition::end_row)
    }

    pub fn has_dict(&self, vault: VaultId) -> bool {
        self.dict_vaults.contains(&vault)
    }

    pub fn partition_lens(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.len).collect()
    }

    /// Partitions overlapping `[start, end)` with the overlap length.
    pub fn overlapping(&self, start: u64, end: u64) -> impl Iterator<Item = (usize, &Partition, usize)> + '_ {
        self.partitions.iter().enumerate().filter_map(move |(i, p)| {
            let lo = start.max(p.start_row);
            let hi = end.min(p.end_row());
            (hi > lo).then(|| (i, p, (hi - lo) as usize))
        })
    }

    /// Grows the tail partition by `rows` inserted rows.
    pub fn extend_tail(&mut self, rows: usize) {
        if let Some(p) = self.partitions.last_mut() {
            p.len += rows;
        }
    }
}

fn split(n_rows: usize, vaults: impl ExactSizeIterator<Item = VaultId>) -> Vec<Partition> {
    let k = vaults.len();
    let mut start = 0u64;
    vaults
        .enumerate()
        .map(|(i, vault)| {
            let len = n_rows / k + usize::from(i < n_rows % k);
            let p = Partition { vault, start_row: start, len };
            start += len as u64;
            p
        })
        .collect()
}

/// Places one column. `dict_len` decides Hybrid dictionary replication.
pub fn place(column: ColumnRef, ordinal: usize, n_rows: usize, dict_len: usize, strategy: PlacementStrategy, cfg: &TopologyConfig) -> ColumnPlacement {
    let home = ordinal % cfg.n_vaults;
    let (partitions, dict_owner, dict_vaults) = match strategy {
        PlacementStrategy::Local => (vec![Partition { vault: home, start_row: 0, len: n_rows }], home, vec![home]),
        PlacementStrategy::Distributed => (split(n_rows, 0..cfg.n_vaults), home, vec![home]),
        PlacementStrategy::Hybrid => {
            let g = ordinal % cfg.n_groups();
            let vaults = g * cfg.group_size..(g + 1) * cfg.group_size;
            let owner = vaults.start;
            let copies = if dict_len <= cfg.dict_replication_threshold { vaults.clone().collect() } else { vec![owner] };
            (split(n_rows, vaults), owner, copies)
        }
    };
    ColumnPlacement { column, ordinal, strategy, partitions, dict_owner, dict_vaults }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPlan {
    pub strategy: PlacementStrategy,
    pub columns: BTreeMap<ColumnRef, ColumnPlacement>,
}

impl PlacementPlan {
    /// Places columns given as `(column, n_rows, dict_len)`; ordinals follow
    /// slice order.
    pub fn build(columns: &[(ColumnRef, usize, usize)], strategy: PlacementStrategy, cfg: &TopologyConfig) -> Self {
        let columns = columns
            .iter()
            .enumerate()
            .map(|(i, &(c, n, d))| (c, place(c, i, n, d, strategy, cfg)))
            .collect();
        PlacementPlan { strategy, columns }
    }

    pub fn get(&self, c: ColumnRef) -> Option<&ColumnPlacement> {
        self.columns.get(&c)
    }

    pub fn get_mut(&mut self, c: ColumnRef) -> Option<&mut ColumnPlacement> {
        self.columns.get_mut(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TopologyConfig {
        TopologyConfig::default()
    }

    #[test]
    fn local_round_robin() {
        let p = place(ColumnRef::new(0, 5), 5, 100, 10, PlacementStrategy::Local, &cfg());
        assert_eq!(p.partitions, vec![Partition { vault: 5, start_row: 0, len: 100 }]);
        assert_eq!(p.dict_vaults, vec![5]);
        assert_eq!(place(ColumnRef::new(1, 0), 21, 1, 1, PlacementStrategy::Local, &cfg()).partitions[0].vault, 5);
    }

    #[test]
    fn distributed_even_split() {
        let p = place(ColumnRef::new(0, 0), 0, 16000, 10, PlacementStrategy::Distributed, &cfg());
        assert_eq!(p.partitions.len(), 16);
        assert!(p.partitions.iter().enumerate().all(|(i, q)| q.len == 1000 && q.vault == i && q.start_row == 1000 * i as u64));
        assert_eq!(p.dict_vaults.len(), 1);
        let uneven = place(ColumnRef::new(0, 0), 0, 18, 1, PlacementStrategy::Distributed, &cfg());
        assert_eq!(uneven.partition_lens().iter().sum::<usize>(), 18);
        assert_eq!(uneven.n_rows(), 18);
    }

    #[test]
    fn hybrid_group_and_replicas() {
        let p = place(ColumnRef::new(0, 2), 2, 4000, 32, PlacementStrategy::Hybrid, &cfg());
        assert_eq!(p.partitions.iter().map(|q| q.vault).collect::<Vec<_>>(), vec![8, 9, 10, 11]);
        assert_eq!(p.dict_vaults, vec![8, 9, 10, 11]);
        let big = place(ColumnRef::new(0, 2), 2, 4000, 33, PlacementStrategy::Hybrid, &cfg());
        assert_eq!(big.dict_vaults, vec![8]);
    }

    #[test]
    fn overlap_ranges() {
        let p = place(ColumnRef::new(0, 0), 0, 4000, 1, PlacementStrategy::Hybrid, &cfg());
        let o: Vec<_> = p.overlapping(900, 2100).map(|(i, _, n)| (i, n)).collect();
        assert_eq!(o, vec![(0, 100), (1, 1000), (2, 100)]);
    }
}
