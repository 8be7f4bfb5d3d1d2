//! Stage 1: merging per-thread logs into the commit-ordered final log.
//!
//! The merge mirrors an 8-input comparator tree: each output entry costs one
//! comparison per tree level. More than eight logs are merged in passes of
//! at most eight runs each.

use crate::txn::{CommitId, UpdateLogEntry};

use super::PropagationError;

/// Number of input queues of the merge unit.
pub const MERGE_FAN_IN: usize = 8;

/// Commit-ordered output of the merge stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalLog {
    pub entries: Vec<UpdateLogEntry>,
    pub capacity: usize,
}

impl FinalLog {
    pub fn new(capacity: usize) -> Self {
        FinalLog { entries: Vec::new(), capacity }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Commit id of the newest entry, if any.
    pub fn watermark(&self) -> Option<CommitId> {
        self.entries.last().map(|e| e.commit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutput {
    pub final_log: FinalLog,
    /// Entries taken from the front of each input.
    pub consumed: Vec<usize>,
    pub passes: usize,
    pub comparisons: u64,
}

/// Winner tree over up to [`MERGE_FAN_IN`] sorted runs.
struct ComparatorTree<'a, T> {
    runs: Vec<&'a [T]>,
    pos: Vec<usize>,
    leaves: usize,
    // tree[node] = index of the winning run below `node`
    tree: Vec<usize>,
    key: fn(&T) -> CommitId,
    comparisons: u64,
}

impl<'a, T> ComparatorTree<'a, T> {
    fn new(runs: Vec<&'a [T]>, key: fn(&T) -> CommitId) -> Self {
        let leaves = runs.len().next_power_of_two().max(2);
        let mut t = ComparatorTree {
            pos: vec![0; runs.len()],
            runs,
            leaves,
            tree: vec![usize::MAX; 2 * leaves],
            key,
            comparisons: 0,
        };
        for i in 0..t.leaves {
            t.tree[t.leaves + i] = if i < t.runs.len() { i } else { usize::MAX };
        }
        for node in (1..t.leaves).rev() {
            t.tree[node] = t.play(t.tree[2 * node], t.tree[2 * node + 1]);
        }
        t
    }

    fn head(&self, run: usize) -> Option<CommitId> {
        if run == usize::MAX {
            return None;
        }
        self.runs[run].get(self.pos[run]).map(self.key)
    }

    fn play(&mut self, a: usize, b: usize) -> usize {
        self.comparisons += 1;
        match (self.head(a), self.head(b)) {
            (None, _) => b,
            (_, None) => a,
            // ties go to the lower run index
            (Some(x), Some(y)) => if y < x { b } else { a },
        }
    }

    fn pop(&mut self) -> Option<(usize, &'a T)> {
        let w = self.tree[1];
        self.head(w)?;
        let item = &self.runs[w][self.pos[w]];
        self.pos[w] += 1;
        let mut node = (self.leaves + w) / 2;
        while node >= 1 {
            self.tree[node] = self.play(self.tree[2 * node], self.tree[2 * node + 1]);
            node /= 2;
        }
        Some((w, item))
    }
}

fn check_sorted(i: usize, log: &[UpdateLogEntry]) -> Result<(), PropagationError> {
    match log.windows(2).position(|w| w[1].commit < w[0].commit) {
        Some(p) => Err(PropagationError::UnsortedInputLog { log: i, index: p + 1 }),
        None => Ok(()),
    }
}

/// Merges sorted logs into a final log of at most `capacity` entries.
///
/// The output holds the globally oldest entries. A commit whose entries
/// would straddle the capacity cut is left for the next round, unless it is
/// the only commit in the log.
pub fn merge_logs(logs: &[&[UpdateLogEntry]], capacity: usize) -> Result<MergeOutput, PropagationError> {
    for (i, log) in logs.iter().enumerate() {
        check_sorted(i, log)?;
    }
    // Tag entries with their source so per-log consumption can be recovered
    // after multi-pass merging.
    let tagged: Vec<Vec<(UpdateLogEntry, usize)>> = logs
        .iter()
        .enumerate()
        .map(|(i, l)| l.iter().take(capacity + 1).map(|e| (*e, i)).collect())
        .collect();
    let key: fn(&(UpdateLogEntry, usize)) -> CommitId = |x| x.0.commit;

    let mut runs = tagged;
    let mut passes = 0;
    let mut comparisons = 0;
    loop {
        passes += 1;
        let mut next = Vec::with_capacity(runs.len().div_ceil(MERGE_FAN_IN));
        for group in runs.chunks(MERGE_FAN_IN) {
            let mut tree = ComparatorTree::new(group.iter().map(Vec::as_slice).collect(), key);
            let mut out = Vec::new();
            while out.len() <= capacity {
                match tree.pop() {
                    Some((_, item)) => out.push(*item),
                    None => break,
                }
            }
            comparisons += tree.comparisons;
            next.push(out);
        }
        runs = next;
        if runs.len() <= 1 {
            break;
        }
    }
    let mut merged = runs.pop().unwrap_or_default();
    merged.truncate(capacity);

    let mut consumed = vec![0usize; logs.len()];
    for (_, src) in &merged {
        consumed[*src] += 1;
    }
    // Do not split a commit across rounds.
    if let Some(&(last, src)) = merged.last() {
        let split = logs[src].get(consumed[src]).is_some_and(|n| n.commit == last.commit);
        let all_same = merged.first().is_some_and(|f| f.0.commit == last.commit);
        if split && !all_same {
            while merged.last().is_some_and(|x| x.0.commit == last.commit) {
                merged.pop();
                consumed[src] -= 1;
            }
        }
    }
    Ok(MergeOutput {
        final_log: FinalLog { entries: merged.into_iter().map(|(e, _)| e).collect(), capacity },
        consumed,
        passes,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::RecordKey;
    use crate::txn::UpdateKind;

    fn e(c: u64) -> UpdateLogEntry {
        UpdateLogEntry { commit: CommitId(c), kind: UpdateKind::Modify, data: c as i64, key: RecordKey::new(0, c, 0) }
    }

    fn commits(f: &FinalLog) -> Vec<u64> {
        f.entries.iter().map(|x| x.commit.0).collect()
    }

    #[test]
    fn two_way_merge() {
        let a = [e(1), e(4)];
        let b = [e(2), e(3)];
        let out = merge_logs(&[&a, &b], 1024).unwrap();
        assert_eq!(commits(&out.final_log), vec![1, 2, 3, 4]);
        assert_eq!(out.consumed, vec![2, 2]);
        assert_eq!(out.passes, 1);
    }

    #[test]
    fn single_log_is_identity() {
        let a: Vec<_> = (1..=10).map(e).collect();
        let out = merge_logs(&[&a], 1024).unwrap();
        assert_eq!(out.final_log.entries, a);
    }

    #[test]
    fn nine_logs_take_two_passes() {
        // log i holds commits i+1, i+10, i+19, ...
        let logs: Vec<Vec<_>> = (0..9).map(|i| (0..200).map(|k| e(1 + i + 9 * k)).collect()).collect();
        let refs: Vec<&[UpdateLogEntry]> = logs.iter().map(Vec::as_slice).collect();
        let out = merge_logs(&refs, 1024).unwrap();
        assert_eq!(out.passes, 2);
        // global sort oracle
        let mut all: Vec<u64> = logs.iter().flatten().map(|x| x.commit.0).collect();
        all.sort_unstable();
        all.truncate(1024);
        assert_eq!(commits(&out.final_log), all);
        assert_eq!(out.consumed.iter().sum::<usize>(), 1024);
    }

    #[test]
    fn unsorted_input_rejected() {
        let a = [e(3), e(1)];
        assert_eq!(merge_logs(&[&a], 8), Err(PropagationError::UnsortedInputLog { log: 0, index: 1 }));
    }

    #[test]
    fn capacity_cut_keeps_commits_whole() {
        let mut a = vec![e(1), e(2)];
        let mut ins = e(3);
        ins.kind = UpdateKind::Insert;
        a.extend([ins, ins, ins]);
        let out = merge_logs(&[&a], 4).unwrap();
        assert_eq!(commits(&out.final_log), vec![1, 2]);
        assert_eq!(out.consumed, vec![2]);
    }

    #[test]
    fn empty_inputs() {
        let out = merge_logs(&[&[], &[]], 1024).unwrap();
        assert!(out.final_log.is_empty());
        assert_eq!(out.consumed, vec![0, 0]);
    }
}
