//! Deterministic workload generation.
//!
//! Transactional queries touch a few random cells. Writes of thread `t` only
//! target rows with `row % txn_threads == t`, so every cell has a single
//! writer and the final database state does not depend on how threads
//! interleave. Analytical queries are filter-aggregates and joins over
//! random columns, always aggregated to a scalar.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{AggFn, CmpOp, Predicate, QueryPlan};
use crate::storage::{ColumnId, ColumnRef, NsmTable, RecordKey, TableId, Value};
use crate::txn::TxnOp;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub txn_threads: usize,
    pub txn_queries_per_thread: usize,
    /// Probability that a transactional operation is a write.
    pub update_ratio: f64,
    pub ops_per_txn: usize,
    pub anl_threads: usize,
    pub anl_queries_per_thread: usize,
    pub tables: usize,
    pub rows: usize,
    pub columns: usize,
    /// Upper bound on distinct values of a narrow column.
    pub max_distinct: usize,
    /// Fraction of columns drawn with `wide_distinct` values instead.
    pub wide_column_fraction: f64,
    pub wide_distinct: usize,
    /// Fraction of analytical queries that are joins.
    pub join_fraction: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            txn_threads: 4,
            txn_queries_per_thread: 1000,
            update_ratio: 0.5,
            ops_per_txn: 4,
            anl_threads: 2,
            anl_queries_per_thread: 8,
            tables: 2,
            rows: 4000,
            columns: 4,
            max_distinct: 32,
            wide_column_fraction: 0.0,
            wide_distinct: 4096,
            join_fraction: 0.3,
            seed: 42,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn unit_interval(name: &str, v: f64) -> Result<(), Error> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), Error> {
        unit_interval("update_ratio", self.update_ratio)?;
        unit_interval("wide_column_fraction", self.wide_column_fraction)?;
        unit_interval("join_fraction", self.join_fraction)?;
        if self.txn_threads == 0 {
            return Err(invalid("txn_threads must be at least 1"));
        }
        if self.ops_per_txn == 0 {
            return Err(invalid("ops_per_txn must be at least 1"));
        }
        if self.tables == 0 || self.tables > TableId::MAX as usize {
            return Err(invalid(format!("tables must lie in 1..={}", TableId::MAX)));
        }
        if self.columns == 0 || self.columns > ColumnId::MAX as usize {
            return Err(invalid(format!("columns must lie in 1..={}", ColumnId::MAX)));
        }
        if self.rows < self.txn_threads {
            return Err(invalid("every transactional thread needs at least one row to write"));
        }
        if self.max_distinct == 0 || self.wide_distinct == 0 {
            return Err(invalid("distinct counts must be positive"));
        }
        Ok(())
    }

    pub fn txn_queries(&self) -> usize {
        self.txn_threads * self.txn_queries_per_thread
    }

    pub fn anl_queries(&self) -> usize {
        self.anl_threads * self.anl_queries_per_thread
    }
}

/// Everything a run needs, fully materialized.
#[derive(Debug, Clone)]
pub struct Workload {
    pub spec: WorkloadSpec,
    /// Initial database state.
    pub tables: Vec<NsmTable>,
    /// `domains[t][c]` lists the values column `c` of table `t` draws from.
    pub domains: Vec<Vec<Vec<Value>>>,
    /// Per transactional thread, its queries in issue order.
    pub txn_streams: Vec<Vec<Vec<TxnOp>>>,
    /// Per analytical thread, its queries in issue order.
    pub anl_streams: Vec<Vec<QueryPlan>>,
}

impl Workload {
    pub fn columns(&self) -> Vec<ColumnRef> {
        (0..self.spec.tables)
            .flat_map(|t| (0..self.spec.columns).map(move |c| ColumnRef::new(t as TableId, c as ColumnId)))
            .collect()
    }

    /// Write operations over all streams; each one becomes a log entry.
    pub fn write_ops(&self) -> usize {
        self.txn_streams.iter().flatten().flatten().filter(|op| op.is_write()).count()
    }

    /// Queries evaluated once every update has been applied.
    pub fn final_pass(&self) -> Vec<QueryPlan> {
        self.anl_streams.iter().flatten().cloned().collect()
    }
}

fn domain(rng: &mut ChaCha8Rng, spec: &WorkloadSpec, ordinal: usize) -> Vec<Value> {
    let n = if rng.gen_bool(spec.wide_column_fraction) {
        spec.wide_distinct
    } else {
        rng.gen_range(spec.max_distinct.min(2)..=spec.max_distinct)
    };
    let stride = 1 + (ordinal as Value % 7);
    (0..n as Value).map(|k| k * stride - 10).collect()
}

fn txn_query(rng: &mut ChaCha8Rng, w: &Workload, thread: usize) -> Vec<TxnOp> {
    let s = &w.spec;
    (0..s.ops_per_txn)
        .map(|_| {
            let t = rng.gen_range(0..s.tables);
            let c = rng.gen_range(0..s.columns);
            if rng.gen_bool(s.update_ratio) {
                let owned = (s.rows - thread).div_ceil(s.txn_threads);
                let row = thread + s.txn_threads * rng.gen_range(0..owned);
                let v = *w.domains[t][c].choose(rng).expect("domains are non-empty");
                TxnOp::Modify(RecordKey::new(t as TableId, row as u64, c as ColumnId), v)
            } else {
                let row = rng.gen_range(0..s.rows);
                TxnOp::Read(RecordKey::new(t as TableId, row as u64, c as ColumnId))
            }
        })
        .collect()
}

fn random_column(rng: &mut ChaCha8Rng, s: &WorkloadSpec) -> ColumnRef {
    ColumnRef::new(rng.gen_range(0..s.tables) as TableId, rng.gen_range(0..s.columns) as ColumnId)
}

fn anl_query(rng: &mut ChaCha8Rng, w: &Workload) -> QueryPlan {
    let s = &w.spec;
    if rng.gen_bool(s.join_fraction) {
        let (a, b) = (random_column(rng, s), random_column(rng, s));
        return QueryPlan::Aggregate {
            func: AggFn::Count,
            input: Box::new(QueryPlan::HashJoin { left: Box::new(QueryPlan::Scan(a)), right: Box::new(QueryPlan::Scan(b)) }),
        };
    }
    let t = rng.gen_range(0..s.tables) as TableId;
    let scan = ColumnRef::new(t, rng.gen_range(0..s.columns) as ColumnId);
    let fcol = ColumnRef::new(t, rng.gen_range(0..s.columns) as ColumnId);
    let dom = &w.domains[t as usize][fcol.column_id as usize];
    let pred = Predicate { column: fcol, op: *CmpOp::ALL.choose(rng).expect("non-empty"), constant: *dom.choose(rng).expect("non-empty") };
    QueryPlan::Aggregate {
        func: *AggFn::ALL.choose(rng).expect("non-empty"),
        input: Box::new(QueryPlan::Filter { pred, input: Box::new(QueryPlan::Scan(scan)) }),
    }
}

/// Builds the workload for `spec`. The same spec always yields the same
/// workload.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload, Error> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let domains: Vec<Vec<Vec<Value>>> =
        (0..spec.tables).map(|t| (0..spec.columns).map(|c| domain(&mut rng, spec, t * spec.columns + c)).collect()).collect();
    let mut tables = Vec::with_capacity(spec.tables);
    for (t, doms) in domains.iter().enumerate() {
        let rows = (0..spec.rows).map(|_| doms.iter().map(|d| *d.choose(&mut rng).expect("non-empty")).collect()).collect();
        tables.push(NsmTable::from_rows(t as TableId, spec.columns, rows)?);
    }
    let mut w = Workload { spec: spec.clone(), tables, domains, txn_streams: Vec::new(), anl_streams: Vec::new() };
    // Each stream gets its own generator so resizing one class leaves the
    // other untouched.
    for th in 0..spec.txn_threads {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x7478_6e00 + th as u64));
        let stream = (0..spec.txn_queries_per_thread).map(|_| txn_query(&mut r, &w, th)).collect();
        w.txn_streams.push(stream);
    }
    for th in 0..spec.anl_threads {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x616e_6c00 + th as u64));
        let stream = (0..spec.anl_queries_per_thread).map(|_| anl_query(&mut r, &w)).collect();
        w.anl_streams.push(stream);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorkloadSpec {
        WorkloadSpec { txn_queries_per_thread: 50, rows: 100, ..WorkloadSpec::default() }
    }

    #[test]
    fn same_seed_same_streams() {
        let a = generate_workload(&WorkloadSpec { seed: 7, ..small() }).unwrap();
        let b = generate_workload(&WorkloadSpec { seed: 7, ..small() }).unwrap();
        assert_eq!(a.txn_streams, b.txn_streams);
        assert_eq!(a.anl_streams, b.anl_streams);
        assert_eq!(a.tables, b.tables);
    }

    #[test]
    fn update_ratio_bounds_writes() {
        let w = generate_workload(&WorkloadSpec { update_ratio: 0.0, ..small() }).unwrap();
        assert_eq!(w.write_ops(), 0);
        let s = WorkloadSpec { update_ratio: 1.0, ..small() };
        let w = generate_workload(&s).unwrap();
        assert_eq!(w.write_ops(), s.txn_queries() * s.ops_per_txn);
    }

    #[test]
    fn writers_are_disjoint() {
        let w = generate_workload(&small()).unwrap();
        for (th, stream) in w.txn_streams.iter().enumerate() {
            for op in stream.iter().flatten() {
                if let TxnOp::Modify(k, _) = op {
                    assert_eq!(k.row_id as usize % w.spec.txn_threads, th);
                }
            }
        }
    }

    #[test]
    fn narrow_columns_by_default() {
        let w = generate_workload(&small()).unwrap();
        let mut sizes: Vec<usize> = w.domains.iter().flatten().map(Vec::len).collect();
        sizes.sort_unstable();
        assert!(sizes[sizes.len() / 2] <= 32);
        for plan in w.anl_streams.iter().flatten() {
            plan.validate().unwrap();
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(generate_workload(&WorkloadSpec { update_ratio: 1.5, ..small() }), Err(Error::InvalidSpec(_))));
        assert!(matches!(generate_workload(&WorkloadSpec { rows: 2, ..small() }), Err(Error::InvalidSpec(_))));
        assert!(matches!(generate_workload(&WorkloadSpec { ops_per_txn: 0, ..small() }), Err(Error::InvalidSpec(_))));
    }
}
