//! Operator execution over snapshot columns.
//!
//! Inside a segment task the pipeline runs as a chain of pull-based
//! iterators (scan, then filters) over row ids; projection decodes at the
//! end. Filters compare codes against bounds derived from the dictionary,
//! which is exact because the encoding preserves order. Deleted rows carry
//! the tombstone code and never leave the scan.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use crate::application::ColumnData;
use crate::storage::{Code, ColumnRef, Dictionary, Value, TOMBSTONE};

use super::plan::{AggFn, CmpOp, Predicate, QueryPlan};
use super::scheduler::topological_order;
use super::task::{SegmentRole, Task, TaskDag, TaskKind};
use super::AnalyticsError;

/// Columns visible to a query.
pub trait ColumnSource {
    fn column(&self, c: ColumnRef) -> Option<&ColumnData>;
}

impl ColumnSource for BTreeMap<ColumnRef, ColumnData> {
    fn column(&self, c: ColumnRef) -> Option<&ColumnData> {
        self.get(&c)
    }
}

impl ColumnSource for BTreeMap<ColumnRef, &ColumnData> {
    fn column(&self, c: ColumnRef) -> Option<&ColumnData> {
        self.get(&c).copied()
    }
}

impl ColumnSource for BTreeMap<ColumnRef, std::sync::Arc<ColumnData>> {
    fn column(&self, c: ColumnRef) -> Option<&ColumnData> {
        self.get(&c).map(|a| a.as_ref())
    }
}

/// Row-addressed reads over a partitioned column.
struct Reader<'a> {
    data: &'a ColumnData,
    // first row of each partition, plus the total at the end
    starts: Vec<u64>,
}

impl<'a> Reader<'a> {
    fn new(data: &'a ColumnData) -> Self {
        let mut starts = Vec::with_capacity(data.partitions.len() + 1);
        let mut acc = 0u64;
        for p in &data.partitions {
            starts.push(acc);
            acc += p.len() as u64;
        }
        starts.push(acc);
        Reader { data, starts }
    }

    fn locate(&self, row: u64) -> Result<(usize, usize), AnalyticsError> {
        let total = *self.starts.last().expect("non-empty");
        if row >= total {
            return Err(AnalyticsError::RowOutOfRange { row, rows: total });
        }
        let p = self.starts.partition_point(|&s| s <= row) - 1;
        Ok((p, (row - self.starts[p]) as usize))
    }

    fn code(&self, row: u64) -> Result<(Code, &'a Dictionary), AnalyticsError> {
        let (p, off) = self.locate(row)?;
        let part = &self.data.partitions[p];
        Ok((part.codes[off], &part.dict))
    }

    fn value(&self, row: u64) -> Result<Option<Value>, AnalyticsError> {
        let (code, dict) = self.code(row)?;
        if code == TOMBSTONE {
            return Ok(None);
        }
        Ok(Some(dict.decode(code)?))
    }
}

/// Codes `c` of `dict` for which `decode(c) op k` holds, as an inclusive
/// range test (`Ne` is the complement of the `Eq` range).
pub fn code_range(dict: &Dictionary, op: CmpOp, k: Value) -> (Range<Code>, bool) {
    let lb = dict.lower_bound(k);
    let ub = dict.upper_bound(k);
    let n = dict.len() as Code;
    match op {
        CmpOp::Lt => (0..lb, false),
        CmpOp::Le => (0..ub, false),
        CmpOp::Gt => (ub..n, false),
        CmpOp::Ge => (lb..n, false),
        CmpOp::Eq => (lb..ub, false),
        CmpOp::Ne => (lb..ub, true),
    }
}

/// Evaluates a predicate on a code.
pub fn code_matches(dict: &Dictionary, code: Code, op: CmpOp, k: Value) -> bool {
    if code == TOMBSTONE {
        return false;
    }
    let (r, negate) = code_range(dict, op, k);
    r.contains(&code) != negate
}

/// Pull-based row iterator.
trait RowIter {
    fn next_row(&mut self) -> Result<Option<u64>, AnalyticsError>;
}

struct ScanOp<'a> {
    reader: Reader<'a>,
    rows: Range<u64>,
}

impl RowIter for ScanOp<'_> {
    fn next_row(&mut self) -> Result<Option<u64>, AnalyticsError> {
        for r in self.rows.by_ref() {
            if self.reader.code(r)?.0 != TOMBSTONE {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }
}

struct FilterOp<'a> {
    child: Box<dyn RowIter + 'a>,
    reader: Reader<'a>,
    pred: Predicate,
}

impl RowIter for FilterOp<'_> {
    fn next_row(&mut self) -> Result<Option<u64>, AnalyticsError> {
        while let Some(r) = self.child.next_row()? {
            let (code, dict) = self.reader.code(r)?;
            if code_matches(dict, code, self.pred.op, self.pred.constant) {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }
}

fn source_col(src: &dyn ColumnSource, c: ColumnRef) -> Result<&ColumnData, AnalyticsError> {
    src.column(c).ok_or(AnalyticsError::MissingColumn(c))
}

fn build_iter<'a>(plan: &QueryPlan, rows: Range<u64>, src: &'a dyn ColumnSource) -> Result<Box<dyn RowIter + 'a>, AnalyticsError> {
    Ok(match plan {
        QueryPlan::Scan(c) => Box::new(ScanOp { reader: Reader::new(source_col(src, *c)?), rows }),
        QueryPlan::Filter { pred, input } => Box::new(FilterOp {
            child: build_iter(input, rows, src)?,
            reader: Reader::new(source_col(src, pred.column)?),
            pred: *pred,
        }),
        QueryPlan::Select { input, .. } => build_iter(input, rows, src)?,
        _ => unreachable!("pipelines hold only scan, filter and select"),
    })
}

/// Partial aggregate over carried values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggState {
    pub func: AggFn,
    pub count: u64,
    pub sum: i128,
    pub min: Option<Value>,
    pub max: Option<Value>,
}

impl AggState {
    pub fn new(func: AggFn) -> Self {
        AggState { func, count: 0, sum: 0, min: None, max: None }
    }

    pub fn add(&mut self, v: Value) {
        self.count += 1;
        self.sum += v as i128;
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }

    pub fn merge(&mut self, o: &AggState) {
        self.count += o.count;
        self.sum += o.sum;
        self.min = match (self.min, o.min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.max = match (self.max, o.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn finish(&self) -> Option<i128> {
        match self.func {
            AggFn::Sum => Some(self.sum),
            AggFn::Count => Some(self.count as i128),
            AggFn::Min => self.min.map(i128::from),
            AggFn::Max => self.max.map(i128::from),
        }
    }
}

/// Output of one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Intermediate {
    /// Rows whose first value is the carried value.
    Rows(Vec<Vec<Value>>),
    Partial(AggState),
    /// Build-side multiplicities by key.
    Table(HashMap<Value, u64>),
}

/// Final answer of a query, in canonical form: rows are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryResult {
    Scalar(Option<i128>),
    Rows(Vec<Vec<Value>>),
}

fn rows_of(i: &Intermediate) -> &[Vec<Value>] {
    match i {
        Intermediate::Rows(r) => r,
        _ => panic!("task input is not a row set"),
    }
}

fn emit(rows: Vec<Vec<Value>>, agg: Option<AggFn>) -> Intermediate {
    match agg {
        Some(f) => {
            let mut s = AggState::new(f);
            for r in &rows {
                s.add(r[0]);
            }
            Intermediate::Partial(s)
        }
        None => Intermediate::Rows(rows),
    }
}

fn probe(rows: &[Vec<Value>], tables: &[&Intermediate]) -> Vec<Vec<Value>> {
    let mut out = Vec::new();
    for r in rows {
        let key = r[0];
        let hits: u64 = tables
            .iter()
            .map(|t| match t {
                Intermediate::Table(m) => m.get(&key).copied().unwrap_or(0),
                _ => panic!("join build task did not produce a table"),
            })
            .sum();
        for _ in 0..hits {
            out.push(vec![key]);
        }
    }
    out
}

fn build(rows: &[Vec<Value>]) -> Intermediate {
    let mut m = HashMap::new();
    for r in rows {
        *m.entry(r[0]).or_insert(0) += 1;
    }
    Intermediate::Table(m)
}

/// Runs the task's pipeline over its segment and returns the decoded rows.
fn run_segment(dag: &TaskDag, pipeline: usize, rows: Range<u64>, src: &dyn ColumnSource) -> Result<Vec<Vec<Value>>, AnalyticsError> {
    let pipe = &dag.pipelines[pipeline];
    let mut it = build_iter(&pipe.plan, rows, src)?;
    let readers: Vec<Reader> = pipe.decoded.iter().map(|c| source_col(src, *c).map(Reader::new)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    'rows: while let Some(r) = it.next_row()? {
        let mut vals = Vec::with_capacity(readers.len());
        for rd in &readers {
            match rd.value(r)? {
                Some(v) => vals.push(v),
                None => continue 'rows,
            }
        }
        out.push(vals);
    }
    Ok(out)
}

/// Executes one task given its inputs' outputs (indexed by task id).
pub fn execute_operator(dag: &TaskDag, task: &Task, src: &dyn ColumnSource, done: &[Option<Intermediate>]) -> Result<Intermediate, AnalyticsError> {
    let input = |id: usize| done[id].as_ref().ok_or(AnalyticsError::UnknownTask(id));
    let tables = |j: usize| -> Result<Vec<&Intermediate>, AnalyticsError> { dag.joins[j].iter().map(|&b| input(b)).collect() };
    Ok(match &task.kind {
        TaskKind::Segment { pipeline, start, end, role } => {
            let rows = run_segment(dag, *pipeline, *start..*end, src)?;
            match role {
                SegmentRole::Output => emit(rows, task.fused_agg),
                SegmentRole::Build(_) => build(&rows),
                SegmentRole::Probe(j) => emit(probe(&rows, &tables(*j)?), task.fused_agg),
            }
        }
        TaskKind::Build { .. } => {
            let mut all = Vec::new();
            for &i in &task.inputs {
                all.extend_from_slice(rows_of(input(i)?));
            }
            build(&all)
        }
        TaskKind::Probe { join } => {
            let t = tables(*join)?;
            let mut all = Vec::new();
            for &i in &task.inputs {
                all.extend(probe(rows_of(input(i)?), &t));
            }
            emit(all, task.fused_agg)
        }
        TaskKind::Combine => {
            let mut s = AggState::new(dag.root_agg.expect("combine tasks exist only under an aggregate"));
            for &i in &task.inputs {
                match input(i)? {
                    Intermediate::Partial(p) => s.merge(p),
                    _ => panic!("combine input is not a partial aggregate"),
                }
            }
            Intermediate::Partial(s)
        }
    })
}

/// Executes every task of the DAG and assembles the final result.
pub fn run_dag(dag: &TaskDag, src: &dyn ColumnSource) -> Result<QueryResult, AnalyticsError> {
    let mut done: Vec<Option<Intermediate>> = vec![None; dag.len()];
    for id in topological_order(&dag.tasks)? {
        done[id] = Some(execute_operator(dag, &dag.tasks[id], src, &done)?);
    }
    if let Some(f) = dag.root_agg {
        let mut s = AggState::new(f);
        for &o in &dag.outputs {
            if let Some(Intermediate::Partial(p)) = &done[o] {
                s.merge(p);
            }
        }
        return Ok(QueryResult::Scalar(s.finish()));
    }
    let mut rows = Vec::new();
    for &o in &dag.outputs {
        rows.extend_from_slice(rows_of(done[o].as_ref().expect("all tasks ran")));
    }
    rows.sort_unstable();
    Ok(QueryResult::Rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::placement::{PlacementPlan, PlacementStrategy};
    use crate::analytics::task::decompose;
    use crate::storage::EncodedColumn;
    use crate::vault::TopologyConfig;
    use proptest::prelude::*;

    fn data(values: &[Option<Value>], parts: usize) -> ColumnData {
        let whole = EncodedColumn::encode_values(values);
        let n = values.len();
        let mut partitions = Vec::new();
        let mut start = 0;
        for i in 0..parts {
            let len = n / parts + usize::from(i < n % parts);
            partitions.push(EncodedColumn::new(whole.codes[start..start + len].to_vec(), whole.dict.clone()));
            start += len;
        }
        ColumnData { version: 0, partitions }
    }

    fn run(plan: &str, cols: &[Vec<Option<Value>>], strategy: PlacementStrategy) -> QueryResult {
        let cfg = TopologyConfig { segment_rows: 4, ..TopologyConfig::default() };
        let plan = QueryPlan::parse(plan).unwrap();
        let meta: Vec<_> = cols.iter().enumerate().map(|(i, c)| (ColumnRef::new(0, i as u16), c.len(), 8)).collect();
        let placement = PlacementPlan::build(&meta, strategy, &cfg);
        let src: BTreeMap<ColumnRef, ColumnData> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let cr = ColumnRef::new(0, i as u16);
                (cr, data(c, placement.get(cr).unwrap().partitions.len()))
            })
            .collect();
        let dag = decompose(&plan, &placement, &cfg).unwrap();
        run_dag(&dag, &src).unwrap()
    }

    fn col(v: &[Value]) -> Vec<Option<Value>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn filter_lt() {
        let r = run("SELECT T0.C1 (FILTER col=T0.C0 lt 25 (SCAN T0.C0))", &[col(&[10, 20, 30]), col(&[0, 1, 2])], PlacementStrategy::Local);
        assert_eq!(r, QueryResult::Rows(vec![vec![0], vec![1]]));
    }

    #[test]
    fn sum() {
        assert_eq!(run("AGG sum (SCAN T0.C0)", &[col(&[1, 2, 3])], PlacementStrategy::Hybrid), QueryResult::Scalar(Some(6)));
    }

    #[test]
    fn join_one_match() {
        let r = run("JOIN (SCAN T0.C0) (SCAN T0.C1)", &[col(&[10, 20]), col(&[20, 30])], PlacementStrategy::Distributed);
        assert_eq!(r, QueryResult::Rows(vec![vec![20]]));
    }

    #[test]
    fn tombstones_are_skipped() {
        let r = run("AGG count (SCAN T0.C0)", &[vec![Some(1), None, Some(3)]], PlacementStrategy::Local);
        assert_eq!(r, QueryResult::Scalar(Some(2)));
        let r = run("AGG min (FILTER col=T0.C0 gt 100 (SCAN T0.C0))", &[col(&[1, 2])], PlacementStrategy::Local);
        assert_eq!(r, QueryResult::Scalar(None));
    }

    #[test]
    fn code_ranges() {
        let d = Dictionary::from_values([10, 20, 30]);
        let hits = |op, k| (0..3).filter(|&c| code_matches(&d, c, op, k)).collect::<Vec<Code>>();
        assert_eq!(hits(CmpOp::Lt, 25), vec![0, 1]);
        assert_eq!(hits(CmpOp::Le, 20), vec![0, 1]);
        assert_eq!(hits(CmpOp::Gt, 20), vec![2]);
        assert_eq!(hits(CmpOp::Ge, 5), vec![0, 1, 2]);
        assert_eq!(hits(CmpOp::Eq, 15), Vec::<Code>::new());
        assert_eq!(hits(CmpOp::Ne, 20), vec![0, 2]);
        assert!(!code_matches(&d, TOMBSTONE, CmpOp::Ne, 0));
    }

    proptest! {
        #[test]
        fn code_predicate_matches_decoded(vals in prop::collection::btree_set(-50i64..50, 1..20), op in 0usize..6, k in -60i64..60) {
            let d = Dictionary::from_values(vals.iter().copied());
            let op = CmpOp::ALL[op];
            for (c, v) in d.values().iter().enumerate() {
                prop_assert_eq!(code_matches(&d, c as Code, op, k), op.eval(*v, k));
            }
        }

        #[test]
        fn placement_does_not_change_answers(a in prop::collection::vec(prop::option::weighted(0.9, 0i64..10), 1..40), k in 0i64..10) {
            let b: Vec<Option<Value>> = a.iter().map(|v| v.map(|x| x * 3 % 7)).collect();
            for plan in [
                format!("AGG sum (FILTER col=T0.C1 ge {k} (SCAN T0.C0))"),
                "AGG count (JOIN (SCAN T0.C0) (SCAN T0.C1))".to_string(),
                format!("SELECT T0.C1,T0.C0 (FILTER col=T0.C0 ne {k} (SCAN T0.C1))"),
            ] {
                let l = run(&plan, &[a.clone(), b.clone()], PlacementStrategy::Local);
                prop_assert_eq!(&l, &run(&plan, &[a.clone(), b.clone()], PlacementStrategy::Distributed));
                prop_assert_eq!(&l, &run(&plan, &[a.clone(), b.clone()], PlacementStrategy::Hybrid));
            }
        }
    }
}
