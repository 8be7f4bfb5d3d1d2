//! Decomposition of a plan into a DAG of segment tasks.
//!
//! Scan/filter/select chains are fused into one task per segment of at most
//! `segment_rows` rows of the scanned column; a segment never crosses a
//! partition, so every task is homed in the vault holding its rows. An
//! aggregate is folded partially inside its producer tasks and finished by
//! a single combine task. A join's build-side tasks all precede its
//! probe-side tasks.

use crate::storage::{encoded_bytes, ColumnRef};
use crate::vault::{Origin, Step, TopologyConfig, VaultId};

use super::placement::PlacementPlan;
use super::plan::{AggFn, QueryPlan};
use super::AnalyticsError;

pub type TaskId = usize;

/// What a segment task does with its pipeline output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentRole {
    Output,
    Build(usize),
    Probe(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    /// Runs pipeline `pipeline` over rows `[start, end)`.
    Segment { pipeline: usize, start: u64, end: u64, role: SegmentRole },
    /// Builds join `join`'s table from the rows of its input tasks.
    Build { join: usize },
    /// Probes join `join` with the rows of its input tasks.
    Probe { join: usize },
    /// Merges partial aggregates of its inputs.
    Combine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    pub home_vault: VaultId,
    /// Tasks whose output this task consumes.
    pub inputs: Vec<TaskId>,
    /// Tasks that must finish first; a superset of `inputs`.
    pub deps: Vec<TaskId>,
    /// Aggregate folded into this task's output.
    pub fused_agg: Option<AggFn>,
    /// Rows this task processes, for costing.
    pub rows: u64,
}

/// A fused single-table chain of scan, filters and projections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipeline {
    pub plan: QueryPlan,
    pub scan: ColumnRef,
    /// Every column read per row.
    pub columns: Vec<ColumnRef>,
    /// Columns whose values must be decoded (projection or carried value).
    pub decoded: Vec<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDag {
    pub tasks: Vec<Task>,
    pub pipelines: Vec<Pipeline>,
    /// Build tasks of each join.
    pub joins: Vec<Vec<TaskId>>,
    /// Tasks producing the final result.
    pub outputs: Vec<TaskId>,
    pub root_agg: Option<AggFn>,
}

impl TaskDag {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// A DAG of bare tasks, for exercising schedulers.
    pub fn from_tasks(tasks: Vec<Task>) -> Self {
        TaskDag { tasks, pipelines: Vec::new(), joins: Vec::new(), outputs: Vec::new(), root_agg: None }
    }
}

struct Lowering<'a> {
    placement: &'a PlacementPlan,
    segment_rows: usize,
    dag: TaskDag,
}

fn pipeline_of(plan: &QueryPlan) -> Pipeline {
    fn scan_and_select(p: &QueryPlan) -> (ColumnRef, Option<Vec<ColumnRef>>) {
        match p {
            QueryPlan::Scan(c) => (*c, None),
            QueryPlan::Filter { input, .. } => scan_and_select(input),
            QueryPlan::Select { columns, input } => (scan_and_select(input).0, Some(columns.clone())),
            _ => unreachable!("pipelines hold only scan, filter and select"),
        }
    }
    // outermost SELECT decides the output values
    let (scan, select) = match plan {
        QueryPlan::Select { columns, input } => (scan_and_select(input).0, Some(columns.clone())),
        other => scan_and_select(other),
    };
    let decoded = select.unwrap_or_else(|| vec![scan]);
    Pipeline { plan: plan.clone(), scan, columns: plan.columns(), decoded }
}

impl Lowering<'_> {
    fn push(&mut self, kind: TaskKind, home_vault: VaultId, inputs: Vec<TaskId>, deps: Vec<TaskId>, rows: u64) -> TaskId {
        let id = self.dag.tasks.len();
        self.dag.tasks.push(Task { id, kind, home_vault, inputs, deps, fused_agg: None, rows });
        id
    }

    fn home_of(&self, deps: &[TaskId]) -> VaultId {
        deps.first().map_or(0, |&d| self.dag.tasks[d].home_vault)
    }

    fn rows_of(&self, ids: &[TaskId]) -> u64 {
        ids.iter().map(|&i| self.dag.tasks[i].rows).sum()
    }

    fn pipeline(&mut self, plan: &QueryPlan, role: SegmentRole, extra_deps: &[TaskId]) -> Result<Vec<TaskId>, AnalyticsError> {
        let pipe = pipeline_of(plan);
        for c in &pipe.columns {
            if self.placement.get(*c).is_none() {
                return Err(AnalyticsError::UnplacedColumn(*c));
            }
        }
        let scan = self.placement.get(pipe.scan).expect("checked above").clone();
        let idx = self.dag.pipelines.len();
        self.dag.pipelines.push(pipe);
        let mut ids = Vec::new();
        for part in &scan.partitions {
            let mut start = part.start_row;
            while start < part.end_row() {
                let end = (start + self.segment_rows as u64).min(part.end_row());
                let kind = TaskKind::Segment { pipeline: idx, start, end, role };
                ids.push(self.push(kind, part.vault, Vec::new(), extra_deps.to_vec(), end - start));
                start = end;
            }
        }
        Ok(ids)
    }

    fn lower(&mut self, plan: &QueryPlan) -> Result<Vec<TaskId>, AnalyticsError> {
        if plan.table().is_some() {
            return self.pipeline(plan, SegmentRole::Output, &[]);
        }
        match plan {
            QueryPlan::HashJoin { left, right } => {
                let j = self.dag.joins.len();
                self.dag.joins.push(Vec::new());
                let builds = if left.table().is_some() {
                    self.pipeline(left, SegmentRole::Build(j), &[])?
                } else {
                    let p = self.lower(left)?;
                    let (home, rows) = (self.home_of(&p), self.rows_of(&p));
                    vec![self.push(TaskKind::Build { join: j }, home, p.clone(), p, rows)]
                };
                self.dag.joins[j] = builds.clone();
                if right.table().is_some() {
                    self.pipeline(right, SegmentRole::Probe(j), &builds)
                } else {
                    let p = self.lower(right)?;
                    let (home, rows) = (self.home_of(&p), self.rows_of(&p));
                    let deps = p.iter().chain(&builds).copied().collect();
                    Ok(vec![self.push(TaskKind::Probe { join: j }, home, p, deps, rows)])
                }
            }
            QueryPlan::Aggregate { func, input } => {
                let p = self.lower(input)?;
                for &t in &p {
                    self.dag.tasks[t].fused_agg = Some(*func);
                }
                let home = self.home_of(&p);
                let n = p.len() as u64;
                Ok(vec![self.push(TaskKind::Combine, home, p.clone(), p, n)])
            }
            _ => unreachable!("single-table plans are handled above"),
        }
    }
}

/// Splits `plan` into tasks over the placed columns.
pub fn decompose(plan: &QueryPlan, placement: &PlacementPlan, cfg: &TopologyConfig) -> Result<TaskDag, AnalyticsError> {
    plan.validate()?;
    let mut l = Lowering {
        placement,
        segment_rows: cfg.segment_rows,
        dag: TaskDag { tasks: Vec::new(), pipelines: Vec::new(), joins: Vec::new(), outputs: Vec::new(), root_agg: None },
    };
    let outputs = l.lower(plan)?;
    l.dag.outputs = outputs;
    if let QueryPlan::Aggregate { func, .. } = plan {
        l.dag.root_agg = Some(*func);
    }
    Ok(l.dag)
}

/// Dictionary facts the cost model needs per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictInfo {
    pub len: usize,
    pub width_bits: u32,
}

/// Work a PIM thread in `exec_vault` performs to run `task`.
///
/// Segment tasks stream every column they read from the vaults holding the
/// rows. Decoding needs the dictionary: a local copy is free, a small remote
/// dictionary is fetched once, a large one costs a remote lookup per row.
pub fn task_steps(
    dag: &TaskDag,
    task: &Task,
    exec_vault: VaultId,
    placement: &PlacementPlan,
    dict: &dyn Fn(ColumnRef) -> DictInfo,
    cfg: &TopologyConfig,
) -> Vec<Step> {
    let origin = Origin::Vault(exec_vault);
    let mut steps = Vec::new();
    let per_row = cfg.pim_ns_per_tuple;
    match &task.kind {
        TaskKind::Segment { pipeline, start, end, role } => {
            let pipe = &dag.pipelines[*pipeline];
            let rows = end - start;
            for c in &pipe.columns {
                let info = dict(*c);
                let cp = placement.get(*c).expect("decomposed columns are placed");
                for (_, part, n) in cp.overlapping(*start, *end) {
                    steps.push(Step::Access { vault: part.vault, bytes: encoded_bytes(n, info.width_bits), origin });
                }
            }
            let needs_values = task.fused_agg != Some(AggFn::Count) || !matches!(role, SegmentRole::Output);
            if needs_values {
                for c in &pipe.decoded {
                    let info = dict(*c);
                    let cp = placement.get(*c).expect("decomposed columns are placed");
                    if cp.has_dict(exec_vault) {
                        continue;
                    }
                    if info.len <= cfg.dict_replication_threshold {
                        steps.push(Step::Access { vault: cp.dict_owner, bytes: info.len as u64 * 8, origin });
                    } else {
                        steps.push(Step::Random { vault: cp.dict_owner, origin, count: rows });
                    }
                }
            }
            let mut ops = pipe.columns.len() as f64;
            if !matches!(role, SegmentRole::Output) {
                ops += 1.0;
            }
            steps.push(Step::Compute { ns: rows as f64 * per_row * ops });
        }
        TaskKind::Build { .. } | TaskKind::Probe { .. } => steps.push(Step::Compute { ns: task.rows as f64 * per_row }),
        TaskKind::Combine => steps.push(Step::Compute { ns: task.inputs.len() as f64 * per_row }),
    }
    steps
}
